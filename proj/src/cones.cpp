#include "nccm/cones.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nccm/error.hpp"
#include "nccm/extended.hpp"
#include "nccm/linprog.hpp"
#include "nccm/recession.hpp"

namespace nccm {

namespace {

constexpr double kRankTol = 1e-10;
constexpr double kSnap = 1e-13;

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double sup_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> unit(std::vector<double> v) {
  double m = sup_norm(v);
  for (double& x : v) {
    if (std::abs(x) < kSnap * m) x = 0.0;
  }
  double n = norm2(v);
  for (double& x : v) x /= n;
  return v;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::MatrixXd rows_matrix(const std::vector<std::vector<double>>& rows, int n) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < n; ++j) m(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  return m;
}

int numeric_rank(const Eigen::VectorXd& sv) {
  if (sv.size() == 0 || sv[0] == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    double rel = sv[i] / sv[0];
    require(!(rel > 1e-12 && rel < 1e-8), ErrorCode::kDegenerateCone,
            "ambiguous numerical rank (relative singular value " + std::to_string(rel) + ")");
    if (rel > kRankTol) ++r;
  }
  return r;
}

void push_unique(std::vector<std::vector<double>>& out, std::vector<double> v) {
  for (const auto& w : out) {
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) d = std::max(d, std::abs(v[i] - w[i]));
    if (d < 1e-9) return;
  }
  out.push_back(std::move(v));
}

// Calls fn on every k-subset of {0, ..., m - 1}.
template <typename Fn>
void for_each_subset(std::size_t m, std::size_t k, Fn fn) {
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  if (k > m) return;
  while (true) {
    fn(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == m - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

const char* leaf_tag(std::size_t leaf) {
  static thread_local std::string s;
  s = "leaf " + std::to_string(leaf);
  return s.c_str();
}

}  // namespace

Cone Cone::from_generators(int n, std::vector<std::vector<double>> generators) {
  require(n >= 1, ErrorCode::kDimensionMismatch, "cone dimension must be positive");
  Cone c;
  c.n_ = n;
  for (auto& g : generators) {
    require(g.size() == static_cast<std::size_t>(n), ErrorCode::kConeMismatch, "generator has wrong dimension");
    for (double v : g) require(std::isfinite(v), ErrorCode::kDegenerateCone, "generator entries must be finite");
    if (sup_norm(g) > 1e-14) c.generators_.push_back(std::move(g));
  }

  const auto nn = static_cast<std::size_t>(n);
  if (c.generators_.empty()) {
    c.span_ = Eigen::MatrixXd(n, 0);
    for (std::size_t i = 0; i < nn; ++i) {
      std::vector<double> e(nn, 0.0);
      e[i] = 1.0;
      c.dual_.push_back(e);
      e[i] = -1.0;
      c.dual_.push_back(e);
    }
    return c;
  }

  std::vector<std::vector<double>> units;
  for (const auto& g : c.generators_) units.push_back(unit(g));
  const Eigen::MatrixXd g = rows_matrix(units, n);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g, Eigen::ComputeFullV);
  const int r = numeric_rank(svd.singularValues());
  const Eigen::MatrixXd& v = svd.matrixV();
  c.span_ = v.leftCols(r);

  // Lineality of the polar is the orthogonal complement of the span.
  for (int j = r; j < n; ++j) {
    auto l = unit(to_std(v.col(j)));
    push_unique(c.dual_, l);
    for (double& x : l) x = -x;
    push_unique(c.dual_, l);
  }

  // Extreme rays of the pointed part, which lives in the span.
  const Eigen::MatrixXd b = c.span_;
  auto try_dir = [&](const Eigen::VectorXd& coeff) {
    Eigen::VectorXd y = b * coeff;
    for (double sgn : {1.0, -1.0}) {
      Eigen::VectorXd s = sgn * y;
      Eigen::VectorXd gy = g * s;
      if (gy.minCoeff() >= -1e-10 * s.norm()) push_unique(c.dual_, unit(to_std(s)));
    }
  };
  if (r == 1) {
    try_dir(Eigen::VectorXd::Ones(1));
  } else {
    for_each_subset(units.size(), static_cast<std::size_t>(r - 1), [&](const std::vector<std::size_t>& rows) {
      Eigen::MatrixXd gs(static_cast<Eigen::Index>(rows.size()), n);
      for (std::size_t i = 0; i < rows.size(); ++i) gs.row(static_cast<Eigen::Index>(i)) = g.row(static_cast<Eigen::Index>(rows[i]));
      Eigen::MatrixXd m = gs * b;
      Eigen::JacobiSVD<Eigen::MatrixXd> s2(m, Eigen::ComputeFullV);
      const auto sv = s2.singularValues();
      int rank = 0;
      for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv[i] > kRankTol * std::max(1.0, sv[0])) ++rank;
      }
      if (rank != r - 1) return;
      try_dir(s2.matrixV().col(r - 1));
    });
  }
  return c;
}

Cone Cone::orthant(int n) {
  std::vector<std::vector<double>> g;
  for (int i = 0; i < n; ++i) {
    std::vector<double> e(static_cast<std::size_t>(n), 0.0);
    e[static_cast<std::size_t>(i)] = 1.0;
    g.push_back(e);
  }
  return from_generators(n, std::move(g));
}

double Cone::margin(std::span<const double> x) const {
  require(x.size() == static_cast<std::size_t>(n_), ErrorCode::kConeMismatch, "vector has wrong dimension");
  double m = ext::kPosInf;
  for (const auto& h : dual_) m = std::min(m, dot(h, x));
  return m;
}

bool Cone::contains(std::span<const double> x, double tol) const {
  return margin(x) >= -tol * (1.0 + sup_norm(x));
}

double Cone::conic_residual(std::span<const double> x) const {
  require(x.size() == static_cast<std::size_t>(n_), ErrorCode::kConeMismatch, "vector has wrong dimension");
  if (generators_.empty()) {
    double s = 0.0;
    for (double v : x) s += std::abs(v);
    return s;
  }
  std::vector<std::vector<double>> units;
  for (const auto& g : generators_) units.push_back(unit(g));
  return lp::conic_residual(units, std::vector<double>(x.begin(), x.end()));
}

bool Cone::contains_lp(std::span<const double> x, double tol) const {
  return conic_residual(x) <= tol * (1.0 + sup_norm(x));
}

Cone Cone::polar() const { return from_generators(n_, dual_); }

RandomCone::RandomCone(int n, std::vector<Cone> leaves) : n_(n), leaves_(std::move(leaves)) {
  for (const auto& c : leaves_) require(c.dim() == n, ErrorCode::kConeMismatch, "leaf cones must share a dimension");
}

RandomCone RandomCone::shared(const Cone& cone, std::size_t leaves) {
  return RandomCone(cone.dim(), std::vector<Cone>(leaves, cone));
}

bool RandomCone::solid() const {
  return std::all_of(leaves_.begin(), leaves_.end(), [](const Cone& c) { return c.solid(); });
}

RandomCone polar(const RandomCone& cone) {
  std::vector<Cone> out;
  out.reserve(cone.num_leaves());
  for (std::size_t l = 0; l < cone.num_leaves(); ++l) {
    try {
      out.push_back(cone.at(l).polar());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateCone) throw;
      throw Error(ErrorCode::kDegenerateCone, std::string(leaf_tag(l)) + ": " + e.what());
    }
  }
  return RandomCone(cone.dim(), std::move(out));
}

RandomCone random_cone(int n, int k, std::size_t leaves, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<Cone> out;
  for (std::size_t l = 0; l < leaves; ++l) {
    std::vector<std::vector<double>> g;
    while (static_cast<int>(g.size()) < k) {
      std::vector<double> v(static_cast<std::size_t>(n));
      for (double& x : v) x = unif(rng);
      if (sup_norm(v) > 0.1) g.push_back(v);
    }
    out.push_back(Cone::from_generators(n, std::move(g)));
  }
  return RandomCone(n, std::move(out));
}

ConeSelection ri_selection(const RandomCone& cone) {
  ConeSelection s;
  s.target = cone.solid() ? SelectionTarget::kInterior : SelectionTarget::kRelativeInterior;
  for (std::size_t l = 0; l < cone.num_leaves(); ++l) {
    std::vector<double> rho(static_cast<std::size_t>(cone.dim()), 0.0);
    double w = 1.0;
    for (const auto& g : cone.at(l).generators()) {
      w *= 0.5;
      auto u = unit(g);
      for (std::size_t i = 0; i < rho.size(); ++i) rho[i] += w * u[i];
    }
    s.z.push_back(std::move(rho));
  }
  affine_ball_radius(cone, s);
  return s;
}

std::vector<ConeSelection> castaing(const RandomCone& cone) {
  const std::size_t nl = cone.num_leaves();
  const auto n = static_cast<std::size_t>(cone.dim());
  std::size_t maxg = 0;
  for (std::size_t l = 0; l < nl; ++l) maxg = std::max(maxg, cone.at(l).generators().size());
  auto gen = [&](std::size_t l, std::size_t k) {
    const auto& g = cone.at(l).generators();
    return g.empty() ? std::vector<double>(n, 0.0) : unit(g[k % g.size()]);
  };

  std::vector<ConeSelection> out;
  for (std::size_t k = 0; k < maxg; ++k) {
    ConeSelection s;
    for (std::size_t l = 0; l < nl; ++l) s.z.push_back(gen(l, k));
    out.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < maxg; ++i) {
    for (std::size_t j = i + 1; j < maxg; ++j) {
      ConeSelection s;
      for (std::size_t l = 0; l < nl; ++l) {
        auto a = gen(l, i), b = gen(l, j);
        for (std::size_t t = 0; t < n; ++t) a[t] = 0.5 * (a[t] + b[t]);
        s.z.push_back(std::move(a));
      }
      out.push_back(std::move(s));
    }
  }
  const auto rho = ri_selection(cone);
  out.push_back(rho);
  for (std::size_t k = 0; k < maxg; ++k) {
    for (int m = 2; m <= 4; ++m) {
      ConeSelection s;
      s.target = rho.target;
      for (std::size_t l = 0; l < nl; ++l) {
        auto g = gen(l, k);
        for (std::size_t t = 0; t < n; ++t) g[t] = rho.z[l][t] / m + (1.0 - 1.0 / m) * g[t];
        s.z.push_back(std::move(g));
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<double> interior_ball_radius(const RandomCone& cone, const ConeSelection& point) {
  require(point.z.size() == cone.num_leaves(), ErrorCode::kConeMismatch, "selection needs one vector per leaf");
  std::vector<double> out;
  for (std::size_t l = 0; l < cone.num_leaves(); ++l) {
    const auto& c = cone.at(l);
    require(c.solid(), ErrorCode::kNotInterior, std::string(leaf_tag(l)) + ": cone has empty interior");
    double m = c.margin(point.z[l]);
    require(m > 0.0, ErrorCode::kNotInterior, std::string(leaf_tag(l)) + ": point is not interior");
    out.push_back(0.5 * m);
  }
  return out;
}

std::vector<AffineBall> affine_ball_radius(const RandomCone& cone, const ConeSelection& point) {
  require(point.z.size() == cone.num_leaves(), ErrorCode::kConeMismatch, "selection needs one vector per leaf");
  std::vector<AffineBall> out;
  for (std::size_t l = 0; l < cone.num_leaves(); ++l) {
    const auto& c = cone.at(l);
    const auto& x = point.z[l];
    require(x.size() == static_cast<std::size_t>(c.dim()), ErrorCode::kConeMismatch, "point has wrong dimension");
    const Eigen::MatrixXd& p = c.span_basis();
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    Eigen::VectorXd off = xv - p * (p.transpose() * xv);
    require(off.cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + sup_norm(x)), ErrorCode::kNotRelativeInterior,
            std::string(leaf_tag(l)) + ": point is outside the affine hull");
    double dist = ext::kPosInf;
    for (const auto& h : c.dual_generators()) {
      Eigen::Map<const Eigen::VectorXd> hv(h.data(), static_cast<Eigen::Index>(h.size()));
      Eigen::VectorXd hp = p * (p.transpose() * hv);
      double nh = hp.norm();
      if (nh < 1e-12) continue;
      dist = std::min(dist, c.solid() ? dot(h, x) : hp.dot(xv) / nh);
    }
    require(dist > 0.0, ErrorCode::kNotRelativeInterior,
            std::string(leaf_tag(l)) + ": point is not in the relative interior");
    out.push_back({0.5 * dist, dist});
  }
  return out;
}

OrderReport cone_leq(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y,
                     const RandomCone& cone, double tol) {
  require(x.size() == cone.num_leaves() && y.size() == cone.num_leaves(), ErrorCode::kConeMismatch,
          "one vector per leaf required");
  OrderReport rep;
  rep.min_margin = ext::kPosInf;
  for (std::size_t l = 0; l < cone.num_leaves(); ++l) {
    require(x[l].size() == static_cast<std::size_t>(cone.dim()) && y[l].size() == x[l].size(),
            ErrorCode::kConeMismatch, "vector dimension differs from the cone");
    std::vector<double> d(x[l].size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[l][i] - y[l][i];
    const auto& c = cone.at(l);
    double m = c.margin(d);
    rep.min_margin = std::min(rep.min_margin, m);
    bool dual_in = m >= -tol * (1.0 + sup_norm(d));
    bool lp_in = c.contains_lp(d, tol);
    if (dual_in != lp_in) rep.routes_agree = false;
    if (!dual_in && rep.leq) {
      rep.leq = false;
      rep.failing_leaf = l;
    }
  }
  return rep;
}

ScalarizedModel::ScalarizedModel(VectorModelPtr model, std::vector<std::vector<double>> z)
    : MarketModel(model->tree_ptr(), model->dim()), model_(std::move(model)), z_(std::move(z)) {
  require(z_.size() == tree().num_leaves(), ErrorCode::kTargetMismatch, "selection needs one vector per leaf");
  for (const auto& v : z_) {
    require(v.size() == static_cast<std::size_t>(model_->outputs()), ErrorCode::kTargetMismatch,
            "selection dimension differs from the model outputs");
  }
}

ModelFlags ScalarizedModel::flags() const {
  auto f = model_->flags();
  return {f.positively_homogeneous, false, f.positively_homogeneous, f.usc};
}

double ScalarizedModel::eval(std::size_t leaf, std::span<const double> x) const {
  auto v = model_->eval(leaf, x);
  if (!v) return ext::kNegInf;
  return dot(z_[leaf], *v);
}

double ScalarizedModel::analytic_recession(std::size_t leaf, std::span<const double> z) const {
  if (!model_->flags().positively_homogeneous) return MarketModel::analytic_recession(leaf, z);
  return eval(leaf, z);
}

std::shared_ptr<ScalarizedModel> scalarize(VectorModelPtr model, const ConeSelection& z, const RandomCone& cone) {
  require(cone.dim() == model->outputs(), ErrorCode::kConeMismatch, "cone dimension differs from the model outputs");
  try {
    affine_ball_radius(polar(cone), z);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNotRelativeInterior && e.code() != ErrorCode::kConeMismatch) throw;
    throw Error(ErrorCode::kTargetMismatch, std::string("selection is not in ri K°: ") + e.what());
  }
  return std::make_shared<ScalarizedModel>(std::move(model), z.z);
}

std::vector<ConeSelection> scalarization_family(const RandomCone& cone, std::size_t random_count,
                                                std::uint64_t seed) {
  const auto p = polar(cone);
  auto family = castaing(p);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  for (std::size_t k = 0; k < random_count; ++k) {
    ConeSelection s;
    s.target = SelectionTarget::kRelativeInterior;
    for (std::size_t l = 0; l < p.num_leaves(); ++l) {
      std::vector<double> z(static_cast<std::size_t>(p.dim()), 0.0);
      for (const auto& g : p.at(l).generators()) {
        const double w = unif(rng);
        auto u = unit(g);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += w * u[i];
      }
      s.z.push_back(std::move(z));
    }
    family.push_back(std::move(s));
  }
  return family;
}

VectorNaVerdict vector_na_check(VectorModelPtr model, const RandomCone& cone, const VectorNaConfig& config) {
  require(cone.dim() == model->outputs() && cone.num_leaves() == model->tree().num_leaves(), ErrorCode::kConeMismatch,
          "cone must match the model outputs and leaves");
  const auto& tree = model->tree();
  const auto family = scalarization_family(cone, config.family_size, config.search.seed);
  VectorNaVerdict out;
  out.family = family.size();

  if (model->flags().positively_homogeneous) {
    out.route = "homogeneous";
    RecessionIntegrand direct;
    direct.provenance = "cone margin";
    direct.positively_homogeneous = true;
    direct.eval = [model, &cone](std::size_t leaf, std::span<const double> x) {
      auto v = model->eval(leaf, x);
      return v ? cone.at(leaf).margin(*v) : ext::kNegInf;
    };
    out.verdict = na_check_homogeneous(direct, tree, model->dim(), config.search);

    RecessionIntegrand fam;
    fam.provenance = "scalarization family";
    fam.positively_homogeneous = true;
    fam.eval = [model, &family](std::size_t leaf, std::span<const double> x) {
      auto v = model->eval(leaf, x);
      if (!v) return ext::kNegInf;
      double m = ext::kPosInf;
      for (const auto& z : family) m = std::min(m, dot(z.z[leaf], *v));
      return m;
    };
    out.family_verdict = na_check_homogeneous(fam, tree, model->dim(), config.search);
    out.routes_agree = out.family_verdict->status == out.verdict.status;
    return out;
  }

  out.route = "scalarization";
  std::vector<RecessionIntegrand> recs;
  for (const auto& z : family) {
    recs.push_back(recession_numeric_integrand(std::make_shared<ScalarizedModel>(model, z.z)));
  }
  RecessionIntegrand fam;
  fam.provenance = "numeric recession over the scalarization family";
  fam.positively_homogeneous = true;
  fam.eval = [&recs](std::size_t leaf, std::span<const double> x) {
    double m = ext::kPosInf;
    for (const auto& r : recs) {
      m = std::min(m, r.eval(leaf, x));
      if (m < 0.0) break;
    }
    return m;
  };
  SphereSearchConfig light = config.search;
  light.random_candidates = std::min<std::size_t>(light.random_candidates, 64);
  light.full_lattice_cap = std::min<std::size_t>(light.full_lattice_cap, 81);
  out.verdict = na_check_homogeneous(fam, tree, model->dim(), light);
  return out;
}

VectorDominationReport vector_na_by_domination(const VectorModel& model, const std::vector<ModelPtr>& dominator,
                                               const RandomCone& cone, double box, int points) {
  require(dominator.size() == static_cast<std::size_t>(model.outputs()) && cone.dim() == model.outputs(),
          ErrorCode::kConeMismatch, "dominator needs one component per output");
  auto lin = std::make_shared<StackedModel>(dominator);
  require(lin->tree_ptr() == model.tree_ptr() && lin->dim() == model.dim(), ErrorCode::kDimensionMismatch,
          "dominator must share tree and dimension");
  VectorDominationReport rep;
  const auto grid = product_grid(axis_grid(box, points), static_cast<int>(model.path_length()));
  for (const auto& x : grid) {
    for (std::size_t l = 0; l < model.tree().num_leaves(); ++l) {
      ++rep.points;
      auto v = model.eval(l, x);
      if (!v) continue;
      auto lv = lin->eval(l, x);
      bool ok = lv.has_value();
      if (ok) {
        std::vector<double> d(lv->size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = (*lv)[i] - (*v)[i];
        ok = cone.at(l).contains(d);
      }
      if (!ok && rep.dominated) {
        rep.dominated = false;
        rep.violation_leaf = l;
      }
    }
  }
  auto z = ri_selection(polar(cone));
  auto scal = std::make_shared<ScalarizedModel>(lin, z.z);
  auto rec = recession_analytic(scal);
  try {
    rep.dominator = na_check_linear(rec, model.tree(), model.dim());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNotLinear) throw;
    rep.dominator = na_check_homogeneous(rec, model.tree(), model.dim());
  }
  rep.na_by_domination = rep.dominated && rep.dominator.status == NaStatus::kNaCertified;
  return rep;
}

GramModel::GramModel(std::vector<ScalarRep> basis_reps, std::vector<std::vector<std::size_t>> basis, int outputs)
    : VectorModel(basis_reps.at(0).model->tree_ptr(), basis_reps.at(0).model->dim(), outputs),
      reps_(std::move(basis_reps)), basis_(std::move(basis)) {
  require(basis_.size() == tree().num_leaves(), ErrorCode::kDimensionMismatch, "basis needs one entry per leaf");
  for (std::size_t l = 0; l < basis_.size(); ++l) {
    const auto k = static_cast<Eigen::Index>(basis_[l].size());
    Eigen::MatrixXd g(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) {
        g(i, j) = dot(reps_[basis_[l][static_cast<std::size_t>(i)]].z[l], reps_[basis_[l][static_cast<std::size_t>(j)]].z[l]);
      }
    }
    if (k > 0) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(g);
      const auto sv = svd.singularValues();
      require(sv[0] > 0.0 && sv[k - 1] / sv[0] > 1e-12, ErrorCode::kSingularGram,
              std::string(leaf_tag(l)) + ": Gram matrix of the basis is singular");
    }
    gram_inv_.push_back(k > 0 ? Eigen::MatrixXd(g.inverse()) : Eigen::MatrixXd(0, 0));
  }
}

ModelFlags GramModel::flags() const {
  bool hom = true;
  for (const auto& r : reps_) hom = hom && r.model->flags().positively_homogeneous;
  return {hom, false, false, true};
}

VectorValue GramModel::eval(std::size_t leaf, std::span<const double> x) const {
  const auto& b = basis_[leaf];
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(b.size()));
  for (std::size_t k = 0; k < b.size(); ++k) {
    double v = reps_[b[k]].model->eval(leaf, x);
    if (ext::is_neg_inf(v)) return std::nullopt;
    rhs[static_cast<Eigen::Index>(k)] = v;
  }
  Eigen::VectorXd alpha = gram_inv_[leaf] * rhs;
  std::vector<double> out(static_cast<std::size_t>(outputs()), 0.0);
  for (std::size_t k = 0; k < b.size(); ++k) {
    const auto& z = reps_[b[k]].z[leaf];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha[static_cast<Eigen::Index>(k)] * z[i];
  }
  return out;
}

GramResult gram_reconstruct(const std::vector<ScalarRep>& reps, const RandomCone& cone, double box, int points,
                            const std::optional<std::vector<std::vector<std::size_t>>>& declared, double tol) {
  require(!reps.empty(), ErrorCode::kInvalidArgument, "at least one scalarization required");
  const auto& tree = reps.front().model->tree();
  const std::size_t nl = tree.num_leaves();
  require(cone.num_leaves() == nl, ErrorCode::kConeMismatch, "cone needs one entry per leaf");
  for (const auto& r : reps) {
    require(r.model->tree_ptr() == reps.front().model->tree_ptr() && r.model->dim() == reps.front().model->dim(),
            ErrorCode::kDimensionMismatch, "scalarizations must share tree and dimension");
    require(r.z.size() == nl, ErrorCode::kDimensionMismatch, "selection needs one vector per leaf");
    for (const auto& z : r.z) {
      require(z.size() == static_cast<std::size_t>(cone.dim()), ErrorCode::kConeMismatch, "selection dimension");
    }
  }

  GramResult out;
  const auto p = polar(cone);
  auto rank_of = [&](std::size_t l, const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0;
    std::vector<std::vector<double>> rows;
    for (std::size_t k : idx) rows.push_back(reps[k].z[l]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows_matrix(rows, cone.dim()));
    const auto sv = svd.singularValues();
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      if (sv[i] > kRankTol * std::max(1e-300, sv[0])) ++r;
    }
    return r;
  };
  for (std::size_t l = 0; l < nl; ++l) {
    const int dim = p.at(l).span_dim();
    out.span_dim.push_back(dim);
    std::vector<std::size_t> b;
    if (declared) {
      require(declared->size() == nl, ErrorCode::kDimensionMismatch, "declared basis needs one entry per leaf");
      b = (*declared)[l];
      require(rank_of(l, b) == static_cast<int>(b.size()), ErrorCode::kSingularGram,
              std::string(leaf_tag(l)) + ": declared basis is linearly dependent");
    } else {
      for (std::size_t k = 0; k < reps.size() && static_cast<int>(b.size()) < dim; ++k) {
        b.push_back(k);
        if (rank_of(l, b) < static_cast<int>(b.size())) b.pop_back();
      }
    }
    require(static_cast<int>(b.size()) == dim, ErrorCode::kSingularGram,
            std::string(leaf_tag(l)) + ": selections span dimension " + std::to_string(b.size()) + " of " +
                std::to_string(dim));
    out.basis.push_back(std::move(b));
  }
  out.model = std::make_shared<GramModel>(reps, out.basis, cone.dim());

  const auto grid = product_grid(axis_grid(box, points), static_cast<int>(out.model->path_length()));
  double worst_rel = 0.0;
  for (const auto& x : grid) {
    for (std::size_t l = 0; l < nl; ++l) {
      auto v = out.model->eval(l, x);
      for (const auto& r : reps) {
        ++out.points;
        double vz = r.model->eval(l, x);
        if (!v || ext::is_neg_inf(vz)) {
          if (static_cast<bool>(v) == ext::is_neg_inf(vz)) {
            out.max_residual = ext::kPosInf;
            worst_rel = ext::kPosInf;
          }
          continue;
        }
        double res = std::abs(dot(r.z[l], *v) - vz);
        out.max_residual = std::max(out.max_residual, res);
        worst_rel = std::max(worst_rel, res / (1.0 + std::abs(vz)));
      }
    }
  }
  require(worst_rel <= tol, ErrorCode::kInconsistentScalarizations,
          "scalarizations are not jointly representable, residual " + std::to_string(out.max_residual));
  return out;
}

BasisSensitivity basis_sensitivity(const std::vector<ScalarRep>& reps, const RandomCone& cone, double box,
                                   int points) {
  BasisSensitivity out;
  std::shared_ptr<GramModel> first;
  for (std::size_t r = 0; r < reps.size(); ++r) {
    std::vector<ScalarRep> rot;
    for (std::size_t k = 0; k < reps.size(); ++k) rot.push_back(reps[(k + r) % reps.size()]);
    auto g = gram_reconstruct(rot, cone, box, points);
    for (auto& b : g.basis) {
      for (auto& k : b) k = (k + r) % reps.size();
    }
    out.bases.push_back(g.basis);
    if (!first) {
      first = g.model;
      continue;
    }
    for (const auto& x : product_grid(axis_grid(box, points), static_cast<int>(first->path_length()))) {
      for (std::size_t l = 0; l < first->tree().num_leaves(); ++l) {
        auto a = first->eval(l, x), b = g.model->eval(l, x);
        if (!a || !b) continue;
        for (std::size_t i = 0; i < a->size(); ++i) {
          out.max_difference = std::max(out.max_difference, std::abs((*a)[i] - (*b)[i]));
        }
      }
    }
  }
  return out;
}

AdditivityGap additivity_gap(const MarketModel& v1, const MarketModel& v2, const MarketModel& v12, double box,
                             int points) {
  AdditivityGap out;
  out.max_excess = ext::kNegInf;
  out.min_excess = ext::kPosInf;
  for (const auto& x : product_grid(axis_grid(box, points), static_cast<int>(v1.path_length()))) {
    for (std::size_t l = 0; l < v1.tree().num_leaves(); ++l) {
      double a = v1.eval(l, x), b = v2.eval(l, x), c = v12.eval(l, x);
      if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c)) continue;
      ++out.points;
      out.max_excess = std::max(out.max_excess, a + b - c);
      out.min_excess = std::min(out.min_excess, a + b - c);
    }
  }
  return out;
}

VectorFeasibility vector_superhedge_feasible(const VectorModel& model, const RandomCone& cone,
                                             const std::vector<std::vector<double>>& h, double box, int grid,
                                             std::uint64_t budget, double tol) {
  const auto& tree = model.tree();
  require(h.size() == tree.num_leaves() && cone.num_leaves() == tree.num_leaves(), ErrorCode::kDimensionMismatch,
          "claim and cone need one entry per leaf");
  auto dominates = [&](const AdaptedStrategy& s) {
    auto v = model.evaluate_hat(s);
    for (std::size_t l = 0; l < v.size(); ++l) {
      if (!v[l]) return false;
      require(h[l].size() == v[l]->size(), ErrorCode::kConeMismatch, "claim dimension differs from the model");
      std::vector<double> d(h[l].size());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = (*v[l])[i] - h[l][i];
      if (!cone.at(l).contains(d, tol)) return false;
    }
    return true;
  };

  VectorFeasibility out;
  AdaptedStrategy s(tree, model.dim());
  ++out.checked;
  if (dominates(s)) {
    out.feasible = true;
    out.witness = s;
    return out;
  }
  AdaptedGridEnumerator en(tree, uniform_node_grids(tree, model.dim(), box, grid), model.dim(), budget);
  while (en.next(s)) {
    ++out.checked;
    if (dominates(s)) {
      out.feasible = true;
      out.witness = s;
      return out;
    }
  }
  return out;
}

std::vector<std::vector<double>> lower_element(const std::vector<std::vector<double>>& x,
                                               std::span<const double> rho, std::span<const double> r) {
  require(x.size() == rho.size() && x.size() == r.size(), ErrorCode::kDimensionMismatch,
          "one entry per leaf required");
  std::vector<std::vector<double>> out(x.size());
  for (std::size_t l = 0; l < x.size(); ++l) {
    require(r[l] > 0.0, ErrorCode::kInvalidArgument, "radius must be positive");
    for (double v : x[l]) out[l].push_back(-(rho[l] / r[l]) * v);
  }
  return out;
}

}  // namespace nccm
