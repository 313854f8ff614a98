#include "nccm/arbitrage.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "nccm/error.hpp"
#include "nccm/extended.hpp"
#include "nccm/linprog.hpp"

namespace nccm {

const char* to_string(NaStatus s) {
  switch (s) {
    case NaStatus::kArbitrage: return "ARBITRAGE";
    case NaStatus::kNaCertified: return "NA_CERTIFIED";
    case NaStatus::kNaUpToSearch: return "NA_UP_TO_SEARCH";
  }
  return "UNKNOWN";
}

const char* to_string(DominatorStatus s) {
  switch (s) {
    case DominatorStatus::kNotSearched: return "NOT_SEARCHED";
    case DominatorStatus::kNoLinearDominator: return "NO_LINEAR_DOMINATOR";
    case DominatorStatus::kFoundNaDominator: return "FOUND_NA_DOMINATOR";
    case DominatorStatus::kInconclusive: return "INCONCLUSIVE";
  }
  return "UNKNOWN";
}

namespace {

std::vector<double> recession_values(const RecessionIntegrand& rec, const ScenarioTree& tree,
                                     const AdaptedStrategy& s) {
  std::vector<double> out(tree.num_leaves());
  for (std::size_t l = 0; l < out.size(); ++l) out[l] = rec.eval(l, restrict_to_path(tree, s, l));
  return out;
}

double min_value(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

std::vector<double> normalize_kernel(const Eigen::VectorXd& v) {
  double m = v.cwiseAbs().maxCoeff();
  std::vector<double> out(static_cast<std::size_t>(v.size()));
  double sign = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-12 * m) {
      sign = v[i] > 0 ? 1.0 : -1.0;
      break;
    }
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double x = sign * v[i] / m;
    if (std::abs(x - std::round(x)) < 1e-12) x = std::round(x);
    out[static_cast<std::size_t>(i)] = x;
  }
  return out;
}

}  // namespace

NaVerdict na_check_linear(const RecessionIntegrand& rec, const ScenarioTree& tree, int dim) {
  const auto d = static_cast<std::size_t>(dim);
  const std::size_t n = d * static_cast<std::size_t>(tree.horizon());
  const std::size_t nl = tree.num_leaves();

  // Per-leaf coefficients and a sampled linearity check.
  std::vector<std::vector<double>> coef(nl, std::vector<double>(n));
  std::vector<double> x(n, 0.0);
  for (std::size_t l = 0; l < nl; ++l) {
    require(rec.eval(l, x) == 0.0, ErrorCode::kNotLinear, "recession is nonzero at the origin");
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = 1.0;
      coef[l][i] = rec.eval(l, x);
      x[i] = 0.0;
      require(std::isfinite(coef[l][i]), ErrorCode::kNotLinear, "recession takes infinite values");
    }
  }
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int s = 0; s < 16; ++s) {
    for (double& v : x) v = unif(rng);
    for (std::size_t l = 0; l < nl; ++l) {
      double lin = 0.0, scale = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        lin += coef[l][i] * x[i];
        scale += std::abs(coef[l][i] * x[i]);
      }
      double v = rec.eval(l, x);
      require(std::isfinite(v) && std::abs(v - lin) <= 1e-9 * scale, ErrorCode::kNotLinear,
              "recession is not linear at leaf " + std::to_string(l));
    }
  }

  NaVerdict verdict;
  verdict.status = NaStatus::kNaCertified;
  for (int node : tree.decision_nodes()) {
    const auto& nd = tree.node(node);
    const auto t = static_cast<std::size_t>(nd.time);
    const std::size_t k = nd.children.size();
    Eigen::MatrixXd inc(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
    for (std::size_t c = 0; c < k; ++c) {
      const auto leaves = tree.leaves_under(nd.children[c]);
      const auto& ref = coef[leaves.front()];
      for (std::size_t l : leaves) {
        for (std::size_t j = 0; j < d; ++j) {
          double a = coef[l][t * d + j], b = ref[t * d + j];
          require(std::abs(a - b) <= 1e-12 * (1.0 + std::abs(b)), ErrorCode::kNotLinear,
                  "coefficient at time " + std::to_string(t) + " is not known at time " + std::to_string(t + 1));
        }
      }
      for (std::size_t j = 0; j < d; ++j) inc(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = ref[t * d + j];
    }

    NodeCertificate cert;
    cert.node = node;
    // maximize eps s.t. w_c >= eps, sum w = 1, sum w_c inc_c = 0.
    lp::Problem p(k + 1);
    p.objective[k] = 1.0;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> row(k + 1, 0.0);
      row[c] = 1.0;
      row[k] = -1.0;
      p.add(row, lp::Sense::kGe, 0.0);
    }
    std::vector<double> ones(k + 1, 1.0);
    ones[k] = 0.0;
    p.add(ones, lp::Sense::kEq, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<double> row(k + 1, 0.0);
      for (std::size_t c = 0; c < k; ++c) row[c] = inc(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j));
      p.add(row, lp::Sense::kEq, 0.0);
    }
    auto res = lp::solve(p);
    if (res.status == lp::Status::kOptimal) {
      cert.weights.assign(res.x.begin(), res.x.begin() + static_cast<std::ptrdiff_t>(k));
      cert.min_weight = *std::min_element(cert.weights.begin(), cert.weights.end());
      cert.martingale_ok = res.x[k] > 1e-12;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(inc, Eigen::ComputeFullV);
    const auto sv = svd.singularValues();
    double scale = std::max(1.0, sv.size() > 0 ? sv[0] : 0.0);
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      cert.singular_values.push_back(sv[i]);
      if (sv[i] > 1e-9 * scale) ++cert.rank;
    }
    cert.full_rank = cert.rank == d;
    verdict.certificate.push_back(cert);

    if (verdict.status == NaStatus::kArbitrage) continue;
    std::optional<std::vector<double>> theta;
    std::string kind;
    if (!cert.martingale_ok) {
      // maximize sum_c <theta, inc_c> with <theta, inc_c> >= 0, theta in [-1, 1]^d.
      lp::Problem w(d);
      for (std::size_t j = 0; j < d; ++j) {
        w.free_var[j] = true;
        for (std::size_t c = 0; c < k; ++c) w.objective[j] += inc(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j));
        std::vector<double> e(d, 0.0);
        e[j] = 1.0;
        w.add(e, lp::Sense::kLe, 1.0);
        w.add(e, lp::Sense::kGe, -1.0);
      }
      for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> row(d);
        for (std::size_t j = 0; j < d; ++j) row[j] = inc(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j));
        w.add(row, lp::Sense::kGe, 0.0);
      }
      auto wr = lp::solve(w);
      if (wr.status == lp::Status::kOptimal && wr.value > 1e-12) {
        theta = wr.x;
        kind = "one-step";
      }
    }
    if (!theta && !cert.full_rank) {
      Eigen::VectorXd v = svd.matrixV().col(static_cast<Eigen::Index>(d) - 1);
      theta = normalize_kernel(v);
      kind = "redundancy";
    }
    if (theta) {
      AdaptedStrategy s(tree, dim);
      auto slot = s.at(tree, node);
      std::copy(theta->begin(), theta->end(), slot.begin());
      verdict.status = NaStatus::kArbitrage;
      verdict.witness = s;
      verdict.witness_kind = kind;
      verdict.witness_values = recession_values(rec, tree, s);
    } else if (!cert.martingale_ok || !cert.full_rank) {
      verdict.status = NaStatus::kNaUpToSearch;
    }
  }
  if (verdict.status == NaStatus::kArbitrage) {
    double tol = 1e-9;
    for (double v : verdict.witness_values) {
      require(v >= -tol, ErrorCode::kInvalidArgument, "internal: linear arbitrage witness failed re-validation");
    }
    verdict.margin = min_value(verdict.witness_values);
  }
  return verdict;
}

NaVerdict na_check_homogeneous(const RecessionIntegrand& rec, const ScenarioTree& tree, int dim,
                               const SphereSearchConfig& config) {
  const auto d = static_cast<std::size_t>(dim);
  const std::size_t nodes = tree.num_decision_nodes();
  const std::size_t n = d * nodes;
  std::size_t evals = 0;

  AdaptedStrategy best(tree, dim);
  double best_margin = ext::kNegInf;
  bool have = false;
  // Best few starting points for refinement, sorted by margin.
  std::vector<std::pair<double, AdaptedStrategy>> starts;
  auto score = [&](const AdaptedStrategy& s) {
    evals += tree.num_leaves();
    require(evals <= config.budget, ErrorCode::kSearchBudgetExceeded,
            "sphere search exceeded " + std::to_string(config.budget) + " evaluations");
    return min_value(recession_values(rec, tree, s));
  };
  auto normalize = [](AdaptedStrategy& s) {
    double m = s.sup_norm();
    if (m == 0.0) return false;
    for (double& v : s.raw()) v /= m;
    return true;
  };
  auto consider = [&](AdaptedStrategy s) {
    if (!normalize(s)) return;
    double sc = score(s);
    if (!have || sc > best_margin) {
      best = s;
      best_margin = sc;
      have = true;
    }
    if (!std::isfinite(sc)) return;
    if (starts.size() < config.refine_starts || sc > starts.back().first) {
      auto pos = std::find_if(starts.begin(), starts.end(), [&](const auto& e) { return sc > e.first; });
      starts.insert(pos, {sc, std::move(s)});
      if (starts.size() > config.refine_starts) starts.pop_back();
    }
  };

  std::size_t candidates = 0;
  // Per-node lattice directions.
  const auto lattice = product_grid({-1.0, -0.5, 0.0, 0.5, 1.0}, dim);
  for (std::size_t k = 0; k < nodes; ++k) {
    for (const auto& u : lattice) {
      AdaptedStrategy s(tree, dim);
      std::copy(u.begin(), u.end(), s.at_decision(k).begin());
      consider(s);
      ++candidates;
    }
  }
  // Full sign lattice when small.
  if (std::pow(3.0, static_cast<double>(n)) <= static_cast<double>(config.full_lattice_cap)) {
    for (const auto& u : product_grid({-1.0, 0.0, 1.0}, static_cast<int>(n))) {
      AdaptedStrategy s(tree, dim);
      s.raw() = u;
      consider(s);
      ++candidates;
    }
  }
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::bernoulli_distribution keep(0.5);
  for (std::size_t r = 0; r < config.random_candidates; ++r) {
    AdaptedStrategy s(tree, dim);
    bool sparse = r % 2 == 1;
    for (std::size_t k = 0; k < nodes; ++k) {
      bool on = !sparse || keep(rng);
      for (auto& v : s.at_decision(k)) v = on ? unif(rng) : 0.0;
    }
    consider(s);
    ++candidates;
  }

  // Pattern search from each start: coordinate and random directions.
  for (auto& [start_margin, start] : starts) {
    if (best_margin >= -config.zero_tol) break;
    AdaptedStrategy cur = start;
    double cur_margin = start_margin;
    double step = 0.25;
    for (int round = 0; round < config.refine_rounds && cur_margin < -config.zero_tol && step > 1e-14; ++round) {
      bool improved = false;
      auto try_move = [&](const std::vector<double>& dir) {
        AdaptedStrategy s = cur;
        for (std::size_t i = 0; i < n; ++i) s.raw()[i] += step * dir[i];
        if (!normalize(s)) return;
        double sc = score(s);
        if (sc > cur_margin) {
          cur = s;
          cur_margin = sc;
          improved = true;
        }
      };
      std::vector<double> dir(n, 0.0);
      for (std::size_t i = 0; i < n && cur_margin < -config.zero_tol; ++i) {
        for (double sgn : {1.0, -1.0}) {
          std::fill(dir.begin(), dir.end(), 0.0);
          dir[i] = sgn;
          try_move(dir);
        }
      }
      for (std::size_t r = 0; r < 2 * n && cur_margin < -config.zero_tol; ++r) {
        for (double& v : dir) v = unif(rng);
        try_move(dir);
      }
      if (!improved) step *= 0.5;
    }
    if (cur_margin > best_margin) {
      best = cur;
      best_margin = cur_margin;
    }
  }

  NaVerdict verdict;
  verdict.candidates = candidates;
  verdict.margin = best_margin;
  if (have && best_margin >= -config.zero_tol) {
    verdict.status = NaStatus::kArbitrage;
    verdict.witness = best;
    verdict.witness_kind = "search";
    verdict.witness_values = recession_values(rec, tree, best);
    require(!best.is_zero() && min_value(verdict.witness_values) >= -config.zero_tol, ErrorCode::kInvalidArgument,
            "internal: search witness failed re-validation");
  } else {
    verdict.status = NaStatus::kNaUpToSearch;
  }
  return verdict;
}

std::string analytic_na_certificate(ModelPtr model) {
  const auto& tree = model->tree();
  const auto flags = model->flags();
  if (auto lob = std::dynamic_pointer_cast<const LobModel>(model); lob && lob->all_negative_definite()) {
    return "impact form negative definite at every leaf: recession is -inf off the origin";
  }
  if (flags.has_analytic_recession && model->dim() * tree.num_decision_nodes() == 1) {
    std::ostringstream os;
    double worst = ext::kNegInf;
    for (double sgn : {1.0, -1.0}) {
      std::vector<double> z(model->path_length(), 0.0);
      AdaptedStrategy s(tree, 1);
      s.raw()[0] = sgn;
      double m = ext::kPosInf;
      for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
        m = std::min(m, model->analytic_recession(l, restrict_to_path(tree, s, l)));
      }
      worst = std::max(worst, m);
    }
    if (worst < 0.0) {
      os << "one-dimensional strategy space: both unit directions evaluated exactly, best margin " << worst;
      return os.str();
    }
  }
  return {};
}

NaVerdict check_na(ModelPtr model, const SphereSearchConfig& config) {
  const auto& tree = model->tree();
  NaVerdict verdict;
  if (model->flags().has_analytic_recession) {
    auto rec = recession_analytic(model);
    try {
      verdict = na_check_linear(rec, tree, model->dim());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotLinear) throw;
      verdict = na_check_homogeneous(rec, tree, model->dim(), config);
    }
  } else {
    SphereSearchConfig light = config;
    light.random_candidates = std::min<std::size_t>(config.random_candidates, 64);
    light.full_lattice_cap = std::min<std::size_t>(config.full_lattice_cap, 81);
    verdict = na_check_homogeneous(recession_numeric_integrand(model), tree, model->dim(), light);
  }
  if (verdict.status != NaStatus::kArbitrage) verdict.analytic_certificate = analytic_na_certificate(model);
  return verdict;
}

ViabilityReport viability_probe(const MarketModel& model, std::span<const double> f, std::size_t directions,
                                std::uint64_t seed, double cap) {
  const auto& tree = model.tree();
  require(f.size() == tree.num_leaves(), ErrorCode::kDimensionMismatch, "claim needs one value per leaf");
  ViabilityReport report;
  report.sup_max_gain = ext::kNegInf;
  report.sup_min_gain = ext::kNegInf;

  std::vector<AdaptedStrategy> dirs;
  const std::size_t n = tree.num_decision_nodes() * static_cast<std::size_t>(model.dim());
  for (std::size_t i = 0; i < n; ++i) {
    for (double sgn : {1.0, -1.0}) {
      AdaptedStrategy s(tree, model.dim());
      s.raw()[i] = sgn;
      dirs.push_back(s);
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (std::size_t r = 0; r < directions; ++r) {
    AdaptedStrategy s(tree, model.dim());
    for (double& v : s.raw()) v = unif(rng);
    double m = s.sup_norm();
    if (m == 0.0) continue;
    for (double& v : s.raw()) v /= m;
    dirs.push_back(s);
  }

  const int top = static_cast<int>(std::ceil(std::log2(cap))) + 1;
  bool above_prev = false;
  for (int e = 0; e <= top; ++e) {
    const double scale = std::ldexp(1.0, e);
    double best = ext::kNegInf;
    for (const auto& u : dirs) {
      AdaptedStrategy s = u;
      for (double& v : s.raw()) v *= scale;
      auto v = model.evaluate_hat(s);
      ++report.samples;
      bool ok = true;
      for (std::size_t l = 0; l < v.size(); ++l) ok = ok && v[l] >= f[l];
      if (!ok) continue;
      ++report.admissible;
      double mx = *std::max_element(v.begin(), v.end());
      double mn = *std::min_element(v.begin(), v.end());
      if (mx > report.sup_max_gain) {
        report.sup_max_gain = mx;
        report.witness = s;
      }
      report.sup_min_gain = std::max(report.sup_min_gain, mn);
      best = std::max(best, mx);
    }
    report.growth.push_back(best);
    bool above = best > cap;
    if (above && above_prev) {
      report.unbounded_suspect = true;
      break;
    }
    if (above) report.unbounded_suspect = true;
    above_prev = above;
  }
  return report;
}

DominationReport domination_check(const MarketModel& a, const MarketModel& b, double box, int points) {
  require(a.path_length() == b.path_length() && a.tree().num_leaves() == b.tree().num_leaves(),
          ErrorCode::kDimensionMismatch, "models must share dimensions");
  DominationReport report;
  const auto grid = product_grid(axis_grid(box, points), static_cast<int>(a.path_length()));
  for (const auto& x : grid) {
    for (std::size_t l = 0; l < a.tree().num_leaves(); ++l) {
      ++report.points;
      double va = a.eval(l, x), vb = b.eval(l, x);
      if (va <= vb) continue;
      if (report.dominated) report.violation = DominationReport::Violation{l, x, va, vb};
      report.dominated = false;
    }
  }
  return report;
}

DominationReport linear_dominator_search(const MarketModel& a, double box, int points) {
  const auto& tree = a.tree();
  const auto d = static_cast<std::size_t>(a.dim());
  const std::size_t nn = tree.num_nodes();
  const auto grid = product_grid(axis_grid(box, points), static_cast<int>(a.path_length()));
  DominationReport report;
  // Unknowns: increments per node (zero at the root), then the fit width.
  const std::size_t nv = nn * d + 1;
  enum class Mode { kFeasible, kTightest, kMartingale };
  auto build = [&](Mode mode) {
    lp::Problem p(nv);
    std::fill(p.free_var.begin(), p.free_var.end(), true);
    p.free_var[nv - 1] = false;
    if (mode == Mode::kTightest) p.objective[nv - 1] = -1.0;
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<double> row(nv, 0.0);
      row[j] = 1.0;
      p.add(row, lp::Sense::kEq, 0.0);
    }
    std::size_t count = 0;
    for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
      const auto path = tree.path(l);
      for (const auto& x : grid) {
        const double va = a.eval(l, x);
        if (ext::is_neg_inf(va)) continue;
        std::vector<double> row(nv, 0.0);
        for (int t = 0; t < tree.horizon(); ++t) {
          auto c = static_cast<std::size_t>(path[static_cast<std::size_t>(t) + 1]);
          for (std::size_t j = 0; j < d; ++j) row[c * d + j] += x[static_cast<std::size_t>(t) * d + j];
        }
        p.add(row, lp::Sense::kGe, va);
        if (mode == Mode::kTightest) {
          row[nv - 1] = -1.0;
          p.add(row, lp::Sense::kLe, va);
        }
        ++count;
      }
    }
    if (mode == Mode::kMartingale) {
      for (int node : tree.decision_nodes()) {
        for (std::size_t j = 0; j < d; ++j) {
          std::vector<double> row(nv, 0.0);
          for (int c : tree.node(node).children) row[static_cast<std::size_t>(c) * d + j] = tree.node(c).cond_prob;
          p.add(row, lp::Sense::kEq, 0.0);
        }
      }
    }
    report.points = count;
    return lp::solve(p);
  };
  auto certify = [&](const lp::Result& r) {
    NodeVectors prices(nn, std::vector<double>(d, 0.0));
    report.dominator_increments.assign(nn, std::vector<double>(d, 0.0));
    for (std::size_t i = 1; i < nn; ++i) {
      const auto parent = static_cast<std::size_t>(tree.node(static_cast<int>(i)).parent);
      for (std::size_t j = 0; j < d; ++j) {
        report.dominator_increments[i][j] = r.x[i * d + j];
        prices[i][j] = prices[parent][j] + r.x[i * d + j];
      }
    }
    auto lin = std::make_shared<FrictionlessModel>(a.tree_ptr(), prices);
    return na_check_linear(recession_analytic(lin), tree, a.dim()).status == NaStatus::kNaCertified;
  };

  if (build(Mode::kFeasible).status == lp::Status::kInfeasible) {
    report.dominator = DominatorStatus::kNoLinearDominator;
    return report;
  }
  // The tightest upper fit inherits the model's price increments when they
  // dominate; the tree-probability martingale is the fallback.
  for (Mode mode : {Mode::kTightest, Mode::kMartingale}) {
    auto r = build(mode);
    if (r.status == lp::Status::kOptimal && certify(r)) {
      report.dominator = DominatorStatus::kFoundNaDominator;
      return report;
    }
  }
  report.dominator = DominatorStatus::kInconclusive;
  report.dominator_increments.clear();
  return report;
}

}  // namespace nccm
