#include "nccm/representation.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nccm/error.hpp"
#include "nccm/extended.hpp"

namespace nccm {

LocalFunctional as_functional(ModelPtr model) {
  require(model != nullptr, ErrorCode::kInvalidArgument, "null model");
  LocalFunctional f;
  f.tree = model->tree_ptr();
  f.dim = model->dim();
  f.name = model->name();
  f.hat = [model](const AdaptedStrategy& s) { return model->evaluate_hat(s); };
  return f;
}

AxiomReport check_axioms(const LocalFunctional& f, std::size_t samples, std::uint64_t seed, double box) {
  const auto& tree = *f.tree;
  AxiomReport report;
  report.at_zero = f.hat(AdaptedStrategy(tree, f.dim));
  for (double v : report.at_zero) {
    if (v != 0.0) report.a1_pass = false;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-box, box);
  for (int t = 0; t < tree.horizon(); ++t) {
    for (int atom : tree.nodes_at(t)) {
      const auto inside = tree.leaves_under(atom);
      for (std::size_t s = 0; s < samples; ++s) {
        AdaptedStrategy theta(tree, f.dim);
        for (double& v : theta.raw()) v = unif(rng);
        AdaptedStrategy localized = theta;
        for (int n : tree.nodes_at(t)) {
          if (n == atom) continue;
          for (double& v : localized.at(tree, n)) v = 0.0;
        }
        const auto a = f.hat(theta);
        const auto b = f.hat(localized);
        ++report.a2_checks;
        for (std::size_t l : inside) {
          if (ext::equal(a[l], b[l])) continue;
          if (report.a2_pass) report.a2_witness = AxiomReport::A2Witness{t, atom, l, theta, a[l], b[l]};
          report.a2_pass = false;
        }
      }
    }
  }
  return report;
}

namespace {

class BallSearch {
 public:
  BallSearch(const LocalFunctional& f, std::span<const double> q, double r, const MaximizerConfig& cfg, Extremum kind)
      : f_(f),
        q_(q.begin(), q.end()),
        rad_(r * (1.0 - cfg.eta)),
        r_(r),
        cfg_(cfg),
        sign_(kind == Extremum::kSup ? 1.0 : -1.0),
        best_(f.tree->num_leaves(), ext::kNegInf),
        best_x_(f.tree->num_leaves(), q_) {}

  // Evaluates at x and returns the signed values.
  std::vector<double> probe(const std::vector<double>& x) {
    require(++calls_ <= cfg_.budget, ErrorCode::kRefinementBudgetExceeded,
            "ball search exceeded " + std::to_string(cfg_.budget) + " functional calls");
    auto v = f_.hat(constant_strategy(*f_.tree, f_.dim, x));
    for (std::size_t l = 0; l < v.size(); ++l) {
      double sv = sign_ * v[l];
      if (std::isnan(sv)) continue;
      v[l] = sv;
      if (sv > best_[l]) {
        best_[l] = sv;
        best_x_[l] = x;
      }
    }
    return v;
  }

  void coarse() {
    const std::size_t n = q_.size();
    int m = std::max(3, cfg_.coarse_points);
    while (m > 3 && std::pow(static_cast<double>(m), static_cast<double>(n)) > 20000.0) m -= 2;
    std::vector<double> offsets(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) offsets[static_cast<std::size_t>(j)] = rad_ * (-1.0 + 2.0 * j / (m - 1));
    offsets[static_cast<std::size_t>(m / 2)] = 0.0;
    std::vector<std::size_t> idx(n, 0);
    std::vector<double> x(n);
    while (true) {
      for (std::size_t i = 0; i < n; ++i) x[i] = q_[i] + offsets[idx[i]];
      probe(x);
      std::size_t k = n;
      while (k > 0) {
        --k;
        if (++idx[k] < offsets.size()) break;
        idx[k] = 0;
        if (k == 0) return;
      }
      if (n == 0) return;
    }
  }

  void extra(const std::vector<std::vector<double>>& points) {
    for (const auto& p : points) {
      double dist = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) dist = std::max(dist, std::abs(p[i] - q_[i]));
      if (dist < r_) probe(p);
    }
  }

  void refine() {
    const std::size_t n = q_.size();
    for (std::size_t leaf = 0; leaf < best_.size(); ++leaf) {
      for (int round = 0; round < cfg_.coordinate_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) golden(leaf, i);
      }
    }
  }

  std::vector<double> result() const {
    std::vector<double> out(best_.size());
    for (std::size_t l = 0; l < out.size(); ++l) out[l] = sign_ * best_[l];
    return out;
  }

 private:
  void golden(std::size_t leaf, std::size_t i) {
    constexpr double kInvPhi = 0.6180339887498949;
    std::vector<double> x = best_x_[leaf];
    double a = q_[i] - rad_, b = q_[i] + rad_;
    auto value = [&](double t) {
      x[i] = t;
      return probe(x)[leaf];
    };
    double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
    double fc = value(c), fd = value(d);
    for (int it = 0; it < cfg_.golden_iterations; ++it) {
      if (fc >= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - kInvPhi * (b - a);
        fc = value(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + kInvPhi * (b - a);
        fd = value(d);
      }
    }
  }

  const LocalFunctional& f_;
  std::vector<double> q_;
  double rad_;
  double r_;
  MaximizerConfig cfg_;
  double sign_;
  std::vector<double> best_;
  std::vector<std::vector<double>> best_x_;
  std::size_t calls_ = 0;
};

}  // namespace

std::vector<double> p_qr(const LocalFunctional& f, std::span<const double> q, double r, const MaximizerConfig& config,
                         Extremum kind, const std::vector<std::vector<double>>& extra) {
  require(r > 0.0 && std::isfinite(r), ErrorCode::kInvalidArgument, "radius must be positive and finite");
  require(q.size() == static_cast<std::size_t>(f.dim * f.tree->horizon()), ErrorCode::kDimensionMismatch,
          "center must have length d*T");
  BallSearch search(f, q, r, config, kind);
  search.probe(std::vector<double>(q.begin(), q.end()));
  search.coarse();
  search.extra(extra);
  search.refine();
  return search.result();
}

Reconstruction Reconstruction::build(const LocalFunctional& f, const ReconstructionConfig& config, Extremum kind) {
  require(config.lattice_points >= 2, ErrorCode::kInvalidGrid, "lattice needs at least two points per axis");
  require(config.ladder_depth >= 1, ErrorCode::kInvalidGrid, "ladder depth must be >= 1");
  Reconstruction rec;
  rec.kind_ = kind;
  rec.path_length_ = static_cast<std::size_t>(f.dim * f.tree->horizon());
  rec.num_leaves_ = f.tree->num_leaves();
  rec.stabilization_tol_ = config.stabilization_tol;
  rec.axis_ = axis_grid(config.box, config.lattice_points);
  rec.h_ = 2.0 * config.box / (config.lattice_points - 1);
  rec.lattice_ = product_grid(rec.axis_, static_cast<int>(rec.path_length_));
  for (int k = 1; k <= config.ladder_depth; ++k) rec.radii_.push_back(std::ldexp(1.0, -k));

  const std::size_t nq = rec.lattice_.size();
  const std::size_t nk = rec.radii_.size();
  rec.table_.assign(rec.num_leaves_, std::vector<double>(nq * nk));
  rec.center_.assign(rec.num_leaves_, std::vector<double>(nq));

  for (std::size_t q = 0; q < nq; ++q) {
    auto v = f.hat(constant_strategy(*f.tree, f.dim, rec.lattice_[q]));
    for (std::size_t l = 0; l < rec.num_leaves_; ++l) rec.center_[l][q] = v[l];
    for (std::size_t k = 0; k < nk; ++k) {
      std::vector<std::vector<double>> inside;
      for (std::size_t j : rec.neighbors(rec.lattice_[q], rec.radii_[k])) inside.push_back(rec.lattice_[j]);
      auto p = p_qr(f, rec.lattice_[q], rec.radii_[k], config.maximizer, kind, inside);
      for (std::size_t l = 0; l < rec.num_leaves_; ++l) rec.table_[l][q * nk + k] = p[l];
    }
  }

  // A ball contained in a larger one contributes its samples to it:
  // p_{q,r} <= p_{q',s} whenever s >= r + |q - q'|. Small balls first.
  const bool sup = kind == Extremum::kSup;
  for (std::size_t k = nk; k-- > 0;) {
    const double s = rec.radii_[k];
    for (std::size_t qp = 0; qp < nq; ++qp) {
      for (std::size_t j = k + 1; j < nk; ++j) {
        const double r = rec.radii_[j];
        for (std::size_t q : rec.neighbors(rec.lattice_[qp], s - r + 1e-12)) {
          double dist = 0.0;
          for (std::size_t i = 0; i < rec.path_length_; ++i) {
            dist = std::max(dist, std::abs(rec.lattice_[q][i] - rec.lattice_[qp][i]));
          }
          if (s < r + dist) continue;
          for (std::size_t l = 0; l < rec.num_leaves_; ++l) {
            double& big = rec.table_[l][qp * nk + k];
            double small = rec.table_[l][q * nk + j];
            big = sup ? std::max(big, small) : std::min(big, small);
          }
        }
      }
    }
  }

  if (config.strict) {
    require(rec.unstable_count() == 0, ErrorCode::kGridTooCoarse,
            std::to_string(rec.unstable_count()) + " lattice entries did not stabilize along the radius ladder");
  }
  return rec;
}

double Reconstruction::table(std::size_t leaf, std::size_t q, std::size_t k) const {
  return table_[leaf][q * radii_.size() + k];
}

std::vector<std::size_t> Reconstruction::neighbors(std::span<const double> x, double r) const {
  const std::size_t n = path_length_;
  const auto m = static_cast<long>(axis_.size());
  std::vector<long> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = std::max(0L, static_cast<long>(std::floor((x[i] - r - axis_.front()) / h_)) - 1);
    hi[i] = std::min(m - 1, static_cast<long>(std::ceil((x[i] + r - axis_.front()) / h_)) + 1);
    if (lo[i] > hi[i]) return {};
  }
  std::vector<std::size_t> out;
  std::vector<long> idx = lo;
  while (true) {
    std::size_t flat = 0;
    double dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      flat = flat * axis_.size() + static_cast<std::size_t>(idx[i]);
      dist = std::max(dist, std::abs(axis_[static_cast<std::size_t>(idx[i])] - x[i]));
    }
    // Lattice coordinates carry rounding; boundary points stay outside the open ball.
    if (dist < r - 1e-12 * (1.0 + r)) out.push_back(flat);
    std::size_t k = n;
    bool done = true;
    while (k > 0) {
      --k;
      if (++idx[k] <= hi[k]) {
        done = false;
        break;
      }
      idx[k] = lo[k];
    }
    if (done) break;
  }
  return out;
}

double Reconstruction::ladder_value(std::size_t leaf, std::span<const double> x) const {
  require(x.size() == path_length_, ErrorCode::kDimensionMismatch, "point has wrong length");
  const bool sup = kind_ == Extremum::kSup;
  double best = sup ? ext::kPosInf : ext::kNegInf;
  for (std::size_t k = 0; k < radii_.size(); ++k) {
    for (std::size_t q : neighbors(x, radii_[k])) {
      double v = table(leaf, q, k);
      best = sup ? std::min(best, v) : std::max(best, v);
    }
  }
  return best;
}

double Reconstruction::limit_value(std::size_t leaf, std::size_t q) const {
  const std::size_t nk = radii_.size();
  const double last = table(leaf, q, nk - 1);
  const double c = center_[leaf][q];
  if (nk < 2 || !std::isfinite(last)) return last;
  const double prev = table(leaf, q, nk - 2);
  double est = std::isfinite(prev) ? 2.0 * last - prev : last;
  if (kind_ == Extremum::kSup) return std::min(last, std::max(c, est));
  return std::max(last, std::min(c, est));
}

bool Reconstruction::stable(std::size_t leaf, std::size_t q) const {
  const std::size_t nk = radii_.size();
  if (nk < 3) return true;
  const double p1 = table(leaf, q, nk - 3), p2 = table(leaf, q, nk - 2), p3 = table(leaf, q, nk - 1);
  if (!std::isfinite(p1) || !std::isfinite(p2) || !std::isfinite(p3)) return ext::equal(p2, p3);
  const double d1 = p1 - p2, d2 = p2 - p3;
  return std::abs(d2) <= stabilization_tol_ || std::abs(d1 - 2.0 * d2) <= stabilization_tol_ * (1.0 + std::abs(p3));
}

std::size_t Reconstruction::unstable_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < num_leaves_; ++l) {
    for (std::size_t q = 0; q < lattice_.size(); ++q) {
      if (!stable(l, q)) ++n;
    }
  }
  return n;
}

RecoveryReport recovery_report(const LocalFunctional& f, const Reconstruction& rec) {
  (void)f;
  RecoveryReport r;
  r.unstable = rec.unstable_count();
  for (std::size_t l = 0; l < rec.num_leaves(); ++l) {
    for (std::size_t q = 0; q < rec.lattice_size(); ++q) {
      const double v = rec.center(l, q);
      const double lim = rec.limit_value(l, q);
      const double lad = rec.ladder_value(l, rec.lattice_point(q));
      if (std::isfinite(v) != std::isfinite(lim) || std::isfinite(v) != std::isfinite(lad)) {
        r.infinity_mismatch = true;
        continue;
      }
      if (!std::isfinite(v)) continue;
      r.max_limit_error = std::max(r.max_limit_error, std::abs(lim - v));
      r.max_ladder_error = std::max(r.max_ladder_error, std::abs(lad - v));
    }
  }
  return r;
}

EnvelopePair envelopes(const LocalFunctional& f, const ReconstructionConfig& config) {
  EnvelopePair pair{Reconstruction::build(f, config, Extremum::kSup), Reconstruction::build(f, config, Extremum::kInf),
                    {}, {}};
  const std::size_t nl = pair.plus.num_leaves();
  pair.gap.assign(nl, std::vector<double>(pair.plus.lattice_size()));
  pair.max_gap.assign(nl, 0.0);
  for (std::size_t l = 0; l < nl; ++l) {
    for (std::size_t q = 0; q < pair.plus.lattice_size(); ++q) {
      const double hi = pair.plus.limit_value(l, q);
      const double lo = pair.minus.limit_value(l, q);
      double g = 0.0;
      if (ext::is_neg_inf(hi)) {
        g = 0.0;
      } else if (ext::is_neg_inf(lo)) {
        g = ext::kPosInf;
      } else {
        g = hi - lo;
      }
      pair.gap[l][q] = g;
      pair.max_gap[l] = std::max(pair.max_gap[l], g);
    }
  }
  return pair;
}

namespace {

void usc_sequence(const LocalFunctional& f, const AdaptedStrategy& target, const AdaptedStrategy& dir, double tol,
                  UscReport& report) {
  ++report.sequences;
  const auto base = f.hat(target);
  std::vector<double> limsup(base.size(), ext::kNegInf);
  // Tail of the sequence, n = 2^34 .. 2^40.
  for (int e = 34; e <= 40; e += 2) {
    const double inv = std::ldexp(1.0, -e);
    AdaptedStrategy s = target;
    for (std::size_t i = 0; i < s.raw().size(); ++i) s.raw()[i] += dir.raw()[i] * inv;
    auto v = f.hat(s);
    for (std::size_t l = 0; l < v.size(); ++l) limsup[l] = std::max(limsup[l], v[l]);
  }
  for (std::size_t l = 0; l < base.size(); ++l) {
    bool bad = false;
    if (ext::is_neg_inf(limsup[l])) continue;
    if (ext::is_neg_inf(base[l])) {
      bad = true;
    } else {
      bad = limsup[l] > base[l] + tol * (1.0 + std::abs(base[l]));
    }
    if (bad) {
      if (report.pass) report.witness = UscReport::Witness{target, dir, l, base[l], limsup[l]};
      report.pass = false;
    }
  }
}

}  // namespace

UscReport check_usc_sequence(const LocalFunctional& f, const AdaptedStrategy& target, const AdaptedStrategy& direction,
                             double tol) {
  UscReport report;
  usc_sequence(f, target, direction, tol, report);
  return report;
}

UscReport check_usc(const LocalFunctional& f, std::size_t random_sequences, std::uint64_t seed, double box, double tol) {
  const auto& tree = *f.tree;
  UscReport report;
  AdaptedStrategy zero(tree, f.dim);
  const std::size_t n = zero.raw().size();
  for (std::size_t i = 0; i < n; ++i) {
    for (double sgn : {1.0, -1.0}) {
      AdaptedStrategy dir(tree, f.dim);
      dir.raw()[i] = sgn;
      usc_sequence(f, zero, dir, tol, report);
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_int_distribution<int> quarter(-4, 4);
  for (std::size_t s = 0; s < random_sequences; ++s) {
    AdaptedStrategy target(tree, f.dim), dir(tree, f.dim);
    for (std::size_t i = 0; i < n; ++i) {
      target.raw()[i] = (s % 2 == 0) ? box * quarter(rng) / 4.0 : box * unif(rng);
      dir.raw()[i] = unif(rng);
    }
    usc_sequence(f, target, dir, tol, report);
  }
  return report;
}

}  // namespace nccm
