#include "nccm/recession.hpp"

#include <algorithm>
#include <cmath>

#include "nccm/error.hpp"
#include "nccm/extended.hpp"

namespace nccm {

const char* to_string(RecessionClass c) {
  switch (c) {
    case RecessionClass::kFinite: return "finite";
    case RecessionClass::kPosInf: return "+inf";
    case RecessionClass::kNegInf: return "-inf";
    case RecessionClass::kUnconverged: return "unconverged";
  }
  return "unknown";
}

namespace {

std::vector<std::vector<double>> cube_offsets(std::size_t n) {
  std::vector<std::vector<double>> out;
  if (n <= 6) {
    auto all = product_grid({-1.0, 0.0, 1.0}, static_cast<int>(n));
    // Center first.
    std::stable_partition(all.begin(), all.end(), [](const std::vector<double>& o) {
      return std::all_of(o.begin(), o.end(), [](double v) { return v == 0.0; });
    });
    return all;
  }
  out.emplace_back(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (double s : {-1.0, 1.0}) {
      std::vector<double> o(n, 0.0);
      o[i] = s;
      out.push_back(o);
    }
  }
  return out;
}

}  // namespace

RecessionEstimate recession_numeric_leaf(const MarketModel& model, std::size_t leaf, std::span<const double> z,
                                         const RecessionSchedule& s) {
  require(z.size() == model.path_length(), ErrorCode::kDimensionMismatch, "direction has wrong length");
  require(s.k_min <= s.k_max && s.delta_samples >= 1, ErrorCode::kInvalidArgument, "empty recession schedule");
  const std::size_t n = z.size();
  const auto offsets = cube_offsets(n);
  RecessionEstimate est;
  est.upper = ext::kPosInf;
  double prev_upper = ext::kPosInf;
  bool prev_neg_inf = false, prev_above = false, prev_below = false;
  std::vector<double> x(n), scaled(n);
  for (int k = s.k_min; k <= s.k_max; ++k) {
    const double lambda = std::ldexp(1.0, k);
    const double rad = (1.0 - s.eta) / lambda;
    double rung = ext::kNegInf;
    double ray = ext::kNegInf;
    for (int j = 1; j <= s.delta_samples; ++j) {
      const double delta = lambda * std::pow(s.delta_span, static_cast<double>(j) / s.delta_samples);
      for (std::size_t o = 0; o < offsets.size(); ++o) {
        for (std::size_t i = 0; i < n; ++i) {
          x[i] = z[i] + rad * offsets[o][i];
          scaled[i] = delta * x[i];
        }
        double v = model.eval(leaf, scaled);
        double q = ext::is_neg_inf(v) ? ext::kNegInf : v / delta;
        rung = std::max(rung, q);
        if (o == 0) ray = std::max(ray, q);
      }
    }
    ++est.rungs;
    est.lower = ray;
    est.upper = std::min(est.upper, rung);

    const bool neg_inf = ext::is_neg_inf(rung);
    const bool above = est.upper > s.divergence_cap;
    const bool below = est.upper < -s.divergence_cap;
    if (neg_inf && prev_neg_inf) {
      est.cls = RecessionClass::kNegInf;
      est.value = ext::kNegInf;
      return est;
    }
    if ((above && prev_above)) {
      est.cls = RecessionClass::kPosInf;
      est.value = ext::kPosInf;
      return est;
    }
    if (below && prev_below) {
      est.cls = RecessionClass::kNegInf;
      est.value = ext::kNegInf;
      return est;
    }
    if (std::isfinite(est.upper) && std::isfinite(prev_upper) &&
        std::abs(est.upper - prev_upper) < s.stagnation_tol * (1.0 + std::abs(est.upper))) {
      est.cls = RecessionClass::kFinite;
      est.value = est.upper;
      return est;
    }
    prev_neg_inf = neg_inf;
    prev_above = above;
    prev_below = below;
    prev_upper = est.upper;
  }
  est.cls = RecessionClass::kUnconverged;
  est.value = est.upper;
  require(!s.throw_on_no_convergence, ErrorCode::kNoConvergence,
          "recession ladder exhausted at leaf " + std::to_string(leaf) + " without stagnation");
  return est;
}

std::vector<RecessionEstimate> recession_numeric(const MarketModel& model, std::span<const double> z,
                                                 const RecessionSchedule& schedule) {
  std::vector<RecessionEstimate> out;
  for (std::size_t l = 0; l < model.tree().num_leaves(); ++l) out.push_back(recession_numeric_leaf(model, l, z, schedule));
  return out;
}

RecessionIntegrand recession_analytic(ModelPtr model) {
  require(model->flags().has_analytic_recession, ErrorCode::kNoAnalyticForm,
          "model '" + model->name() + "' has no closed-form recession");
  return {[model](std::size_t leaf, std::span<const double> z) { return model->analytic_recession(leaf, z); },
          "analytic", true};
}

RecessionIntegrand recession_numeric_integrand(ModelPtr model, const RecessionSchedule& schedule) {
  return {[model, schedule](std::size_t leaf, std::span<const double> z) {
            return recession_numeric_leaf(*model, leaf, z, schedule).value;
          },
          "numeric", true};
}

RecessionValidation cross_validate_recession(const MarketModel& model, double box, int points,
                                             const RecessionSchedule& schedule) {
  RecessionValidation report;
  const auto grid = product_grid(axis_grid(box, points), static_cast<int>(model.path_length()));
  for (const auto& z : grid) {
    for (std::size_t l = 0; l < model.tree().num_leaves(); ++l) {
      RecessionRow row{l, z, model.analytic_recession(l, z), recession_numeric_leaf(model, l, z, schedule)};
      const double a = row.analytic;
      const auto& e = row.numeric;
      if (e.cls == RecessionClass::kUnconverged) {
        ++report.unconverged;
      } else if (std::isfinite(a) != std::isfinite(e.value) || (!std::isfinite(a) && a != e.value)) {
        ++report.class_mismatches;
      } else if (std::isfinite(a)) {
        report.max_gap = std::max(report.max_gap, std::abs(a - e.value));
      }
      for (double scale : {0.25, 0.5, 2.0, 4.0}) {
        std::vector<double> sz(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) sz[i] = scale * z[i];
        const double as = model.analytic_recession(l, sz);
        if (std::isfinite(a) && std::isfinite(as)) {
          report.homogeneity_error = std::max(report.homogeneity_error, std::abs(as - scale * a));
        } else if (!ext::equal(as, a)) {
          report.homogeneity_error = ext::kPosInf;
        }
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

}  // namespace nccm
