#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nccm/market_models.hpp"

namespace nccm {

struct RecessionSchedule {
  int k_min = 4;               // lambda ladder 2^k_min .. 2^k_max
  int k_max = 60;
  int delta_samples = 8;       // log-spaced in (lambda, delta_span * lambda]
  double delta_span = 64.0;
  double eta = 1e-9;           // keeps cube samples strictly inside the ball
  double stagnation_tol = 1e-9;
  double divergence_cap = 1e12;
  bool throw_on_no_convergence = false;
};

enum class RecessionClass { kFinite, kPosInf, kNegInf, kUnconverged };

const char* to_string(RecessionClass c);

struct RecessionEstimate {
  double lower = 0.0;   // ray sample V(delta z) / delta at the last rung
  double upper = 0.0;   // running minimum of the rung suprema
  double value = 0.0;   // upper, or +-inf when classified so
  RecessionClass cls = RecessionClass::kUnconverged;
  int rungs = 0;
};

// Numeric approximation of lim sup_{delta > lambda, |x - z| < 1/lambda} V(delta x) / delta
// at one leaf (sup-norm ball).
RecessionEstimate recession_numeric_leaf(const MarketModel& model, std::size_t leaf, std::span<const double> z,
                                         const RecessionSchedule& schedule = {});
std::vector<RecessionEstimate> recession_numeric(const MarketModel& model, std::span<const double> z,
                                                 const RecessionSchedule& schedule = {});

// Positively homogeneous integrand with values in R and +-inf.
struct RecessionIntegrand {
  std::function<double(std::size_t, std::span<const double>)> eval;
  std::string provenance;  // "analytic" or "numeric"
  bool positively_homogeneous = true;
};

RecessionIntegrand recession_analytic(ModelPtr model);
RecessionIntegrand recession_numeric_integrand(ModelPtr model, const RecessionSchedule& schedule = {});

struct RecessionRow {
  std::size_t leaf = 0;
  std::vector<double> z;
  double analytic = 0.0;
  RecessionEstimate numeric;
};

struct RecessionValidation {
  std::vector<RecessionRow> rows;
  double max_gap = 0.0;          // finite entries
  std::size_t class_mismatches = 0;
  std::size_t unconverged = 0;
  double homogeneity_error = 0.0;  // analytic, over dyadic scalings
  bool pass(double tol) const { return max_gap <= tol && class_mismatches == 0 && unconverged == 0 && homogeneity_error == 0.0; }
};

// Compares numeric and analytic recession on the product grid of
// `points` per axis on [-box, box]^{dT}.
RecessionValidation cross_validate_recession(const MarketModel& model, double box, int points,
                                             const RecessionSchedule& schedule = {});

}  // namespace nccm
