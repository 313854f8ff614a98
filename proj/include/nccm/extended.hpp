#pragma once

#include <cmath>
#include <limits>

// Extended reals are carried as IEEE doubles: -inf marks an infeasible
// outcome and absorbs finite summands; +inf only shows up in recession
// values and superhedging prices.
namespace nccm::ext {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

inline bool is_neg_inf(double v) { return v == kNegInf; }
inline bool is_pos_inf(double v) { return v == kPosInf; }
inline bool is_finite(double v) { return std::isfinite(v); }

// -inf + anything = -inf (no NaN for -inf + +inf).
inline double add(double a, double b) {
  if (a == kNegInf || b == kNegInf) return kNegInf;
  return a + b;
}

// Equality in the extended sense: infinities compare equal to themselves,
// finite values compare exactly.
inline bool equal(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return false;
  return a == b;
}

// Finite values within tol, or identical infinities.
inline bool close(double a, double b, double tol) {
  if (!std::isfinite(a) || !std::isfinite(b)) return equal(a, b);
  return std::abs(a - b) <= tol;
}

}  // namespace nccm::ext
