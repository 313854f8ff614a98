#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nccm {

enum class ErrorCode {
  kMalformedTree,
  kProbabilityError,
  kBudgetExceeded,
  kInvalidGrid,
  kDimensionMismatch,
  kNegativeOrderNotAllowed,
  kRefinementBudgetExceeded,
  kGridTooCoarse,
  kNoConvergence,
  kNoAnalyticForm,
  kNotLinear,
  kSearchBudgetExceeded,
  kInfeasibleEverywhere,
  kEmptyFeasibleSet,
  kAllInfeasible,
  kDegenerateCone,
  kNotInterior,
  kNotRelativeInterior,
  kConeMismatch,
  kTargetMismatch,
  kSingularGram,
  kInconsistentScalarizations,
  kSchemaError,
  kInvalidArgument,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace nccm
