#include "nccm/error.hpp"

namespace nccm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedTree: return "MalformedTree";
    case ErrorCode::kProbabilityError: return "ProbabilityError";
    case ErrorCode::kBudgetExceeded: return "BudgetExceeded";
    case ErrorCode::kInvalidGrid: return "InvalidGrid";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNegativeOrderNotAllowed: return "NegativeOrderNotAllowed";
    case ErrorCode::kRefinementBudgetExceeded: return "RefinementBudgetExceeded";
    case ErrorCode::kGridTooCoarse: return "GridTooCoarse";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kNoAnalyticForm: return "NoAnalyticForm";
    case ErrorCode::kNotLinear: return "NotLinear";
    case ErrorCode::kSearchBudgetExceeded: return "SearchBudgetExceeded";
    case ErrorCode::kInfeasibleEverywhere: return "InfeasibleEverywhere";
    case ErrorCode::kEmptyFeasibleSet: return "EmptyFeasibleSet";
    case ErrorCode::kAllInfeasible: return "AllInfeasible";
    case ErrorCode::kDegenerateCone: return "DegenerateCone";
    case ErrorCode::kNotInterior: return "NotInterior";
    case ErrorCode::kNotRelativeInterior: return "NotRelativeInterior";
    case ErrorCode::kConeMismatch: return "ConeMismatch";
    case ErrorCode::kTargetMismatch: return "TargetMismatch";
    case ErrorCode::kSingularGram: return "SingularGram";
    case ErrorCode::kInconsistentScalarizations: return "InconsistentScalarizations";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace nccm
