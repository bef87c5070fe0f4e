#include "nmargof/error.hpp"

namespace nmargof {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid_input";
    case ErrorCode::kTiltDivergence: return "tilt_divergence";
    case ErrorCode::kDegenerateDesign: return "degenerate_design";
    case ErrorCode::kInitialization: return "initialization";
    case ErrorCode::kNotConverged: return "not_converged";
    case ErrorCode::kIllConditionedVariance: return "ill_conditioned_variance";
    case ErrorCode::kUnstableBootstrap: return "unstable_bootstrap";
    case ErrorCode::kScenarioInfeasible: return "scenario_infeasible";
    case ErrorCode::kStudyFailure: return "study_failure";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kUsage: return "usage";
  }
  return "unknown";
}

}  // namespace nmargof
