#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nmargof {

enum class ErrorCode {
  kInvalidInput,
  kTiltDivergence,
  kDegenerateDesign,
  kInitialization,
  kNotConverged,
  kIllConditionedVariance,
  kUnstableBootstrap,
  kScenarioInfeasible,
  kStudyFailure,
  kParse,
  kUsage,
};

/// Machine-readable name, e.g. "tilt_divergence".
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nmargof
