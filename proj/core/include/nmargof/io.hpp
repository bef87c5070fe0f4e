#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nmargof/bootstrap.hpp"
#include "nmargof/gof.hpp"
#include "nmargof/simulation.hpp"
#include "nmargof/types.hpp"

namespace nmargof {

inline constexpr const char* kSchemaVersion = "nmar-gof/1";

enum class Method { kNone, kPlugin, kBootstrap, kBoth };

std::string method_name(Method m);
Method parse_method(const std::string& s);

struct RunConfig {
  std::string data_path;
  std::string outcome_col;
  std::vector<std::string> propensity_cols;
  std::vector<std::string> outcome_cols;
  FamilyKind family = FamilyKind::kBernoulli;
  Method method = Method::kBoth;
  double level = 0.05;
  std::size_t B = 500;
  std::uint64_t seed = 0;
  std::string output_path;
  unsigned threads = 0;

  /// Throws Error(kUsage) on an inconsistent configuration.
  void validate() const;
};

/// Parses CSV text (header row, comma separated). The outcome cell is
/// missing when empty or "NA"; every other used cell must parse as a
/// finite number. Only the named covariate columns are kept, in header
/// order. Throws Error(kParse) naming the line and column.
Dataset parse_csv(std::istream& in, const RunConfig& config);
Dataset load_csv(const std::string& path, const RunConfig& config);

/// Writes covariates and the outcome column (NA when missing) with
/// round-trip exact number formatting.
void write_csv(std::ostream& out, const Dataset& data,
               const std::string& outcome_name = "y");

struct CoefficientRow {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double wald_z = 0.0;
  double p = 0.0;
};

/// Estimate, standard error, Wald Z and two-sided p per parameter.
std::vector<CoefficientRow> coefficient_table(const Dataset& data,
                                              const OutcomeFamily& fam,
                                              const FitResult& fit);

/// JSON report (schema "nmar-gof/1"). Non-finite numbers become null and
/// add a warning.
nlohmann::json make_report(const RunConfig& config, const Dataset& data,
                           const GofReport& report,
                           const std::optional<BootstrapResult>& boot);

/// Plain-text summary of a report.
std::string format_report(const nlohmann::json& report);

struct CommandResult {
  nlohmann::json report;
  std::string text;
  int exit_code = 0;  // 0 ok, 2 rejected at the level
};

/// Fit plus requested tests; writes the JSON report when output_path is
/// set.
CommandResult cmd_test(const RunConfig& config);

struct SimulateConfig {
  int example = 1;
  int scenario = 1;
  StudyOptions study;
  std::string output_path;  // JSON; the text table goes to <path>.txt
};

RejectionSummary cmd_simulate(const SimulateConfig& config);

}  // namespace nmargof
