#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "nmargof/estimation.hpp"
#include "nmargof/rng.hpp"
#include "nmargof/types.hpp"

namespace nmargof {

using CovariateFn = std::function<double(std::span<const double>)>;

/// One data-generating mechanism: covariates X = (x1, x2, x3), outcome law
/// f(y | x, R = 1) and the true propensity
/// 1 / (1 + exp(alpha + beta1 x1 + beta2 x2 + gamma y + e(x) + g(x) y)).
struct ScenarioSpec {
  int example = 1;
  int scenario = 1;  // 1..5 for I..V
  double alpha = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double gamma = 0.0;
  CovariateFn e_fn;
  CovariateFn g_fn;
  std::string e_label = "0";
  std::string g_label = "0";
  OutcomeFamily outcome;
  Eigen::VectorXd xi;  // true outcome parameters in OutcomeFamily layout
  double kappa = 1.0;  // Gamma shape (informational)

  std::string name() const;  // e.g. "Example 1 Scenario III"
};

std::string roman(int scenario);
int parse_roman(const std::string& s);

/// Registry entry for example 1..3 and scenario 1..5.
/// Throws Error(kUsage) for ids outside the registry.
ScenarioSpec make_scenario(int example, int scenario);

/// n rows of (x1, x2, x3) with x1 ~ N(0, 1), x2 ~ Bernoulli(0.5),
/// x3 ~ N(1, 1), independent.
Eigen::MatrixXd draw_covariates(std::size_t n, Rng& rng);

/// Outcome and response of one unit at covariates x = (x1, x2, x3).
struct Unit {
  double y = 0.0;
  int r = 0;
};

/// Y | x from the two-component tilt mixture implied by f(y | x, R = 1) and
/// the true propensity, then R | x, y ~ Bernoulli. Throws
/// Error(kScenarioInfeasible) when the tilt diverges at x.
Unit draw_unit(const ScenarioSpec& spec, std::span<const double> x, Rng& rng);

/// Joint draw of (X, Y, R), one draw_unit per row. The dataset uses
/// r(x) = (x1, x2) and outcome covariates (x1, x2, x3). Throws
/// Error(kScenarioInfeasible) naming the row when the tilt diverges.
Dataset draw_joint(const ScenarioSpec& spec, std::size_t n, Rng& rng);

/// Per-replicate record kept for diagnostics.
struct ReplicateRecord {
  bool ok = false;
  double t_n = 0.0;
  double sigma_hat = 0.0;
  double plugin_p = 0.0;
  bool plugin_reject = false;
  double boot_p = 0.0;
  double q_star = 0.0;
  double sigma2_boot = 0.0;
  bool boot_reject = false;
  std::size_t n_boot_failed = 0;
  std::string error;
};

struct StudyOptions {
  std::size_t n = 1000;
  std::size_t reps = 500;
  std::size_t B = 200;
  double level = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  FitOptions fit;
};

struct RejectionSummary {
  ScenarioSpec scenario;
  StudyOptions options;
  std::size_t completed = 0;
  std::size_t failed = 0;
  std::size_t plugin_unavailable = 0;
  double boot_rate = 0.0;
  double plugin_rate = 0.0;
  double mc_se = 0.0;  // of boot_rate
  double plugin_mc_se = 0.0;
  std::chrono::duration<double> runtime{};
  std::vector<ReplicateRecord> records;
};

/// Replication r draws its dataset from child r of the simulation stream
/// and bootstraps with child r of the bootstrap stream, so the summary is
/// identical for any thread count. Throws Error(kStudyFailure) when more
/// than 10% of replications fail.
RejectionSummary run_study(const ScenarioSpec& spec, const StudyOptions& opts);

/// JSON summary without runtime, so equal seeds give equal bytes.
nlohmann::json to_json(const RejectionSummary& s);

/// Aligned text table: one block per (example, n), Bootstrap and Plug-in
/// rows, one column per scenario.
std::string format_table(std::span<const RejectionSummary> summaries);

}  // namespace nmargof
