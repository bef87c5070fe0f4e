// nmar-gof: goodness-of-fit tests for logistic propensity-score models with
// nonignorable missing outcomes.
//
//   nmar-gof fit      --data d.csv --outcome y --propensity-cols a,b ...
//   nmar-gof test     ... --method both --boot-reps 500 --out report.json
//   nmar-gof simulate --example 1 --scenario I --n 1000 --reps 500 ...
//
// Exit codes: 0 success, 2 the null was rejected at --alpha, 1 error.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nmargof/error.hpp"
#include "nmargof/io.hpp"

namespace {

constexpr int kExitError = 1;

void add_data_options(CLI::App& cmd, nmargof::RunConfig& cfg,
                      std::string& family) {
  cmd.add_option("--data", cfg.data_path, "CSV file with a header row")
      ->required();
  cmd.add_option("--outcome", cfg.outcome_col,
                 "outcome column; empty or NA marks a missing outcome")
      ->required();
  cmd.add_option("--family", family, "bernoulli | normal | gamma")
      ->check(CLI::IsMember({"bernoulli", "normal", "gamma"}))
      ->required();
  cmd.add_option("--propensity-cols", cfg.propensity_cols,
                 "covariates entering the propensity model")
      ->delimiter(',');
  cmd.add_option("--outcome-cols", cfg.outcome_cols,
                 "covariates of the outcome model")
      ->delimiter(',')
      ->required();
  cmd.add_option("--out", cfg.output_path, "write the JSON report here");
  cmd.add_option("--threads", cfg.threads, "worker threads (0 = all cores)");
}

void report_error(const nmargof::Error& e) {
  nlohmann::json j{{"error", std::string(nmargof::error_code_name(e.code()))},
                   {"message", e.what()}};
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goodness-of-fit tests for logistic propensity-score models "
               "under nonignorable missingness"};
  app.require_subcommand(1);

  nmargof::RunConfig fit_cfg;
  std::string fit_family;
  auto* fit_cmd = app.add_subcommand("fit", "fit the null model only");
  add_data_options(*fit_cmd, fit_cfg, fit_family);

  nmargof::RunConfig test_cfg;
  std::string test_family;
  std::string method = "both";
  auto* test_cmd = app.add_subcommand("test", "fit and run the tests");
  add_data_options(*test_cmd, test_cfg, test_family);
  test_cmd->add_option("--method", method, "plugin | bootstrap | both")
      ->check(CLI::IsMember({"plugin", "bootstrap", "both"}));
  test_cmd->add_option("--alpha", test_cfg.level, "significance level");
  test_cmd->add_option("--boot-reps", test_cfg.B, "bootstrap replicates B");
  test_cmd->add_option("--seed", test_cfg.seed, "run seed");

  nmargof::SimulateConfig sim;
  std::string scenario = "I";
  auto* sim_cmd =
      app.add_subcommand("simulate", "rejection rates for a built-in scenario");
  sim_cmd->add_option("--example", sim.example, "1 (binary), 2 (normal), 3 (gamma)")
      ->required();
  sim_cmd->add_option("--scenario", scenario, "I..V")->required();
  sim_cmd->add_option("--n", sim.study.n, "sample size");
  sim_cmd->add_option("--reps", sim.study.reps, "replications");
  sim_cmd->add_option("--boot-reps", sim.study.B, "bootstrap replicates B");
  sim_cmd->add_option("--alpha", sim.study.level, "significance level");
  sim_cmd->add_option("--seed", sim.study.seed, "run seed");
  sim_cmd->add_option("--threads", sim.study.threads,
                      "worker threads (0 = all cores)");
  sim_cmd->add_option("--out", sim.output_path,
                      "JSON summary path; the table goes to <out>.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return kExitError;
  }

  try {
    if (*sim_cmd) {
      sim.scenario = nmargof::parse_roman(scenario);
      const auto summary = nmargof::cmd_simulate(sim);
      std::cout << nmargof::format_table(
          std::span<const nmargof::RejectionSummary>(&summary, 1));
      std::cerr << "runtime: " << summary.runtime.count() << " s, "
                << summary.failed << " failed replications\n";
      return 0;
    }
    nmargof::RunConfig cfg = *fit_cmd ? fit_cfg : test_cfg;
    cfg.family = nmargof::parse_family(*fit_cmd ? fit_family : test_family);
    cfg.method = *fit_cmd ? nmargof::Method::kNone
                          : nmargof::parse_method(method);
    const auto result = nmargof::cmd_test(cfg);
    std::cout << result.text;
    return result.exit_code;
  } catch (const nmargof::Error& e) {
    report_error(e);
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}
