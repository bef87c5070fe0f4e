#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "nmargof/estimation.hpp"
#include "nmargof/gof.hpp"
#include "nmargof/rng.hpp"
#include "nmargof/types.hpp"

namespace nmargof {

struct BootstrapOptions {
  std::size_t B = 500;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// Refits reuse these settings, warm-started at theta-hat.
  FitOptions fit;
};

struct BootstrapResult {
  std::vector<double> t_star;  // converged replicates, in replicate order
  std::size_t n_failed = 0;
  std::size_t B = 0;
  double level = 0.05;
  double q_star = 0.0;
  double boot_p = 1.0;
  double sigma2_boot_diag = 0.0;  // NaN with fewer than 2 replicates
  bool reject = false;
};

/// Resamples covariate rows with replacement, draws R* ~ Bernoulli(pi(x*;
/// theta-hat)) and, where R* = 1, Y* from f(. | x*; xi-hat).
Dataset bootstrap_sample(const Dataset& data, const FitResult& fit,
                         const OutcomeFamily& fam, Rng& rng);

/// The ceil((1 - a)(B + 1))-th order statistic of |t_star|, or the maximum
/// when that index exceeds B.
double bootstrap_quantile(std::span<const double> t_star, double a);

/// (1 + #{b : |t*_b| >= |t_n|}) / (B + 1).
double bootstrap_p_value(std::span<const double> t_star, double t_n);

/// Quantile, p-value, variance diagnostic and decision for finished
/// replicates.
BootstrapResult summarize_bootstrap(std::vector<double> t_star,
                                    std::size_t n_failed, double t_n,
                                    double a);

/// Sample variance of t_star. Throws Error(kInvalidInput) with fewer than
/// two replicates.
double boot_null_variance_diag(const BootstrapResult& result);

/// Bootstrap test on an already fitted report (the real-data fit).
/// Replicate b draws from child stream b of the seed, so results do not
/// depend on the thread count.
/// Throws Error(kUnstableBootstrap) when more than 10% of refits fail.
BootstrapResult bootstrap_test_at(const Dataset& data,
                                  const OutcomeFamily& fam,
                                  const GofReport& report,
                                  const BootstrapOptions& opts);

/// Fits theta-hat, runs the plug-in test, then the bootstrap test.
std::pair<GofReport, BootstrapResult> bootstrap_test(
    const Dataset& data, const OutcomeFamily& fam, double a,
    const BootstrapOptions& opts);

}  // namespace nmargof
