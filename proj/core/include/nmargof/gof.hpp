#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nmargof/estimation.hpp"
#include "nmargof/types.hpp"

namespace nmargof {

/// Sample analogue of sigma^2 = (1, h' J^-1) Sigma (1, h' J^-1)'.
struct PluginVariance {
  double sigma2_hat = 0.0;
  Eigen::VectorXd h_hat;
  Eigen::MatrixXd J_hat;
  /// Centered (divide by n - 1) covariance of Z_i = (H_i, psi_i').
  Eigen::MatrixXd Sigma_hat;
};

struct GofReport {
  double t_n = 0.0;
  double delta_hat = 0.0;  // t_n / sqrt(n)
  /// NaN when the plug-in variance is unavailable (see warnings).
  double sigma_hat = 0.0;
  double plugin_p = 1.0;
  bool plugin_reject = false;
  double level = 0.05;
  FitResult fit;
  std::size_t n = 0;
  std::vector<std::string> warnings;

  bool plugin_available() const noexcept { return sigma_hat == sigma_hat; }
};

/// n^{-1/2} sum_i [(r_i - pi_i)^2 - pi_i (1 - pi_i)] at theta.
double compute_Tn(const Dataset& data, const Theta& theta,
                  const OutcomeFamily& fam);

/// Assembles the quadratic form from per-row Z_i (rows of `z`, first column
/// H_i), the mean derivative h and J. Throws
/// Error(kIllConditionedVariance) when J is singular.
PluginVariance assemble_plugin_variance(const Eigen::MatrixXd& z,
                                        const Eigen::VectorXd& h_hat,
                                        const Eigen::MatrixXd& J_hat,
                                        double min_rcond = 1e-12);

/// Plug-in variance at a converged fit.
/// Throws Error(kNotConverged) for an unconverged fit and
/// Error(kIllConditionedVariance) when J-hat is singular.
PluginVariance plugin_variance(const Dataset& data, const FitResult& fit,
                               const OutcomeFamily& fam);

/// Two-sided normal p-value 2 (1 - Phi(|t| / sigma)).
double normal_p_value(double t, double sigma);

/// Fits theta-hat, computes T_n and sigma-hat, and rejects when
/// |T_n| > sigma-hat z_{1 - a/2}.
GofReport plugin_test(const Dataset& data, const OutcomeFamily& fam, double a,
                      const FitOptions& opts = {});

/// Same test on an existing fit. When the plug-in variance is unavailable
/// the report carries sigma_hat = NaN, plugin_p = NaN and a warning.
GofReport plugin_test_at(const Dataset& data, const OutcomeFamily& fam,
                         double a, FitResult fit);

}  // namespace nmargof
