#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "nmargof/types.hpp"

namespace nmargof {

enum class HessianMethod {
  kAnalytic,
  /// Central differences of the analytic score, step 1e-5 (1 + |theta_j|).
  kFiniteDifference,
};

struct FitOptions {
  double tol_grad = 1e-6;
  double tol_loglik = 1e-10;
  int max_iter = 200;
  int max_halvings = 60;
  double min_rcond = 1e-12;
  HessianMethod hessian = HessianMethod::kAnalytic;
  /// Warm start; staged initialization is used when absent or infeasible.
  std::optional<Theta> start;
  /// Holds gamma at this value and maximizes over the rest. The reported
  /// covariance then has a zero gamma row and column.
  std::optional<double> fixed_gamma;
};

struct FitResult {
  Theta theta_hat;
  double loglik = 0.0;
  double loglik_init = 0.0;
  double score_inf_norm = 0.0;
  Eigen::MatrixXd info_matrix;  // J = -Hessian / n
  Eigen::MatrixXd cov;          // J^{-1} / n
  Eigen::VectorXd se;
  bool converged = false;
  bool ill_conditioned = false;
  int iterations = 0;
  std::size_t n = 0;
  std::string message;
};

/// Sum over rows of r log f + r log pi + (1 - r) log(1 - pi).
/// Throws Error(kTiltDivergence) naming the first offending row.
double log_likelihood(const Dataset& data, const Theta& theta,
                      const OutcomeFamily& fam);

/// Analytic gradient of log_likelihood in packed theta order.
Eigen::VectorXd score(const Dataset& data, const Theta& theta,
                      const OutcomeFamily& fam);

Eigen::MatrixXd hessian(const Dataset& data, const Theta& theta,
                        const OutcomeFamily& fam,
                        HessianMethod method = HessianMethod::kAnalytic);

/// Maximum likelihood under the null by damped Newton.
///
/// Start (unless warm-started): complete-case outcome fit for xi, logistic
/// regression of R on r(x) for (alpha, beta), gamma = 0. Each step halves
/// until the log-likelihood does not decrease and the tilt stays finite;
/// when -Hessian is singular or indefinite a gradient step with an Armijo
/// search is taken instead and `ill_conditioned` is set.
///
/// Throws Error(kDegenerateDesign) when all or no outcomes are observed or
/// n is smaller than the parameter count, Error(kInitialization) when the
/// start has a non-finite likelihood.
FitResult fit_mle(const Dataset& data, const OutcomeFamily& fam,
                  const FitOptions& opts = {});

}  // namespace nmargof
