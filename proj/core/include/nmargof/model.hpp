#pragma once

#include <array>
#include <cmath>
#include <random>
#include <limits>
#include <span>
#include <utility>

#include <Eigen/Dense>

#include "nmargof/types.hpp"

namespace nmargof {

/// Linear index eta is clamped to this magnitude before the logistic map.
inline constexpr double kEtaClamp = 35.0;

/// Value, gradient and Hessian of a scalar in the local coordinates
/// (gamma, nu, s): tilt, linear index of the outcome law, auxiliary
/// parameter (log sigma^2 or log kappa; unused for Bernoulli).
struct LocalDerivs {
  double value = 0.0;
  std::array<double, 3> grad{};
  std::array<std::array<double, 3>, 3> hess{};
};

namespace kernel {

/// Outcome-law linear index nu = xi_coef . (1, x_out).
double linear_index(const OutcomeFamily& fam, std::span<const double> x_out,
                    const Eigen::VectorXd& xi);
double aux(const OutcomeFamily& fam, const Eigen::VectorXd& xi);

/// log f(y | nu, s). No domain checks.
double log_density(FamilyKind kind, double y, double nu, double s);
/// log f and its (nu, s) derivatives; grad[0] and hess[0][*] stay zero.
LocalDerivs log_density_derivs(FamilyKind kind, double y, double nu, double s);

/// True when the tilt at gamma is finite for this (nu, s).
bool tilt_feasible(FamilyKind kind, double gamma, double nu);
/// log E exp(gamma Y) under f(. | nu, s); +inf when infeasible.
double tilt(FamilyKind kind, double gamma, double nu, double s);
/// Tilt with first and second derivatives in (gamma, nu, s).
LocalDerivs tilt_derivs(FamilyKind kind, double gamma, double nu, double s);

/// E[Y] under f(. | nu, s).
double mean(FamilyKind kind, double nu, double s);

/// Linear index of the exponentially tilted law f(y) e^{t y} / M(t), which
/// stays in the family: Bernoulli nu + t, Normal nu + t sigma^2, Gamma
/// nu - log(1 - t lambda). Requires tilt_feasible(kind, t, nu).
double tilted_index(FamilyKind kind, double t, double nu, double s);

/// One draw from f(. | nu, s).
template <class Rng>
double draw(FamilyKind kind, double nu, double s, Rng& rng) {
  switch (kind) {
    case FamilyKind::kBernoulli: {
      std::bernoulli_distribution coin(mean(kind, nu, s));
      return coin(rng) ? 1.0 : 0.0;
    }
    case FamilyKind::kNormal: {
      std::normal_distribution<double> normal(nu, std::exp(0.5 * s));
      return normal(rng);
    }
    case FamilyKind::kGamma: {
      std::gamma_distribution<double> gamma(std::exp(s), std::exp(nu));
      return gamma(rng);
    }
  }
  return 0.0;
}

/// Logistic map 1 / (1 + exp(eta)) after clamping eta.
double logistic_complement(double eta);
/// log(1 + exp(z)) without overflow.
double softplus(double z);

}  // namespace kernel

/// log f(y | x; xi). `x_out` holds the outcome covariates (no intercept).
/// Throws Error(kInvalidInput) for y outside the support or bad parameters.
double log_density(const OutcomeFamily& fam, double y,
                   std::span<const double> x_out, const Eigen::VectorXd& xi);

/// c(x; gamma, xi) = log of the moment-generating function of f(. | x; xi)
/// at gamma. Closed form for every family.
/// Throws Error(kTiltDivergence) when the MGF does not exist at gamma.
double tilt_c(const OutcomeFamily& fam, std::span<const double> x_out,
              double gamma, const Eigen::VectorXd& xi);

struct TiltGradient {
  double dc_dgamma = 0.0;
  Eigen::VectorXd dc_dxi;
};

/// Exact partial derivatives of tilt_c. dc_dgamma is the tilted mean.
TiltGradient tilt_c_grad(const OutcomeFamily& fam,
                         std::span<const double> x_out, double gamma,
                         const Eigen::VectorXd& xi);

/// pi(x; theta) = 1 / (1 + exp(alpha + beta . r(x) + c(x; gamma, xi))).
/// `x` is the full covariate row; roles come from `data`-style index sets.
double propensity(std::span<const double> x, const Theta& theta,
                  const OutcomeFamily& fam,
                  std::span<const std::size_t> prop_cols,
                  std::span<const std::size_t> out_cols);

/// (r - pi)^2 - pi (1 - pi).
constexpr double residual_h(double pi, int r) noexcept {
  const double d = static_cast<double>(r) - pi;
  return d * d - pi * (1.0 - pi);
}

struct GammaRange {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool contains(double g) const noexcept { return g > lo && g < hi; }
};

/// Open interval of gamma on which the tilt is finite at every row of
/// `data` (only Gamma outcomes restrict it: gamma < 1 / max lambda(x_i)).
GammaRange gamma_feasible_range(const OutcomeFamily& fam, const Dataset& data,
                                const Eigen::VectorXd& xi);

/// Throws Error(kInvalidInput) if xi has the wrong length or violates the
/// family invariants.
void check_xi(const OutcomeFamily& fam, const Eigen::VectorXd& xi);

}  // namespace nmargof
