#include "nmargof/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "nmargof/error.hpp"

namespace nmargof {
namespace kernel {
namespace {

double expit(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void symmetrize(LocalDerivs& d) {
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < a; ++b) d.hess[a][b] = d.hess[b][a];
}

}  // namespace

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double logistic_complement(double eta) {
  return 1.0 / (1.0 + std::exp(std::clamp(eta, -kEtaClamp, kEtaClamp)));
}

double linear_index(const OutcomeFamily& fam, std::span<const double> x_out,
                    const Eigen::VectorXd& xi) {
  double nu = xi[0];
  for (std::size_t j = 0; j < x_out.size(); ++j) {
    nu += xi[static_cast<Eigen::Index>(j) + 1] * x_out[j];
  }
  (void)fam;
  return nu;
}

double aux(const OutcomeFamily& fam, const Eigen::VectorXd& xi) {
  return fam.has_aux() ? xi[static_cast<Eigen::Index>(fam.n_coef)] : 0.0;
}

double log_density(FamilyKind kind, double y, double nu, double s) {
  switch (kind) {
    case FamilyKind::kBernoulli:
      return y * nu - softplus(nu);
    case FamilyKind::kNormal: {
      const double d = y - nu;
      return -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * s -
             0.5 * d * d * std::exp(-s);
    }
    case FamilyKind::kGamma: {
      const double kappa = std::exp(s);
      return -std::lgamma(kappa) - kappa * nu + (kappa - 1.0) * std::log(y) -
             y * std::exp(-nu);
    }
  }
  return 0.0;
}

LocalDerivs log_density_derivs(FamilyKind kind, double y, double nu,
                               double s) {
  LocalDerivs d;
  d.value = log_density(kind, y, nu, s);
  auto& g = d.grad;
  auto& h = d.hess;
  switch (kind) {
    case FamilyKind::kBernoulli: {
      const double p = expit(nu);
      g[1] = y - p;
      h[1][1] = -p * (1.0 - p);
      break;
    }
    case FamilyKind::kNormal: {
      const double prec = std::exp(-s);
      const double res = y - nu;
      g[1] = res * prec;
      g[2] = -0.5 + 0.5 * res * res * prec;
      h[1][1] = -prec;
      h[1][2] = -res * prec;
      h[2][2] = -0.5 * res * res * prec;
      break;
    }
    case FamilyKind::kGamma: {
      const double kappa = std::exp(s);
      const double y_over_scale = y * std::exp(-nu);
      const double core = -boost::math::digamma(kappa) - nu + std::log(y);
      g[1] = -kappa + y_over_scale;
      g[2] = kappa * core;
      h[1][1] = -y_over_scale;
      h[1][2] = -kappa;
      h[2][2] = kappa * core - kappa * kappa * boost::math::trigamma(kappa);
      break;
    }
  }
  symmetrize(d);
  return d;
}

bool tilt_feasible(FamilyKind kind, double gamma, double nu) {
  if (kind != FamilyKind::kGamma || gamma <= 0.0) return true;
  return gamma * std::exp(nu) < 1.0;
}

double tilt(FamilyKind kind, double gamma, double nu, double s) {
  if (gamma == 0.0) return 0.0;
  switch (kind) {
    case FamilyKind::kBernoulli:
      return softplus(nu + gamma) - softplus(nu);
    case FamilyKind::kNormal:
      return gamma * nu + 0.5 * gamma * gamma * std::exp(s);
    case FamilyKind::kGamma: {
      const double u = gamma * std::exp(nu);
      if (!(u < 1.0)) return std::numeric_limits<double>::infinity();
      return -std::exp(s) * std::log1p(-u);
    }
  }
  return 0.0;
}

LocalDerivs tilt_derivs(FamilyKind kind, double gamma, double nu, double s) {
  LocalDerivs d;
  d.value = tilt(kind, gamma, nu, s);
  auto& g = d.grad;
  auto& h = d.hess;
  switch (kind) {
    case FamilyKind::kBernoulli: {
      const double pt = expit(nu + gamma);
      const double p = expit(nu);
      const double vt = pt * (1.0 - pt);
      g = {pt, pt - p, 0.0};
      h[0][0] = vt;
      h[0][1] = vt;
      h[1][1] = vt - p * (1.0 - p);
      break;
    }
    case FamilyKind::kNormal: {
      const double var = std::exp(s);
      g = {nu + gamma * var, gamma, 0.5 * gamma * gamma * var};
      h[0][0] = var;
      h[0][1] = 1.0;
      h[0][2] = gamma * var;
      h[2][2] = 0.5 * gamma * gamma * var;
      break;
    }
    case FamilyKind::kGamma: {
      const double kappa = std::exp(s);
      const double scale = std::exp(nu);
      const double u = gamma * scale;
      const double w = 1.0 - u;
      g = {kappa * scale / w, kappa * u / w, d.value};
      h[0][0] = kappa * scale * scale / (w * w);
      h[0][1] = kappa * scale / (w * w);
      h[0][2] = kappa * scale / w;
      h[1][1] = kappa * u / (w * w);
      h[1][2] = kappa * u / w;
      h[2][2] = d.value;
      break;
    }
  }
  symmetrize(d);
  return d;
}

double mean(FamilyKind kind, double nu, double s) {
  switch (kind) {
    case FamilyKind::kBernoulli: return expit(nu);
    case FamilyKind::kNormal: return nu;
    case FamilyKind::kGamma: return std::exp(s + nu);
  }
  return 0.0;
}

double tilted_index(FamilyKind kind, double t, double nu, double s) {
  switch (kind) {
    case FamilyKind::kBernoulli: return nu + t;
    case FamilyKind::kNormal: return nu + t * std::exp(s);
    case FamilyKind::kGamma: return nu - std::log1p(-t * std::exp(nu));
  }
  return nu;
}

}  // namespace kernel

void check_xi(const OutcomeFamily& fam, const Eigen::VectorXd& xi) {
  if (static_cast<std::size_t>(xi.size()) != fam.n_params()) {
    std::ostringstream msg;
    msg << family_name(fam.kind) << " outcome expects " << fam.n_params()
        << " parameters, got " << xi.size();
    throw Error(ErrorCode::kInvalidInput, msg.str());
  }
  if (!xi.allFinite()) {
    throw Error(ErrorCode::kInvalidInput, "non-finite outcome parameter");
  }
}

namespace {

void check_x_out(const OutcomeFamily& fam, std::span<const double> x_out) {
  if (x_out.size() + 1 != fam.n_coef) {
    throw Error(ErrorCode::kInvalidInput,
                "outcome covariate row has " + std::to_string(x_out.size()) +
                    " entries, expected " + std::to_string(fam.n_coef - 1));
  }
}

void throw_divergence(double gamma, double nu) {
  std::ostringstream msg;
  msg << "moment-generating function diverges: gamma * scale = "
      << gamma * std::exp(nu) << " >= 1";
  throw Error(ErrorCode::kTiltDivergence, msg.str());
}

}  // namespace

double log_density(const OutcomeFamily& fam, double y,
                   std::span<const double> x_out, const Eigen::VectorXd& xi) {
  check_xi(fam, xi);
  check_x_out(fam, x_out);
  if (!std::isfinite(y)) throw Error(ErrorCode::kInvalidInput, "y not finite");
  if (fam.kind == FamilyKind::kBernoulli && y != 0.0 && y != 1.0) {
    throw Error(ErrorCode::kInvalidInput, "Bernoulli outcome must be 0 or 1");
  }
  if (fam.kind == FamilyKind::kGamma && y <= 0.0) {
    throw Error(ErrorCode::kInvalidInput, "Gamma outcome must be positive");
  }
  return kernel::log_density(fam.kind, y, kernel::linear_index(fam, x_out, xi),
                             kernel::aux(fam, xi));
}

double tilt_c(const OutcomeFamily& fam, std::span<const double> x_out,
              double gamma, const Eigen::VectorXd& xi) {
  check_xi(fam, xi);
  check_x_out(fam, x_out);
  const double nu = kernel::linear_index(fam, x_out, xi);
  if (!kernel::tilt_feasible(fam.kind, gamma, nu)) throw_divergence(gamma, nu);
  return kernel::tilt(fam.kind, gamma, nu, kernel::aux(fam, xi));
}

TiltGradient tilt_c_grad(const OutcomeFamily& fam,
                         std::span<const double> x_out, double gamma,
                         const Eigen::VectorXd& xi) {
  check_xi(fam, xi);
  check_x_out(fam, x_out);
  const double nu = kernel::linear_index(fam, x_out, xi);
  if (!kernel::tilt_feasible(fam.kind, gamma, nu)) throw_divergence(gamma, nu);
  const LocalDerivs d = kernel::tilt_derivs(fam.kind, gamma, nu,
                                            kernel::aux(fam, xi));
  TiltGradient out;
  out.dc_dgamma = d.grad[0];
  out.dc_dxi.resize(xi.size());
  out.dc_dxi[0] = d.grad[1];
  for (std::size_t j = 0; j < x_out.size(); ++j) {
    out.dc_dxi[static_cast<Eigen::Index>(j) + 1] = d.grad[1] * x_out[j];
  }
  if (fam.has_aux()) out.dc_dxi[xi.size() - 1] = d.grad[2];
  return out;
}

double propensity(std::span<const double> x, const Theta& theta,
                  const OutcomeFamily& fam,
                  std::span<const std::size_t> prop_cols,
                  std::span<const std::size_t> out_cols) {
  if (static_cast<std::size_t>(theta.beta.size()) != prop_cols.size()) {
    throw Error(ErrorCode::kInvalidInput,
                "beta length does not match the propensity covariates");
  }
  std::vector<double> x_out(out_cols.size());
  gather(x, out_cols, x_out);
  double eta = theta.alpha + tilt_c(fam, x_out, theta.gamma, theta.xi);
  for (std::size_t j = 0; j < prop_cols.size(); ++j) {
    eta += theta.beta[static_cast<Eigen::Index>(j)] * x[prop_cols[j]];
  }
  return kernel::logistic_complement(eta);
}

GammaRange gamma_feasible_range(const OutcomeFamily& fam, const Dataset& data,
                                const Eigen::VectorXd& xi) {
  GammaRange range;
  if (fam.kind != FamilyKind::kGamma || data.rows.empty()) return range;
  check_xi(fam, xi);
  std::vector<double> x_out(data.out_cols.size());
  double max_nu = -std::numeric_limits<double>::infinity();
  for (const auto& row : data.rows) {
    gather(row.x, data.out_cols, x_out);
    max_nu = std::max(max_nu, kernel::linear_index(fam, x_out, xi));
  }
  range.hi = std::exp(-max_nu);
  return range;
}

}  // namespace nmargof
