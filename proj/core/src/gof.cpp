#include "nmargof/gof.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

#include "nmargof/design.hpp"
#include "nmargof/error.hpp"

namespace nmargof {

double compute_Tn(const Dataset& data, const Theta& theta,
                  const OutcomeFamily& fam) {
  const Design d = Design::build(data, fam);
  const RowPieces pieces = Likelihood(d).pieces(theta.pack());
  return pieces.h.sum() / std::sqrt(static_cast<double>(d.n()));
}

PluginVariance assemble_plugin_variance(const Eigen::MatrixXd& z,
                                        const Eigen::VectorXd& h_hat,
                                        const Eigen::MatrixXd& J_hat,
                                        double min_rcond) {
  const Eigen::Index k = J_hat.rows();
  if (z.cols() != k + 1 || h_hat.size() != k || z.rows() < 2) {
    throw Error(ErrorCode::kInvalidInput, "plug-in variance shape mismatch");
  }
  PluginVariance pv;
  pv.h_hat = h_hat;
  pv.J_hat = J_hat;

  const Eigen::MatrixXd centered = z.rowwise() - z.colwise().mean();
  pv.Sigma_hat = centered.transpose() * centered /
                 static_cast<double>(z.rows() - 1);
  pv.Sigma_hat = 0.5 * (pv.Sigma_hat + pv.Sigma_hat.transpose()).eval();

  Eigen::FullPivLU<Eigen::MatrixXd> lu(J_hat);
  if (!lu.isInvertible() || lu.rcond() < min_rcond) {
    throw Error(ErrorCode::kIllConditionedVariance,
                "information matrix is singular; plug-in variance unavailable");
  }
  Eigen::VectorXd weights(k + 1);
  weights[0] = 1.0;
  weights.tail(k) = lu.solve(h_hat);
  pv.sigma2_hat = std::max(0.0, weights.dot(pv.Sigma_hat * weights));
  return pv;
}

PluginVariance plugin_variance(const Dataset& data, const FitResult& fit,
                               const OutcomeFamily& fam) {
  if (!fit.converged) {
    throw Error(ErrorCode::kNotConverged,
                "plug-in variance requires a converged fit");
  }
  const Design d = Design::build(data, fam);
  const RowPieces pieces = Likelihood(d).pieces(fit.theta_hat.pack());
  Eigen::MatrixXd z(d.n(), d.n_params() + 1);
  z.col(0) = pieces.h;
  z.rightCols(d.n_params()) = pieces.psi;
  const Eigen::VectorXd h_hat = pieces.dh.colwise().mean().transpose();
  return assemble_plugin_variance(z, h_hat, fit.info_matrix);
}

double normal_p_value(double t, double sigma) {
  if (sigma == 0.0) return t == 0.0 ? 1.0 : 0.0;
  return std::erfc(std::abs(t) / (sigma * std::sqrt(2.0)));
}

GofReport plugin_test_at(const Dataset& data, const OutcomeFamily& fam,
                         double a, FitResult fit) {
  if (!(a > 0.0 && a < 1.0)) {
    throw Error(ErrorCode::kInvalidInput, "level must lie in (0, 1)");
  }
  GofReport rep;
  rep.level = a;
  rep.n = data.size();
  rep.t_n = compute_Tn(data, fit.theta_hat, fam);
  rep.delta_hat = rep.t_n / std::sqrt(static_cast<double>(rep.n));
  try {
    const PluginVariance pv = plugin_variance(data, fit, fam);
    rep.sigma_hat = std::sqrt(pv.sigma2_hat);
    rep.plugin_p = normal_p_value(rep.t_n, rep.sigma_hat);
    const double z = boost::math::quantile(
        boost::math::normal_distribution<double>(), 1.0 - a / 2.0);
    rep.plugin_reject = std::abs(rep.t_n) > rep.sigma_hat * z;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kIllConditionedVariance &&
        e.code() != ErrorCode::kNotConverged) {
      throw;
    }
    rep.sigma_hat = std::numeric_limits<double>::quiet_NaN();
    rep.plugin_p = std::numeric_limits<double>::quiet_NaN();
    rep.plugin_reject = false;
    rep.warnings.emplace_back(e.what());
  }
  rep.fit = std::move(fit);
  return rep;
}

GofReport plugin_test(const Dataset& data, const OutcomeFamily& fam, double a,
                      const FitOptions& opts) {
  if (!(a > 0.0 && a < 1.0)) {
    throw Error(ErrorCode::kInvalidInput, "level must lie in (0, 1)");
  }
  FitResult fit = fit_mle(data, fam, opts);
  if (!fit.converged) {
    throw Error(ErrorCode::kNotConverged,
                "maximum likelihood fit did not converge: " + fit.message);
  }
  return plugin_test_at(data, fam, a, std::move(fit));
}

}  // namespace nmargof
