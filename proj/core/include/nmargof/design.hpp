#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "nmargof/types.hpp"

namespace nmargof {

/// Dense per-row view of a dataset for likelihood work.
///
/// Rows are stored in a canonical content order (r, then y, then x
/// lexicographically) so every sum over rows is independent of the input
/// row order. `source_row[i]` maps back to the dataset row.
struct Design {
  Eigen::MatrixXd prop;  // n x (m + 1): (1, r(x))
  Eigen::MatrixXd out;   // n x n_coef: (1, x_out)
  Eigen::VectorXd y;     // 0 where missing
  Eigen::VectorXd r;     // 0 / 1
  std::vector<std::size_t> source_row;
  FamilyKind kind = FamilyKind::kBernoulli;
  bool has_aux = false;

  Eigen::Index n() const noexcept { return r.size(); }
  Eigen::Index m() const noexcept { return prop.cols() - 1; }
  Eigen::Index n_coef() const noexcept { return out.cols(); }
  Eigen::Index n_params() const noexcept {
    return prop.cols() + 1 + out.cols() + (has_aux ? 1 : 0);
  }
  Eigen::Index n_observed() const;

  /// Validates the dataset and the outcome support for `fam`.
  static Design build(const Dataset& data, const OutcomeFamily& fam);
};

/// Per-row quantities at theta for the residual-based statistic.
struct RowPieces {
  Eigen::VectorXd pi;       // clamped propensity
  Eigen::VectorXd h;        // residual H_i
  Eigen::MatrixXd psi;      // n x k score contributions
  Eigen::MatrixXd dh;       // n x k gradient of H_i in theta
};

/// Likelihood of the marginal-propensity model on a Design. Methods
/// returning bool report false when the tilt diverges at some row.
class Likelihood {
 public:
  explicit Likelihood(const Design& design) : d_(design) {}

  const Design& design() const noexcept { return d_; }

  bool value(const Eigen::VectorXd& theta, double& f) const;
  bool gradient(const Eigen::VectorXd& theta, double& f,
                Eigen::VectorXd& g) const;
  bool hessian(const Eigen::VectorXd& theta, double& f, Eigen::VectorXd& g,
               Eigen::MatrixXd& hess) const;
  /// Hessian from central differences of the analytic score.
  bool fd_hessian(const Eigen::VectorXd& theta, Eigen::MatrixXd& hess) const;

  /// Row pieces at theta; throws Error(kTiltDivergence) naming the row.
  RowPieces pieces(const Eigen::VectorXd& theta) const;
  /// First dataset row at which the tilt diverges, or -1.
  long infeasible_row(const Eigen::VectorXd& theta) const;

 private:
  struct Local;
  bool evaluate(const Eigen::VectorXd& theta, int order, Local& loc) const;

  const Design& d_;
};

}  // namespace nmargof
