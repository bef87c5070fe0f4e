#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nmargof {

/// One unit: fully observed covariates, and an outcome that is present
/// exactly when the unit responded (r = 1).
struct Observation {
  std::vector<double> x;
  std::optional<double> y;

  int r() const noexcept { return y.has_value() ? 1 : 0; }
};

/// Rows plus the covariate roles: `prop_cols` selects r(x) for the
/// propensity model, `out_cols` selects the outcome-model covariates.
struct Dataset {
  std::vector<Observation> rows;
  std::vector<std::size_t> prop_cols;
  std::vector<std::size_t> out_cols;
  std::vector<std::string> names;

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t dim() const noexcept {
    return rows.empty() ? names.size() : rows.front().x.size();
  }
  std::size_t n_missing() const noexcept;
  double missing_rate() const noexcept;

  /// Throws Error(kInvalidInput) when rows disagree on dimension, a
  /// covariate is non-finite, or a column index is out of range.
  void validate() const;

  /// Non-empty when no outcome covariate is excluded from the propensity
  /// covariates, i.e. no instrument is declared.
  std::optional<std::string> instrument_warning() const;
};

enum class FamilyKind { kBernoulli, kNormal, kGamma };

/// Conditional law f(y | x, R = 1; xi) of the outcome among respondents.
///
/// xi layout: the first `n_coef` entries are regression coefficients on
/// (1, x_out). Normal appends log(sigma^2); Gamma appends log(kappa). The
/// linear index is the logit of p (Bernoulli), the mean (Normal) or the log
/// of the scale (Gamma).
struct OutcomeFamily {
  FamilyKind kind = FamilyKind::kBernoulli;
  std::size_t n_coef = 1;

  static OutcomeFamily make(FamilyKind kind, std::size_t n_out_covariates) {
    return {kind, n_out_covariates + 1};
  }

  bool has_aux() const noexcept { return kind != FamilyKind::kBernoulli; }
  std::size_t n_params() const noexcept { return n_coef + (has_aux() ? 1 : 0); }
};

std::string family_name(FamilyKind kind);
FamilyKind parse_family(const std::string& name);

/// theta = (alpha, beta, gamma, xi). Packed order follows the member order.
struct Theta {
  double alpha = 0.0;
  Eigen::VectorXd beta;
  double gamma = 0.0;
  Eigen::VectorXd xi;

  Eigen::Index size() const noexcept { return beta.size() + xi.size() + 2; }
  Eigen::Index gamma_index() const noexcept { return beta.size() + 1; }
  Eigen::Index xi_offset() const noexcept { return beta.size() + 2; }

  Eigen::VectorXd pack() const;
  static Theta unpack(const Eigen::VectorXd& v, Eigen::Index m);
  bool all_finite() const;
};

/// Parameter labels in packed order: alpha, beta:<name>, gamma, xi:...
std::vector<std::string> parameter_names(const Dataset& data,
                                         const OutcomeFamily& fam);

/// Gathers x[cols[j]] into a contiguous buffer.
void gather(std::span<const double> x, std::span<const std::size_t> cols,
            std::span<double> out);

}  // namespace nmargof
