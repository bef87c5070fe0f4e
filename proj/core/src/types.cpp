#include "nmargof/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nmargof/error.hpp"

namespace nmargof {

std::size_t Dataset::n_missing() const noexcept {
  return static_cast<std::size_t>(std::count_if(
      rows.begin(), rows.end(), [](const Observation& o) { return !o.y; }));
}

double Dataset::missing_rate() const noexcept {
  return rows.empty() ? 0.0
                      : static_cast<double>(n_missing()) /
                            static_cast<double>(rows.size());
}

void Dataset::validate() const {
  const std::size_t d = dim();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& x = rows[i].x;
    if (x.size() != d) {
      std::ostringstream msg;
      msg << "row " << i << " has " << x.size() << " covariates, expected "
          << d;
      throw Error(ErrorCode::kInvalidInput, msg.str());
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::isfinite(x[j])) {
        std::ostringstream msg;
        msg << "non-finite covariate at row " << i << ", column " << j;
        throw Error(ErrorCode::kInvalidInput, msg.str());
      }
    }
    if (rows[i].y && !std::isfinite(*rows[i].y)) {
      throw Error(ErrorCode::kInvalidInput,
                  "non-finite outcome at row " + std::to_string(i));
    }
  }
  auto check_cols = [d](const std::vector<std::size_t>& cols,
                        const char* what) {
    for (std::size_t c : cols) {
      if (c >= d) {
        throw Error(ErrorCode::kInvalidInput,
                    std::string(what) + " index " + std::to_string(c) +
                        " out of range for dimension " + std::to_string(d));
      }
    }
  };
  check_cols(prop_cols, "propensity column");
  check_cols(out_cols, "outcome column");
}

std::optional<std::string> Dataset::instrument_warning() const {
  const bool has_instrument =
      std::any_of(out_cols.begin(), out_cols.end(), [this](std::size_t c) {
        return std::find(prop_cols.begin(), prop_cols.end(), c) ==
               prop_cols.end();
      });
  if (has_instrument) return std::nullopt;
  return std::string(
      "no outcome covariate is excluded from the propensity model; gamma may "
      "be weakly identified");
}

std::string family_name(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::kBernoulli: return "bernoulli";
    case FamilyKind::kNormal: return "normal";
    case FamilyKind::kGamma: return "gamma";
  }
  return "unknown";
}

FamilyKind parse_family(const std::string& name) {
  if (name == "bernoulli") return FamilyKind::kBernoulli;
  if (name == "normal") return FamilyKind::kNormal;
  if (name == "gamma") return FamilyKind::kGamma;
  throw Error(ErrorCode::kUsage, "unknown outcome family '" + name + "'");
}

Eigen::VectorXd Theta::pack() const {
  Eigen::VectorXd v(size());
  v[0] = alpha;
  v.segment(1, beta.size()) = beta;
  v[gamma_index()] = gamma;
  v.segment(xi_offset(), xi.size()) = xi;
  return v;
}

Theta Theta::unpack(const Eigen::VectorXd& v, Eigen::Index m) {
  Theta t;
  t.alpha = v[0];
  t.beta = v.segment(1, m);
  t.gamma = v[m + 1];
  t.xi = v.tail(v.size() - m - 2);
  return t;
}

bool Theta::all_finite() const {
  return std::isfinite(alpha) && std::isfinite(gamma) && beta.allFinite() &&
         xi.allFinite();
}

std::vector<std::string> parameter_names(const Dataset& data,
                                         const OutcomeFamily& fam) {
  auto col_name = [&data](std::size_t c) {
    return c < data.names.size() ? data.names[c] : "x" + std::to_string(c + 1);
  };
  std::vector<std::string> out{"alpha"};
  for (std::size_t c : data.prop_cols) out.push_back("beta:" + col_name(c));
  out.emplace_back("gamma");
  out.emplace_back("xi:(intercept)");
  for (std::size_t c : data.out_cols) out.push_back("xi:" + col_name(c));
  if (fam.kind == FamilyKind::kNormal) out.emplace_back("xi:log_sigma2");
  if (fam.kind == FamilyKind::kGamma) out.emplace_back("xi:log_shape");
  return out;
}

void gather(std::span<const double> x, std::span<const std::size_t> cols,
            std::span<double> out) {
  for (std::size_t j = 0; j < cols.size(); ++j) out[j] = x[cols[j]];
}

}  // namespace nmargof
