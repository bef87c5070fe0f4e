#include "nmargof/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "nmargof/error.hpp"
#include "nmargof/model.hpp"
#include "nmargof/parallel.hpp"

namespace nmargof {

Dataset bootstrap_sample(const Dataset& data, const FitResult& fit,
                         const OutcomeFamily& fam, Rng& rng) {
  if (!fit.converged) {
    throw Error(ErrorCode::kNotConverged,
                "bootstrap sampling requires a converged fit");
  }
  const std::size_t n = data.size();
  const Theta& theta = fit.theta_hat;
  const double s = kernel::aux(fam, theta.xi);
  std::vector<double> pi(n);
  std::vector<double> nu(n);
  std::vector<double> x_out(data.out_cols.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& x = data.rows[i].x;
    gather(x, data.out_cols, x_out);
    nu[i] = kernel::linear_index(fam, x_out, theta.xi);
    pi[i] = propensity(x, theta, fam, data.prop_cols, data.out_cols);
  }

  Dataset out;
  out.prop_cols = data.prop_cols;
  out.out_cols = data.out_cols;
  out.names = data.names;
  out.rows.resize(n);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = pick(rng);
    auto& row = out.rows[i];
    row.x = data.rows[src].x;
    if (unif(rng) < pi[src]) row.y = kernel::draw(fam.kind, nu[src], s, rng);
  }
  return out;
}

double bootstrap_quantile(std::span<const double> t_star, double a) {
  if (t_star.empty()) {
    throw Error(ErrorCode::kInvalidInput, "no bootstrap replicates");
  }
  std::vector<double> abs_t(t_star.size());
  std::transform(t_star.begin(), t_star.end(), abs_t.begin(),
                 [](double t) { return std::abs(t); });
  std::sort(abs_t.begin(), abs_t.end());
  const double b1 = static_cast<double>(abs_t.size() + 1);
  // Guard against (1 - a)(B + 1) landing a rounding error above an integer.
  const auto rank = static_cast<std::size_t>(std::ceil((1.0 - a) * b1 - 1e-9));
  if (rank == 0) return abs_t.front();
  return rank <= abs_t.size() ? abs_t[rank - 1] : abs_t.back();
}

double bootstrap_p_value(std::span<const double> t_star, double t_n) {
  const double target = std::abs(t_n);
  const auto exceed = std::count_if(t_star.begin(), t_star.end(),
                                    [target](double t) {
                                      return std::abs(t) >= target;
                                    });
  return static_cast<double>(1 + exceed) /
         static_cast<double>(t_star.size() + 1);
}

BootstrapResult summarize_bootstrap(std::vector<double> t_star,
                                    std::size_t n_failed, double t_n,
                                    double a) {
  BootstrapResult res;
  res.level = a;
  res.n_failed = n_failed;
  res.B = t_star.size() + n_failed;
  res.t_star = std::move(t_star);
  res.q_star = bootstrap_quantile(res.t_star, a);
  res.boot_p = bootstrap_p_value(res.t_star, t_n);
  res.reject = std::abs(t_n) > res.q_star;
  res.sigma2_boot_diag = res.t_star.size() >= 2
                             ? boot_null_variance_diag(res)
                             : std::numeric_limits<double>::quiet_NaN();
  return res;
}

double boot_null_variance_diag(const BootstrapResult& result) {
  const auto& t = result.t_star;
  if (t.size() < 2) {
    throw Error(ErrorCode::kInvalidInput,
                "variance diagnostic needs at least two replicates");
  }
  double mean = 0.0;
  for (double v : t) mean += v;
  mean /= static_cast<double>(t.size());
  double ss = 0.0;
  for (double v : t) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(t.size() - 1);
}

BootstrapResult bootstrap_test_at(const Dataset& data,
                                  const OutcomeFamily& fam,
                                  const GofReport& report,
                                  const BootstrapOptions& opts) {
  if (opts.B == 0) {
    throw Error(ErrorCode::kInvalidInput,
                "bootstrap needs at least one replicate");
  }
  const FitResult& fit = report.fit;
  if (!fit.converged) {
    throw Error(ErrorCode::kNotConverged,
                "bootstrap requires a converged fit on the observed data");
  }
  FitOptions refit = opts.fit;
  refit.start = fit.theta_hat;

  auto replicate = [&](std::size_t b) -> std::optional<double> {
    Rng rng = make_rng(opts.seed, Stream::kBootstrap, b);
    const Dataset boot = bootstrap_sample(data, fit, fam, rng);
    try {
      const FitResult bfit = fit_mle(boot, fam, refit);
      if (!bfit.converged) return std::nullopt;
      const double t = compute_Tn(boot, bfit.theta_hat, fam);
      if (!std::isfinite(t)) return std::nullopt;
      return t;
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  const auto draws = parallel_map(opts.B, opts.threads, replicate);

  std::vector<double> t_star;
  t_star.reserve(opts.B);
  std::size_t failed = 0;
  for (const auto& d : draws) {
    if (d) {
      t_star.push_back(*d);
    } else {
      ++failed;
    }
  }
  if (static_cast<double>(failed) > 0.1 * static_cast<double>(opts.B) ||
      t_star.empty()) {
    throw Error(ErrorCode::kUnstableBootstrap,
                std::to_string(failed) + " of " + std::to_string(opts.B) +
                    " bootstrap refits failed to converge");
  }
  return summarize_bootstrap(std::move(t_star), failed, report.t_n,
                             report.level);
}

std::pair<GofReport, BootstrapResult> bootstrap_test(
    const Dataset& data, const OutcomeFamily& fam, double a,
    const BootstrapOptions& opts) {
  if (opts.B == 0) {
    throw Error(ErrorCode::kInvalidInput,
                "bootstrap needs at least one replicate");
  }
  GofReport report = plugin_test(data, fam, a, opts.fit);
  BootstrapResult boot = bootstrap_test_at(data, fam, report, opts);
  return {std::move(report), std::move(boot)};
}

}  // namespace nmargof
