#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "nmargof/error.hpp"
#include "nmargof/estimation.hpp"
#include "nmargof/model.hpp"

using Catch::Approx;
using namespace nmargof;
using fixture::vec;

namespace {

Theta make_theta(double alpha, Eigen::VectorXd beta, double gamma,
                 Eigen::VectorXd xi) {
  Theta t;
  t.alpha = alpha;
  t.beta = std::move(beta);
  t.gamma = gamma;
  t.xi = std::move(xi);
  return t;
}

// Random theta inside the feasible range for data from fixture::random_data.
Theta random_theta(FamilyKind kind, const Dataset& data, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd xi(kind == FamilyKind::kBernoulli ? 3 : 4);
  for (Eigen::Index j = 0; j < xi.size(); ++j) xi[j] = 0.5 * u(rng);
  double gamma = u(rng);
  if (kind == FamilyKind::kGamma) {
    double nu_max = -1e300;
    for (const auto& row : data.rows)
      nu_max = std::max(nu_max, xi[0] + xi[1] * row.x[0] + xi[2] * row.x[1]);
    gamma = gamma < 0 ? 2.0 * gamma : 0.8 * gamma * std::exp(-nu_max);
  }
  return make_theta(u(rng), vec({u(rng)}), gamma, xi);
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::abs(b));
}

// Plain logistic regression of R on (1, x) by iteratively reweighted least
// squares, in the usual logit P(R = 1) = b'z orientation.
Eigen::VectorXd irls_logistic(const Eigen::MatrixXd& Z, const Eigen::VectorXd& r) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(Z.cols());
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd eta = Z * b;
    const Eigen::VectorXd p =
        (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).matrix();
    const Eigen::MatrixXd ztwz = Z.transpose() * w.asDiagonal() * Z;
    const Eigen::VectorXd step = ztwz.ldlt().solve(Z.transpose() * (r - p));
    b += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-13) break;
  }
  return b;
}

}  // namespace

TEST_CASE("log_likelihood single missing row at eta = 0", "[estimation]") {
  for (auto kind : {FamilyKind::kBernoulli, FamilyKind::kNormal,
                    FamilyKind::kGamma}) {
    const auto fam = OutcomeFamily::make(kind, 1);
    const Dataset d = fixture::one_covariate({0.7}, {std::nullopt});
    Eigen::VectorXd xi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fam.n_params()));
    // gamma = 0 so the tilt vanishes and eta = alpha + beta x = 0.
    const Theta th = make_theta(0.0, vec({0.0}), 0.0, xi);
    CHECK(log_likelihood(d, th, fam) == Approx(std::log(0.5)).epsilon(1e-14));
  }
}

TEST_CASE("log_likelihood is additive over duplicated rows", "[estimation]") {
  const auto fam = OutcomeFamily::make(FamilyKind::kNormal, 2);
  Dataset d = fixture::random_data(FamilyKind::kNormal, 40, 11);
  std::mt19937_64 rng(5);
  const Theta th = random_theta(FamilyKind::kNormal, d, rng);
  const double once = log_likelihood(d, th, fam);
  Dataset twice = d;
  twice.rows.insert(twice.rows.end(), d.rows.begin(), d.rows.end());
  CHECK(log_likelihood(twice, th, fam) == Approx(2.0 * once).epsilon(1e-13));
}

TEST_CASE("log_likelihood matches a term-by-term sum", "[estimation][oracle]") {
  const std::vector<double> x{-1.2, 0.0, 0.4, 1.5, 2.1};
  const std::vector<std::optional<double>> y{1.0, std::nullopt, 0.0,
                                             std::nullopt, 1.0};
  const Dataset d = fixture::one_covariate(x, y);
  const auto fam = OutcomeFamily::make(FamilyKind::kBernoulli, 1);
  const double alpha = 0.2, beta = -0.5, gamma = 0.7, xi0 = 0.1, xi1 = 0.4;
  const Theta th = make_theta(alpha, vec({beta}), gamma, vec({xi0, xi1}));

  double expected = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-(xi0 + xi1 * x[i])));
    const double c = std::log(1.0 - p + p * std::exp(gamma));
    const double pi = 1.0 / (1.0 + std::exp(alpha + beta * x[i] + c));
    if (y[i]) {
      expected += *y[i] * std::log(p) + (1.0 - *y[i]) * std::log(1.0 - p) +
                  std::log(pi);
    } else {
      expected += std::log(1.0 - pi);
    }
  }
  CHECK(log_likelihood(d, th, fam) == Approx(expected).epsilon(1e-13));
}

TEST_CASE("log_likelihood rejects a divergent tilt", "[estimation]") {
  const auto fam = OutcomeFamily::make(FamilyKind::kGamma, 1);
  const Dataset d = fixture::one_covariate({0.0, 1.0}, {2.0, std::nullopt});
  // scale exp(0) = 1 at every row, so gamma must stay below 1.
  const Theta th = make_theta(0.0, vec({0.0}), 1.5, vec({0.0, 0.0, 0.0}));
  try {
    log_likelihood(d, th, fam);
    FAIL("expected a tilt divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTiltDivergence);
    CHECK(std::string(e.what()).find("row") != std::string::npos);
  }
}

TEST_CASE("score matches finite differences", "[estimation][oracle]") {
  const double h = 1e-6;
  for (auto kind : {FamilyKind::kBernoulli, FamilyKind::kNormal,
                    FamilyKind::kGamma}) {
    const auto fam = OutcomeFamily::make(kind, 2);
    const Dataset d = fixture::random_data(kind, 60, 100 + static_cast<int>(kind));
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 50; ++rep) {
      const Theta th = random_theta(kind, d, rng);
      const Eigen::VectorXd g = score(d, th, fam);
      const Eigen::VectorXd v = th.pack();
      for (Eigen::Index j = 0; j < v.size(); ++j) {
        Eigen::VectorXd vp = v, vm = v;
        vp[j] += h;
        vm[j] -= h;
        const double fd = (log_likelihood(d, Theta::unpack(vp, 1), fam) -
                           log_likelihood(d, Theta::unpack(vm, 1), fam)) /
                          (2.0 * h);
        INFO(family_name(kind) << " rep " << rep << " coord " << j);
        CHECK(rel_err(g[j], fd) <= 1e-5);
      }
    }
  }
}

TEST_CASE("alpha score vanishes at the centered propensity", "[estimation]") {
  const auto fam = OutcomeFamily::make(FamilyKind::kNormal, 2);
  const Dataset d = fixture::random_data(FamilyKind::kNormal, 80, 3);
  const double rbar = 1.0 - d.missing_rate();
  const Theta th = make_theta(std::log((1.0 - rbar) / rbar), vec({0.0}), 0.0,
                              vec({0.2, 0.5, -0.3, 0.1}));
  CHECK(std::abs(score(d, th, fam)[0]) <= 1e-10);
}

TEST_CASE("fully observed data at gamma = 0 gives the complete-case score",
          "[estimation]") {
  const auto fam = OutcomeFamily::make(FamilyKind::kNormal, 2);
  Dataset d = fixture::random_data(FamilyKind::kNormal, 30, 4);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 1.0);
  for (auto& row : d.rows)
    if (!row.y) row.y = z(rng);
  const Eigen::VectorXd xi = vec({0.2, 0.5, -0.3, std::log(1.7)});
  const Theta th = make_theta(0.4, vec({-0.2}), 0.0, xi);
  const Eigen::VectorXd g = score(d, th, fam);

  const double var = std::exp(xi[3]);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(4);
  for (const auto& row : d.rows) {
    const double mu = xi[0] + xi[1] * row.x[0] + xi[2] * row.x[1];
    const double e = *row.y - mu;
    expected[0] += e / var;
    expected[1] += e / var * row.x[0];
    expected[2] += e / var * row.x[1];
    expected[3] += -0.5 + 0.5 * e * e / var;
  }
  for (Eigen::Index j = 0; j < 4; ++j)
    CHECK(g[th.xi_offset() + j] == Approx(expected[j]).epsilon(1e-12).margin(1e-12));
}

TEST_CASE("analytic Hessian agrees with differenced score", "[estimation][oracle]") {
  for (auto kind : {FamilyKind::kBernoulli, FamilyKind::kNormal,
                    FamilyKind::kGamma}) {
    const auto fam = OutcomeFamily::make(kind, 2);
    const Dataset d = fixture::random_data(kind, 60, 200 + static_cast<int>(kind));
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 20; ++rep) {
      const Theta th = random_theta(kind, d, rng);
      const Eigen::MatrixXd ha = hessian(d, th, fam, HessianMethod::kAnalytic);
      const Eigen::MatrixXd hf =
          hessian(d, th, fam, HessianMethod::kFiniteDifference);
      CHECK((ha - ha.transpose()).lpNorm<Eigen::Infinity>() <= 1e-10);
      for (Eigen::Index a = 0; a < ha.rows(); ++a)
        for (Eigen::Index b = 0; b < ha.cols(); ++b) {
          INFO(family_name(kind) << " rep " << rep << " (" << a << "," << b << ")");
          CHECK(rel_err(ha(a, b), hf(a, b)) <= 1e-5);
        }
    }
  }
}

TEST_CASE("fit recovers the propensity parameters", "[estimation]") {
  const Dataset d = fixture::scenario_data(1, 1, 4000, 2024);
  const auto spec = make_scenario(1, 1);
  const FitResult fit = fit_mle(d, spec.outcome);
  REQUIRE(fit.converged);
  const Eigen::VectorXd v = fit.theta_hat.pack();
  const Eigen::VectorXd truth = vec({-1.1, -1.5, -1.5, -0.5});
  for (Eigen::Index j = 0; j < 4; ++j) {
    INFO("coordinate " << j << " estimate " << v[j] << " se " << fit.se[j]);
    CHECK(std::abs(v[j] - truth[j]) <= 3.0 * fit.se[j]);
  }
}

TEST_CASE("MAR data: gamma near zero and logistic profile", "[estimation][oracle]") {
  auto spec = make_scenario(2, 1);
  spec.gamma = 0.0;
  auto rng = make_rng(31, Stream::kSimulation, 0);
  const Dataset d = draw_joint(spec, 3000, rng);

  const FitResult free_fit = fit_mle(d, spec.outcome);
  REQUIRE(free_fit.converged);
  const Eigen::Index gi = free_fit.theta_hat.gamma_index();
  CHECK(std::abs(free_fit.theta_hat.gamma) <= 3.0 * free_fit.se[gi]);

  FitOptions opts;
  opts.fixed_gamma = 0.0;
  const FitResult prof = fit_mle(d, spec.outcome, opts);
  REQUIRE(prof.converged);

  Eigen::MatrixXd Z(static_cast<Eigen::Index>(d.size()), 3);
  Eigen::VectorXd r(static_cast<Eigen::Index>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    Z.row(ii) << 1.0, d.rows[i].x[0], d.rows[i].x[1];
    r[ii] = d.rows[i].r();
  }
  const Eigen::VectorXd b = irls_logistic(Z, r);
  CHECK(prof.theta_hat.alpha == Approx(-b[0]).margin(1e-4));
  CHECK(prof.theta_hat.beta[0] == Approx(-b[1]).margin(1e-4));
  CHECK(prof.theta_hat.beta[1] == Approx(-b[2]).margin(1e-4));
  CHECK(prof.theta_hat.gamma == 0.0);
  CHECK(prof.se[gi] == 0.0);
}

TEST_CASE("Normal profile at gamma = 0 matches least squares", "[estimation][oracle]") {
  const Dataset d = fixture::scenario_data(2, 1, 2000, 77);
  FitOptions opts;
  opts.fixed_gamma = 0.0;
  const auto fam = make_scenario(2, 1).outcome;
  const FitResult fit = fit_mle(d, fam, opts);
  REQUIRE(fit.converged);

  // Normal equations over complete cases.
  Eigen::MatrixXd XtX = Eigen::MatrixXd::Zero(4, 4);
  Eigen::VectorXd Xty = Eigen::VectorXd::Zero(4);
  for (const auto& row : d.rows) {
    if (!row.y) continue;
    const Eigen::Vector4d z(1.0, row.x[0], row.x[1], row.x[2]);
    XtX += z * z.transpose();
    Xty += z * *row.y;
  }
  const Eigen::VectorXd ols = XtX.llt().solve(Xty);
  for (Eigen::Index j = 0; j < 4; ++j)
    CHECK(fit.theta_hat.xi[j] == Approx(ols[j]).margin(1e-6));
}

TEST_CASE("fit is bit-identical under row permutation", "[estimation]") {
  for (int example : {1, 2, 3}) {
    const Dataset d = fixture::scenario_data(example, 1, 500, 90 + example);
    const auto fam = make_scenario(example, 1).outcome;
    Dataset shuffled = d;
    std::mt19937_64 rng(example);
    std::shuffle(shuffled.rows.begin(), shuffled.rows.end(), rng);
    const FitResult a = fit_mle(d, fam);
    const FitResult b = fit_mle(shuffled, fam);
    const Eigen::VectorXd va = a.theta_hat.pack(), vb = b.theta_hat.pack();
    for (Eigen::Index j = 0; j < va.size(); ++j) CHECK(va[j] == vb[j]);
    CHECK(a.loglik == b.loglik);
    CHECK(a.iterations == b.iterations);
  }
}

TEST_CASE("fit invariants across families", "[estimation]") {
  for (int example : {1, 2, 3}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const Dataset d = fixture::scenario_data(example, 1, 800, seed);
      const FitResult fit = fit_mle(d, make_scenario(example, 1).outcome);
      INFO("example " << example << " seed " << seed << " " << fit.message);
      REQUIRE(fit.converged);
      CHECK(fit.score_inf_norm <= 1e-6);
      CHECK(fit.loglik >= fit.loglik_init);
      CHECK((fit.info_matrix - fit.info_matrix.transpose())
                .lpNorm<Eigen::Infinity>() <= 1e-8);
      CHECK(fit.cov.diagonal().minCoeff() >= 0.0);
      const Eigen::VectorXd se =
          (fit.info_matrix.inverse().diagonal() / static_cast<double>(fit.n))
              .cwiseSqrt();
      for (Eigen::Index j = 0; j < se.size(); ++j)
        CHECK(fit.se[j] == Approx(se[j]).epsilon(1e-8));
    }
  }
}

TEST_CASE("finite-difference Hessian fit agrees with the default", "[estimation]") {
  const Dataset d = fixture::scenario_data(3, 1, 600, 12);
  const auto fam = make_scenario(3, 1).outcome;
  FitOptions fd;
  fd.hessian = HessianMethod::kFiniteDifference;
  const FitResult a = fit_mle(d, fam);
  const FitResult b = fit_mle(d, fam, fd);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  const Eigen::VectorXd va = a.theta_hat.pack(), vb = b.theta_hat.pack();
  for (Eigen::Index j = 0; j < va.size(); ++j) {
    CHECK(va[j] == Approx(vb[j]).margin(1e-6));
    CHECK(a.se[j] == Approx(b.se[j]).epsilon(1e-4));
  }
}

TEST_CASE("iteration cap reports an unconverged fit", "[estimation]") {
  const Dataset d = fixture::scenario_data(1, 3, 500, 5);
  FitOptions opts;
  opts.max_iter = 1;
  const FitResult fit = fit_mle(d, make_scenario(1, 3).outcome, opts);
  CHECK_FALSE(fit.converged);
  CHECK(fit.iterations == 1);
  CHECK_FALSE(fit.message.empty());
  CHECK(fit.loglik >= fit.loglik_init);
}

TEST_CASE("fit input errors", "[estimation]") {
  const auto fam = OutcomeFamily::make(FamilyKind::kNormal, 1);
  auto code_of = [&](const Dataset& d, const FitOptions& o = {}) {
    try {
      fit_mle(d, fam, o);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kUsage;
  };
  CHECK(code_of(fixture::one_covariate({1, 2, 3, 4, 5, 6, 7},
                                       {1.0, 2.0, 0.5, 1.0, 3.0, 2.0, 1.0})) ==
        ErrorCode::kDegenerateDesign);
  CHECK(code_of(fixture::one_covariate(
            {1, 2, 3, 4, 5, 6, 7},
            {std::nullopt, std::nullopt, std::nullopt, std::nullopt,
             std::nullopt, std::nullopt, std::nullopt})) ==
        ErrorCode::kDegenerateDesign);
  CHECK(code_of(fixture::one_covariate({1, 2, 3}, {1.0, std::nullopt, 2.0})) ==
        ErrorCode::kDegenerateDesign);

  // Gamma outcomes with a fixed gamma beyond every row's MGF domain.
  const auto gfam = OutcomeFamily::make(FamilyKind::kGamma, 2);
  const Dataset gd = fixture::random_data(FamilyKind::kGamma, 100, 3);
  FitOptions o;
  o.fixed_gamma = 50.0;
  try {
    fit_mle(gd, gfam, o);
    FAIL("expected an initialization error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInitialization);
  }

  // Bernoulli outcome outside {0, 1}.
  const auto bfam = OutcomeFamily::make(FamilyKind::kBernoulli, 1);
  CHECK_THROWS_AS(
      fit_mle(fixture::one_covariate({1, 2, 3, 4}, {1.0, 2.0, std::nullopt, 0.0}),
              bfam),
      Error);
}
