#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "nmargof/error.hpp"
#include "nmargof/model.hpp"
#include "nmargof/simulation.hpp"

using Catch::Approx;
using namespace nmargof;

namespace {

const std::array<std::array<double, 3>, 5> kPoints{{{0.0, 0.0, 1.0},
                                                    {1.0, 1.0, 0.5},
                                                    {-1.0, 0.0, 2.0},
                                                    {0.5, 1.0, 1.5},
                                                    {-0.3, 1.0, 0.2}}};

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  return d;
}

Theta true_theta(const ScenarioSpec& spec) {
  Theta t;
  t.alpha = spec.alpha;
  t.beta = Eigen::Vector2d(spec.beta1, spec.beta2);
  t.gamma = spec.gamma;
  t.xi = spec.xi;
  return t;
}

}  // namespace

TEST_CASE("covariate law", "[simulation]") {
  auto rng = make_rng(1, Stream::kCovariates, 0);
  const std::size_t n = 100000;
  const Eigen::MatrixXd x = draw_covariates(n, rng);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const double nd = static_cast<double>(n);
  CHECK(std::abs(mean[0] - 0.0) <= 4.0 / std::sqrt(nd));
  CHECK(std::abs(mean[1] - 0.5) <= 4.0 * 0.5 / std::sqrt(nd));
  CHECK(std::abs(mean[2] - 1.0) <= 4.0 / std::sqrt(nd));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    REQUIRE((x(i, 1) == 0.0 || x(i, 1) == 1.0));
  const Eigen::MatrixXd c = x.rowwise() - mean;
  const double v1 = c.col(0).squaredNorm() / (nd - 1);
  const double v3 = c.col(2).squaredNorm() / (nd - 1);
  // Var of the sample variance of a standard normal is 2 / (n - 1).
  CHECK(std::abs(v1 - 1.0) <= 4.0 * std::sqrt(2.0 / (nd - 1)));
  const double corr = c.col(0).dot(c.col(2)) / ((nd - 1) * std::sqrt(v1 * v3));
  CHECK(std::abs(corr) <= 4.0 / std::sqrt(nd));
}

TEST_CASE("respondent outcomes follow the stated outcome law", "[simulation][oracle]") {
  // 1% two-sample KS critical value, 10^5 respondents vs 10^5 direct draws.
  const double m = 100000.0;
  const double critical = 1.628 * std::sqrt(2.0 / m);
  for (auto [example, scenario] : {std::pair{2, 5}, std::pair{3, 4}, std::pair{2, 2}}) {
    const ScenarioSpec spec = make_scenario(example, scenario);
    for (std::size_t k = 0; k < kPoints.size(); ++k) {
      const auto& x = kPoints[k];
      auto rng = make_rng(10 * example + scenario, Stream::kSimulation, k);
      std::vector<double> sim;
      while (sim.size() < 100000) {
        const Unit u = draw_unit(spec, x, rng);
        if (u.r == 1) sim.push_back(u.y);
      }
      std::mt19937_64 direct(1000 + k);
      const double idx =
          spec.xi[0] + spec.xi[1] * x[0] + spec.xi[2] * x[1] + spec.xi[3] * x[2];
      std::vector<double> ref(100000);
      if (example == 2) {
        std::normal_distribution<double> f(idx, std::exp(0.5 * spec.xi[4]));
        for (auto& v : ref) v = f(direct);
      } else {
        std::gamma_distribution<double> f(spec.kappa, std::exp(idx));
        for (auto& v : ref) v = f(direct);
      }
      const double d = ks_statistic(sim, ref);
      INFO(spec.name() << " point " << k << " KS " << d << " critical " << critical);
      CHECK(d < critical);
    }
  }
}

TEST_CASE("Bernoulli outcome joint pmf", "[simulation][oracle]") {
  for (int scenario : {1, 5}) {
    const ScenarioSpec spec = make_scenario(1, scenario);
    for (std::size_t k = 0; k < kPoints.size(); ++k) {
      const auto& x = kPoints[k];
      const double p = 1.0 / (1.0 + std::exp(-(1.0 - x[0] - x[1] + 2.0 * x[2])));
      const double a = spec.alpha + spec.beta1 * x[0] + spec.beta2 * x[1] + spec.e_fn(x);
      const double t = spec.gamma + spec.g_fn(x);
      const double z = 1.0 + std::exp(a) * (1.0 - p + p * std::exp(t));
      // P(Y = y, R = 1) = f(y) / Z; P(Y = y, R = 0) = f(y) exp(a + t y) / Z.
      const std::array<double, 4> expected{
          (1.0 - p) * std::exp(a) / z,      // y = 0, r = 0
          (1.0 - p) / z,                    // y = 0, r = 1
          p * std::exp(a + t) / z,          // y = 1, r = 0
          p / z};                           // y = 1, r = 1
      std::array<double, 4> count{};
      auto rng = make_rng(500 + scenario, Stream::kSimulation, k);
      constexpr int kDraws = 1000000;
      for (int i = 0; i < kDraws; ++i) {
        const Unit u = draw_unit(spec, x, rng);
        count[static_cast<std::size_t>(2 * static_cast<int>(u.y) + u.r)] += 1.0;
      }
      for (std::size_t c = 0; c < 4; ++c) {
        const double freq = count[c] / kDraws;
        const double se = std::sqrt(expected[c] * (1.0 - expected[c]) / kDraws);
        INFO("scenario " << scenario << " point " << k << " atom " << c << " freq "
                         << freq << " expected " << expected[c]);
        CHECK(std::abs(freq - expected[c]) <= 4.0 * se);
      }
    }
  }
}

TEST_CASE("null response probability equals the model propensity", "[simulation][oracle]") {
  for (int example : {1, 2, 3}) {
    const ScenarioSpec spec = make_scenario(example, 1);
    CHECK(spec.e_label == "0");
    CHECK(spec.g_label == "0");
    const Theta th = true_theta(spec);
    const std::vector<std::size_t> prop{0, 1}, out{0, 1, 2};
    for (std::size_t k = 0; k < kPoints.size(); ++k) {
      const auto& x = kPoints[k];
      const double pi = propensity(x, th, spec.outcome, prop, out);
      auto rng = make_rng(700 + example, Stream::kSimulation, k);
      constexpr int kDraws = 200000;
      int responded = 0;
      for (int i = 0; i < kDraws; ++i) responded += draw_unit(spec, x, rng).r;
      const double freq = static_cast<double>(responded) / kDraws;
      INFO(spec.name() << " point " << k);
      CHECK(std::abs(freq - pi) <= 4.0 * std::sqrt(pi * (1.0 - pi) / kDraws));
    }
  }
}

TEST_CASE("marginal response rate is about 0.8", "[simulation]") {
  for (int example = 1; example <= 3; ++example) {
    for (int scenario = 1; scenario <= 5; ++scenario) {
      const ScenarioSpec spec = make_scenario(example, scenario);
      auto rng = make_rng(900, Stream::kSimulation,
                          static_cast<std::uint64_t>(10 * example + scenario));
      const Dataset d = draw_joint(spec, 100000, rng);
      const double rate = 1.0 - d.missing_rate();
      INFO(spec.name() << " response rate " << rate);
      CHECK(std::abs(rate - 0.8) <= 0.02);
    }
  }
}

TEST_CASE("scenario registry", "[simulation]") {
  const ScenarioSpec s = make_scenario(3, 4);
  CHECK(s.name() == "Example 3 Scenario IV");
  CHECK(s.kappa == Approx(std::exp(1.0)));
  CHECK(make_scenario(3, 3).kappa == 1.0);
  CHECK(s.outcome.kind == FamilyKind::kGamma);
  CHECK(make_scenario(1, 4).alpha == -1.0);
  CHECK(make_scenario(2, 5).beta1 == 3.0);
  for (int k = 1; k <= 5; ++k) CHECK(parse_roman(roman(k)) == k);
  CHECK(parse_roman("3") == 3);
  CHECK_THROWS_AS(parse_roman("VI"), Error);
  try {
    make_scenario(4, 1);
    FAIL("expected a usage error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUsage);
  }
}

TEST_CASE("infeasible tilt names the row", "[simulation]") {
  ScenarioSpec spec = make_scenario(3, 1);
  spec.gamma = 5.0;
  auto rng = make_rng(1, Stream::kSimulation, 0);
  try {
    draw_joint(spec, 50, rng);
    FAIL("expected an infeasible scenario");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kScenarioInfeasible);
    CHECK(std::string(e.what()).find("row 0") != std::string::npos);
  }
}

TEST_CASE("study is deterministic and thread independent", "[simulation]") {
  const ScenarioSpec spec = make_scenario(2, 2);
  StudyOptions opts;
  opts.n = 300;
  opts.reps = 12;
  opts.B = 15;
  opts.seed = 42;
  opts.threads = 1;
  const RejectionSummary a = run_study(spec, opts);
  const RejectionSummary b = run_study(spec, opts);
  opts.threads = 4;
  const RejectionSummary c = run_study(spec, opts);
  const std::string ja = to_json(a).dump();
  CHECK(ja == to_json(b).dump());
  // Thread count is an execution setting and is not serialized.
  CHECK(ja == to_json(c).dump());
  REQUIRE(a.records.size() == c.records.size());
  for (std::size_t r = 0; r < a.records.size(); ++r) {
    CHECK(a.records[r].t_n == c.records[r].t_n);
    CHECK(a.records[r].boot_p == c.records[r].boot_p);
  }
  CHECK(a.completed + a.failed == opts.reps);
  CHECK(a.boot_rate >= 0.0);
  CHECK(a.boot_rate <= 1.0);
  CHECK(a.mc_se == Approx(std::sqrt(a.boot_rate * (1.0 - a.boot_rate) /
                                    static_cast<double>(a.completed))));

  const std::string table = format_table(std::span<const RejectionSummary>(&a, 1));
  CHECK(table.find("Bootstrap") != std::string::npos);
  CHECK(table.find("Plug-in") != std::string::npos);
  CHECK(table.find("II") != std::string::npos);
}

TEST_CASE("study failure and input errors", "[simulation]") {
  const ScenarioSpec spec = make_scenario(1, 1);
  StudyOptions opts;
  opts.n = 200;
  opts.reps = 5;
  opts.B = 5;
  opts.threads = 1;
  opts.fit.max_iter = 0;
  try {
    run_study(spec, opts);
    FAIL("expected a study failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kStudyFailure);
  }
  opts.fit = FitOptions{};
  opts.reps = 0;
  CHECK_THROWS_AS(run_study(spec, opts), Error);
}
