#pragma once

// Small builders shared by the unit tests.

#include <initializer_list>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "nmargof/rng.hpp"
#include "nmargof/simulation.hpp"
#include "nmargof/types.hpp"

namespace fixture {

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

/// One covariate used in both roles.
inline nmargof::Dataset one_covariate(const std::vector<double>& x,
                                      const std::vector<std::optional<double>>& y) {
  nmargof::Dataset d;
  d.prop_cols = {0};
  d.out_cols = {0};
  d.names = {"x"};
  for (std::size_t i = 0; i < x.size(); ++i) d.rows.push_back({{x[i]}, y[i]});
  return d;
}

/// Draw from a registered scenario with a fixed seed.
inline nmargof::Dataset scenario_data(int example, int scenario, std::size_t n,
                                      std::uint64_t seed) {
  auto rng = nmargof::make_rng(seed, nmargof::Stream::kSimulation, 0);
  return nmargof::draw_joint(nmargof::make_scenario(example, scenario), n, rng);
}

/// Random data for a family: x ~ N(0,1) with x2 ~ U(0,1) as an instrument,
/// outcomes from a plain regression, about 30% missing at random.
inline nmargof::Dataset random_data(nmargof::FamilyKind kind, std::size_t n,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  nmargof::Dataset d;
  d.prop_cols = {0};
  d.out_cols = {0, 1};
  d.names = {"x1", "x2"};
  for (std::size_t i = 0; i < n; ++i) {
    const double x1 = z(rng);
    const double x2 = u(rng);
    double y = 0.0;
    switch (kind) {
      case nmargof::FamilyKind::kBernoulli:
        y = u(rng) < 1.0 / (1.0 + std::exp(-(0.3 + x1 - x2))) ? 1.0 : 0.0;
        break;
      case nmargof::FamilyKind::kNormal:
        y = 0.5 + x1 - x2 + z(rng);
        break;
      case nmargof::FamilyKind::kGamma: {
        std::gamma_distribution<double> g(2.0, std::exp(0.2 * x1 - 0.3 * x2));
        y = g(rng);
        break;
      }
    }
    nmargof::Observation obs{{x1, x2}, std::nullopt};
    if (u(rng) < 0.7) obs.y = y;
    d.rows.push_back(std::move(obs));
  }
  return d;
}

}  // namespace fixture
