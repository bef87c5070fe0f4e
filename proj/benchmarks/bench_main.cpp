#include <benchmark/benchmark.h>

#include "nmargof/bootstrap.hpp"
#include "nmargof/estimation.hpp"
#include "nmargof/gof.hpp"
#include "nmargof/simulation.hpp"

namespace {

nmargof::Dataset example_data(int example, std::size_t n) {
  auto rng = nmargof::make_rng(1, nmargof::Stream::kSimulation, 0);
  return nmargof::draw_joint(nmargof::make_scenario(example, 1), n, rng);
}

void BM_Score(benchmark::State& state) {
  const auto spec = nmargof::make_scenario(static_cast<int>(state.range(0)), 1);
  const auto data = example_data(spec.example, 1000);
  const auto fit = nmargof::fit_mle(data, spec.outcome);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nmargof::score(data, fit.theta_hat, spec.outcome));
  }
}
BENCHMARK(BM_Score)->DenseRange(1, 3);

void BM_FitCold(benchmark::State& state) {
  const auto spec = nmargof::make_scenario(static_cast<int>(state.range(0)), 1);
  const auto data = example_data(spec.example, 1000);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nmargof::fit_mle(data, spec.outcome));
  }
}
BENCHMARK(BM_FitCold)->DenseRange(1, 3)->Unit(benchmark::kMillisecond);

void BM_FitFiniteDifferenceHessian(benchmark::State& state) {
  const auto spec = nmargof::make_scenario(static_cast<int>(state.range(0)), 1);
  const auto data = example_data(spec.example, 1000);
  nmargof::FitOptions opts;
  opts.hessian = nmargof::HessianMethod::kFiniteDifference;
  for (auto _ : state) {
    benchmark::DoNotOptimize(nmargof::fit_mle(data, spec.outcome, opts));
  }
}
BENCHMARK(BM_FitFiniteDifferenceHessian)
    ->DenseRange(1, 3)
    ->Unit(benchmark::kMillisecond);

void BM_BootstrapReplicate(benchmark::State& state) {
  const auto spec = nmargof::make_scenario(static_cast<int>(state.range(0)), 1);
  const auto data = example_data(spec.example, 1000);
  const auto fit = nmargof::fit_mle(data, spec.outcome);
  nmargof::FitOptions warm;
  warm.start = fit.theta_hat;
  std::uint64_t b = 0;
  for (auto _ : state) {
    auto rng = nmargof::make_rng(3, nmargof::Stream::kBootstrap, b++);
    const auto boot = nmargof::bootstrap_sample(data, fit, spec.outcome, rng);
    const auto bfit = nmargof::fit_mle(boot, spec.outcome, warm);
    benchmark::DoNotOptimize(
        nmargof::compute_Tn(boot, bfit.theta_hat, spec.outcome));
  }
}
BENCHMARK(BM_BootstrapReplicate)
    ->DenseRange(1, 3)
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
