#include <benchmark/benchmark.h>

#include <algorithm>
#include <cmath>

#include "infosched/bank.hpp"
#include "infosched/catalog.hpp"
#include "infosched/chain.hpp"
#include "infosched/policy.hpp"
#include "infosched/vi.hpp"

using namespace infosched;

namespace {

// OU on a grid of `states` points over [-2, 9], τ = 2. δ shrinks with h² to
// stay stable; γδ = 0.02.
Setup ou_setup(int states) {
  ModelConfig c = catalog_config("ou", Scale::desk);
  const double h = 11.0 / (states - 1);
  c.gamma = std::max(20, static_cast<int>(std::ceil(0.02 / (0.15 * h * h))));
  c.delta = 0.02 / c.gamma;
  c.grid = {{-2.0, 9.0, h}};
  c.phi = {1.0, 3.0, 0.5};
  return Setup::from_config(c);
}

void BM_BuildKernel(benchmark::State& state) {
  const auto s = ou_setup(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_kernel(s.model, s.grid, 2.0, s.config.delta));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BuildKernel)->RangeMultiplier(2)->Range(128, 2048)->Complexity();

void BM_StridePower(benchmark::State& state) {
  const auto s = ou_setup(static_cast<int>(state.range(0)));
  const auto kernel = build_kernel(s.model, s.grid, 2.0, s.config.delta);
  for (auto _ : state) {
    benchmark::DoNotOptimize(stride_power(kernel, s.mesh.dilation()));
  }
}
BENCHMARK(BM_StridePower)->RangeMultiplier(2)->Range(128, 512)->Unit(benchmark::kMillisecond);

// One lag of the power stream: a dense S×S product.
void BM_PowerStreamStep(benchmark::State& state) {
  const auto s = ou_setup(static_cast<int>(state.range(0)));
  const auto kernel = build_kernel(s.model, s.grid, 2.0, s.config.delta);
  PowerStream stream(stride_power(kernel, s.mesh.dilation()), 1 << 30);
  for (auto _ : state) {
    stream.advance();
    benchmark::DoNotOptimize(stream.current().data());
  }
  const double n = static_cast<double>(state.range(0));
  state.counters["flops"] =
      benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_PowerStreamStep)->RangeMultiplier(2)->Range(128, 1024)->Unit(benchmark::kMillisecond);

void BM_ComputeFitg(benchmark::State& state) {
  const auto s = ou_setup(111);
  BankOptions opts;
  opts.dtheta = 0.5;
  opts.max_lag = s.mesh.size() - 1;
  const auto c = build_component(s.model, s.grid, s.mesh, 2.0, opts);
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_fitg(c, s.mesh, n));
  }
}
BENCHMARK(BM_ComputeFitg)->Arg(1)->Arg(3)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_ValueIterate(benchmark::State& state) {
  const auto s = ou_setup(111);
  BankOptions opts;
  opts.dtheta = 0.5;
  opts.max_lag = vi_max_lag(s.mesh, 3);
  const auto bank = build_theta_bank(s.model, s.grid, s.mesh, s.candidates.values(), opts);
  const auto prior = Prior::uniform(s.candidates);
  ViOptions vopts;
  vopts.max_lag = opts.max_lag;
  for (auto _ : state) {
    benchmark::DoNotOptimize(value_iterate(bank, prior, vopts));
  }
}
BENCHMARK(BM_ValueIterate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
