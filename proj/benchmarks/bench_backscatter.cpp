#include <benchmark/benchmark.h>

#include "sagnac/detection.hpp"
#include "sagnac/loop.hpp"
#include "sagnac/noise.hpp"
#include "sagnac/signal.hpp"

namespace {

sagnac::LoopLayout make_loop(double length_km) {
  return sagnac::build_layout(
      {{length_km, sagnac::Attenuation(0.202), 8.0, "smf28"}}, {},
      sagnac::GroupVelocity(1.468));
}

void BM_BackscatterResponse(benchmark::State& state) {
  const auto loop = make_loop(20.0);
  const auto n = static_cast<std::size_t>(state.range(0));
  const sagnac::TimeGrid grid(0.0, sagnac::backscatter_horizon_s(loop) / n, n);
  const auto pattern = sagnac::make_pulse_train(10e6, 2.0 * grid.dt, 1e-3, grid);
  for (auto _ : state) {
    auto bw = sagnac::backscatter_response(loop, pattern);
    benchmark::DoNotOptimize(bw.total_w.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BackscatterResponse)->RangeMultiplier(4)->Range(1 << 12, 1 << 20)
    ->Complexity(benchmark::oNLogN);

void BM_EventSampler(benchmark::State& state) {
  const auto loop = make_loop(200.0);
  const sagnac::TimeGrid grid(0.0, 1e-7, 16384);
  sagnac::Flux flux{grid, std::vector<double>(grid.n, 3.5e-3)};
  sagnac::DetectorParams det;
  for (auto _ : state) {
    auto events = sagnac::spad_detect_periodic(flux, 64, det, 42);
    benchmark::DoNotOptimize(events.times_s.data());
  }
}
BENCHMARK(BM_EventSampler);

void BM_PhaseSynthesis(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const sagnac::TimeGrid grid(0.0, 1e-7, n);
  for (auto _ : state) {
    auto trace = sagnac::synthesize_phase_variance(0.06, 1e6, grid, 7);
    benchmark::DoNotOptimize(trace.values.data());
  }
}
BENCHMARK(BM_PhaseSynthesis)->RangeMultiplier(4)->Range(1 << 14, 1 << 20);

}  // namespace

BENCHMARK_MAIN();
