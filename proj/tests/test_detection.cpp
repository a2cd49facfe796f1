#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <vector>

#include "sagnac/analysis.hpp"
#include "sagnac/detection.hpp"
#include "sagnac/noise.hpp"
#include "sagnac/signal.hpp"

using namespace sagnac;

namespace {

PhaseTrace flat_phase(const TimeGrid& grid, double value = 0.0) {
  return PhaseTrace{grid, std::vector<double>(grid.n, value), 0.0};
}

}  // namespace

TEST_CASE("two-port interference extrema") {
  const TimeGrid grid(0.0, 1e-7, 64);
  const SignalPattern cw = make_cw(1e-3, grid);
  const InterferenceParams constructive(3.5e-3, 7e-7, 0.0);

  auto [d0, d1] = interference_flux(cw, flat_phase(grid), constructive);
  CHECK(d0.values[10] == doctest::Approx(3.5e-3).epsilon(1e-12));
  CHECK(d1.values[10] == doctest::Approx(7e-7).epsilon(1e-12));

  const InterferenceParams destructive(3.5e-3, 7e-7, M_PI);
  auto [e0, e1] = interference_flux(cw, flat_phase(grid), destructive);
  CHECK(e0.values[10] == doctest::Approx(7e-7).epsilon(1e-9));
  CHECK(e1.values[10] == doctest::Approx(3.5e-3).epsilon(1e-12));
}

TEST_CASE("port complementarity under a modulated envelope") {
  const TimeGrid grid(0.0, 1e-9, 1000);
  const SignalPattern pat = make_pulse_train(10e6, 50e-9, 1e-3, grid);
  const InterferenceParams params(3.5e-3, 7e-7, 0.3);
  PhaseTrace phase = flat_phase(grid);
  for (std::size_t i = 0; i < grid.n; ++i)
    phase.values[i] = 0.2 * std::sin(static_cast<double>(i));
  auto [d0, d1] = interference_flux(pat, phase, params);
  const double peak = pat.peak_power_w();
  for (std::size_t i = 0; i < grid.n; ++i) {
    const double envelope = pat.power_w[i] / peak;
    const double total = envelope * (params.i_max + params.i_min);
    CHECK(d0.values[i] + d1.values[i] == doctest::Approx(total).epsilon(1e-12));
  }
}

TEST_CASE("constructive dip is second order in the phase") {
  const TimeGrid grid(0.0, 1e-7, 8);
  const SignalPattern cw = make_cw(1e-3, grid);
  const InterferenceParams params(3.5e-3, 7e-7, 0.0);
  auto dip = [&](double eps) {
    auto [d0, d1] = interference_flux(cw, flat_phase(grid, eps), params);
    return params.i_max - d0.values[0];
  };
  // Quadratic scaling: quadrupling under a doubled phase offset.
  CHECK(dip(2e-4) / dip(1e-4) == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(dip(1e-4) ==
        doctest::Approx(0.5 * (params.i_max - params.i_min) * 0.5 * 1e-8).epsilon(1e-6));
}

TEST_CASE("backscatter splits evenly between the ports") {
  const TimeGrid grid(0.0, 1e-7, 64);
  Flux d0{grid, std::vector<double>(grid.n, 0.0)};
  Flux d1 = d0;
  BackscatterWaveform bw;
  bw.grid = grid;
  bw.period_s = grid.span();
  bw.total_w.assign(grid.n, 4e-9);

  SUBCASE("pure backscatter lands identically on both") {
    add_backscatter(d0, d1, bw);
    for (std::size_t i = 0; i < grid.n; ++i) {
      CHECK(d0.values[i] == doctest::Approx(2e-9));
      CHECK(d0.values[i] == d1.values[i]);
    }
  }

  SUBCASE("zero waveform is the identity") {
    bw.total_w.assign(grid.n, 0.0);
    d0.values[3] = 1e-6;
    add_backscatter(d0, d1, bw);
    CHECK(d0.values[3] == 1e-6);
    CHECK(d1.values[3] == 0.0);
  }
}

TEST_CASE("dark counts follow the Poisson expectation") {
  // 7e-7 per pulse at 10 MHz is 7 Hz; over 30 s that is 210 counts.
  const TimeGrid grid(0.0, 1e-5, 100);
  const Flux dark_only{grid, std::vector<double>(grid.n, 0.0)};
  DetectorParams params;
  params.dark_prob_per_pulse = 7e-7;
  params.pulse_rate_hz = 10e6;
  params.dead_time_s = 0.0;

  double total = 0.0;
  const int n_seeds = 10;
  for (int s = 0; s < n_seeds; ++s)
    total += static_cast<double>(
        spad_detect(dark_only, params, 30.0, 900 + s).times_s.size());
  const double mean = total / n_seeds;
  // 3 sigma on the mean of 10 Poisson(210) draws
  CHECK(std::abs(mean - 210.0) < 3.0 * std::sqrt(210.0 / n_seeds));
}

TEST_CASE("dead time enforces a minimum gap") {
  const TimeGrid grid(0.0, 1e-6, 100);
  const Flux bright{grid, std::vector<double>(grid.n, 0.05)};
  DetectorParams params;
  params.dark_prob_per_pulse = 0.0;
  params.dead_time_s = 10e-6;
  const TimestampSeries ts = spad_detect(bright, params, 0.1, 5);
  REQUIRE(ts.times_s.size() > 100);
  for (std::size_t i = 1; i < ts.times_s.size(); ++i)
    CHECK(ts.times_s[i] - ts.times_s[i - 1] >= params.dead_time_s);
}

TEST_CASE("free-running counts match the Poisson total") {
  const TimeGrid grid(0.0, 1e-6, 1000);
  const double p = 2e-3;
  const Flux flux{grid, std::vector<double>(grid.n, p)};
  DetectorParams params;
  params.dark_prob_per_pulse = 0.0;
  params.dead_time_s = 0.0;
  const double span = 0.5;
  const double expected = p * span / grid.dt;

  double total = 0.0;
  const int n_seeds = 50;
  for (int s = 0; s < n_seeds; ++s)
    total += static_cast<double>(spad_detect(flux, params, span, 40 + s).times_s.size());
  const double mean = total / n_seeds;
  CHECK(std::abs(mean - expected) < 3.0 * std::sqrt(expected / n_seeds));
}

TEST_CASE("detection is deterministic per seed and rejects coarse grids") {
  const TimeGrid grid(0.0, 1e-6, 1000);
  const Flux flux{grid, std::vector<double>(grid.n, 1e-3)};
  DetectorParams params;
  params.dead_time_s = 0.0;
  const TimestampSeries a = spad_detect(flux, params, 0.05, 77);
  const TimestampSeries b = spad_detect(flux, params, 0.05, 77);
  CHECK(a.times_s == b.times_s);

  const Flux hot{grid, std::vector<double>(grid.n, 0.2)};
  CHECK_THROWS(spad_detect(hot, params, 0.01, 1));
}

TEST_CASE("periodic sampler agrees with the per-sample sampler in rate") {
  const TimeGrid grid(0.0, 1e-6, 1000);
  const double p = 1e-3;
  const Flux flux{grid, std::vector<double>(grid.n, p)};
  DetectorParams params;
  params.dark_prob_per_pulse = 0.0;
  params.dead_time_s = 0.0;
  const std::size_t n_periods = 500;
  const double expected = p * static_cast<double>(grid.n * n_periods);
  double total = 0.0;
  const int n_seeds = 40;
  for (int s = 0; s < n_seeds; ++s) {
    const TimestampSeries ts = spad_detect_periodic(flux, n_periods, params, 300 + s);
    total += static_cast<double>(ts.times_s.size());
    for (std::size_t i = 1; i < ts.times_s.size(); ++i)
      REQUIRE(ts.times_s[i] > ts.times_s[i - 1]);
  }
  CHECK(std::abs(total / n_seeds - expected) < 3.0 * std::sqrt(expected / n_seeds));
}

TEST_CASE("classical trace noise maps to the phase-extraction floor") {
  const InterferenceParams params(3.5e-3, 7e-7, M_PI / 2.0);
  const TimeGrid grid(0.0, 1e-6, 20000);
  // Quadrature point: cos(phi + 0) = 0
  const double quad = params.i_min + 0.5 * (params.i_max - params.i_min);
  const Flux flux{grid, std::vector<double>(grid.n, quad)};

  SUBCASE("zero floor reproduces the flux exactly") {
    const TimeSeries tr = classical_trace(flux, params, 0.0, 1);
    CHECK(tr.values == flux.values);
  }

  SUBCASE("floor 0.0072 rad^2 round-trips within 10%") {
    const TimeSeries tr = classical_trace(flux, params, 0.0072, 11);
    const PhaseTrace ph = extract_phase(tr, params);
    double m = 0.0, v = 0.0;
    for (double x : ph.values) m += x;
    m /= static_cast<double>(ph.values.size());
    for (double x : ph.values) v += (x - m) * (x - m);
    v /= static_cast<double>(ph.values.size() - 1);
    CHECK(v == doctest::Approx(0.0072).epsilon(0.10));
  }
}

TEST_CASE("fold histogram") {
  TimestampSeries ts;
  ts.span_s = 1.0;
  const double period = 1e-3;
  for (int k = 0; k < 1000; ++k)
    ts.times_s.push_back(static_cast<double>(k) * period + 2.55e-4);
  const Histogram h = fold_histogram(ts, period, 1e-5);
  std::size_t occupied = 0;
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    if (h.counts[b] > 0) {
      ++occupied;
      CHECK(h.bin_start_s[b] == doctest::Approx(2.5e-4).epsilon(1e-6));
      CHECK(h.counts[b] == 1000);
    }
  CHECK(occupied == 1);
  CHECK(h.n_periods == 1000);
  CHECK_THROWS(fold_histogram(ts, 1e-5, 1e-3));
}
