#include "sagnac/noise.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

#include "sagnac/fft.hpp"
#include "sagnac/rng.hpp"

namespace sagnac {

double BackscatterWaveform::total_at(double t) const {
  const double period = grid.span();
  double u = std::fmod(t - grid.t0, period);
  if (u < 0.0) u += period;
  auto idx = static_cast<std::size_t>(u / grid.dt);
  if (idx >= grid.n) idx = grid.n - 1;
  return total_w[idx];
}

namespace {

// Impulse response over the full horizon, folded into one signal period.
std::vector<double> folded_impulse(const LoopLayout& layout, Direction dir,
                                   double dt, std::size_t n_period) {
  const double horizon = backscatter_horizon_s(layout);
  const auto n_h = static_cast<std::size_t>(std::ceil(horizon / dt)) + 1;
  const ImpulseResponse h = impulse_response(layout, dir, TimeGrid(0.0, dt, n_h));
  std::vector<double> folded(n_period, 0.0);
  for (std::size_t k = 0; k < n_h; ++k) folded[k % n_period] += h.values[k];
  return folded;
}

}  // namespace

BackscatterWaveform backscatter_response(const LoopLayout& layout,
                                         const SignalPattern& pattern) {
  const auto& grid = pattern.grid;
  if (pattern.power_w.size() != grid.n)
    throw std::invalid_argument("backscatter_response: pattern/grid size mismatch");
  std::vector<double> energy(grid.n);
  for (std::size_t i = 0; i < grid.n; ++i) energy[i] = pattern.power_w[i] * grid.dt;

  BackscatterWaveform out;
  out.grid = grid;
  out.period_s = grid.span();
  const auto cw_h = folded_impulse(layout, Direction::clockwise, grid.dt, grid.n);
  const auto ccw_h = folded_impulse(layout, Direction::counterclockwise, grid.dt, grid.n);
  out.clockwise_w = fft::circular_convolve(energy, cw_h);
  out.counterclockwise_w = fft::circular_convolve(energy, ccw_h);
  out.total_w.resize(grid.n);
  for (std::size_t i = 0; i < grid.n; ++i) {
    out.clockwise_w[i] = std::max(0.0, out.clockwise_w[i]);
    out.counterclockwise_w[i] = std::max(0.0, out.counterclockwise_w[i]);
    out.total_w[i] = out.clockwise_w[i] + out.counterclockwise_w[i];
  }
  return out;
}

PhaseNoiseModel PhaseNoiseModel::ull_default() {
  PhaseNoiseModel m;
  m.fiber_label = "SMF-28-ULL";
  m.exponent = 2.6;
  m.amplitude = 0.06 / std::pow(200.0, m.exponent);
  m.floor_rad2 = 0.0073;
  return m;
}

PhaseNoiseModel PhaseNoiseModel::smf28(double amplitude) {
  if (!(amplitude >= 0.0))
    throw std::invalid_argument("PhaseNoiseModel::smf28: amplitude must be >= 0");
  PhaseNoiseModel m;
  m.fiber_label = "SMF-28";
  m.exponent = 3.1;
  m.amplitude = amplitude;
  m.floor_rad2 = 0.0072;
  return m;
}

double variance_model(double length_km, const PhaseNoiseModel& model) {
  if (length_km < 0.0)
    throw std::invalid_argument("variance_model: length must be >= 0");
  if (length_km == 0.0) return 0.0;
  return model.amplitude * std::pow(length_km, model.exponent);
}

PhaseTrace synthesize_phase_variance(double target_variance, double bandwidth_hz,
                                     const TimeGrid& grid, std::uint64_t seed) {
  if (target_variance < 0.0)
    throw std::invalid_argument("synthesize_phase: variance must be >= 0");
  const double nyquist = 0.5 / grid.dt;
  if (bandwidth_hz > nyquist)
    throw std::invalid_argument("synthesize_phase: bandwidth exceeds grid Nyquist");
  if (grid.span() * bandwidth_hz < 10.0)
    throw std::invalid_argument(
        "synthesize_phase: grid span must cover >= 10 correlation times");

  const std::size_t n = grid.n;
  const double df = 1.0 / (static_cast<double>(n) * grid.dt);
  std::size_t m = static_cast<std::size_t>(bandwidth_hz / df);
  m = std::min(m, n / 2 > 0 ? n / 2 - 1 : std::size_t{0});
  PhaseTrace trace{grid, std::vector<double>(n, 0.0), target_variance};
  if (m == 0 || target_variance == 0.0) return trace;

  // Frequency-domain synthesis: flat spectrum over the kept band, scaled so
  // the ensemble variance of each sample equals the target.
  const double s = 0.5 * static_cast<double>(n) *
                   std::sqrt(target_variance / static_cast<double>(m));
  Rng rng(seed);
  std::vector<std::complex<double>> spec(n / 2 + 1, {0.0, 0.0});
  for (std::size_t k = 1; k <= m; ++k)
    spec[k] = {s * rng.gaussian(), s * rng.gaussian()};
  trace.values = fft::irfft(spec, n);
  return trace;
}

PhaseTrace synthesize_phase(const PhaseNoiseModel& model, double length_km,
                            const TimeGrid& grid, std::uint64_t seed) {
  if (!(length_km > 0.0))
    throw std::invalid_argument("synthesize_phase: length must be > 0");
  return synthesize_phase_variance(variance_model(length_km, model),
                                   model.bandwidth_hz, grid, seed);
}

}  // namespace sagnac
