#include "sagnac/detection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sagnac/rng.hpp"

namespace sagnac {

InterferenceParams::InterferenceParams(double imax, double imin, double phi_)
    : i_max(imax), i_min(imin), phi(phi_) {
  if (!(i_max >= i_min) || !(i_min >= 0.0))
    throw std::invalid_argument("InterferenceParams: need i_max >= i_min >= 0");
}

namespace {

void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* what) {
  if (a.n != b.n || std::abs(a.dt - b.dt) > 1e-15 * std::max(a.dt, b.dt))
    throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

}  // namespace

std::pair<Flux, Flux> interference_flux(const SignalPattern& signal,
                                        const PhaseTrace& phase,
                                        const InterferenceParams& params) {
  require_same_grid(signal.grid, phase.grid, "interference_flux");
  const double peak = signal.peak_power_w();
  Flux d0{signal.grid, std::vector<double>(signal.grid.n, 0.0)};
  Flux d1 = d0;
  if (peak <= 0.0) return {d0, d1};
  const double half_fringe = 0.5 * (params.i_max - params.i_min);
  for (std::size_t i = 0; i < signal.grid.n; ++i) {
    const double env = signal.power_w[i] / peak;
    const double c = std::cos(params.phi + phase.values[i]);
    d0.values[i] = env * (half_fringe * (1.0 + c) + params.i_min);
    d1.values[i] = env * (half_fringe * (1.0 - c) + params.i_min);
  }
  return {d0, d1};
}

void add_backscatter(Flux& d0, Flux& d1, const BackscatterWaveform& backscatter,
                     double scale) {
  require_same_grid(d0.grid, d1.grid, "add_backscatter");
  if (std::abs(d0.grid.dt - backscatter.grid.dt) >
      1e-15 * std::max(d0.grid.dt, backscatter.grid.dt))
    throw std::invalid_argument("add_backscatter: grid mismatch");
  const std::size_t nb = backscatter.grid.n;
  for (std::size_t i = 0; i < d0.grid.n; ++i) {
    const double half = 0.5 * scale * backscatter.total_w[i % nb];
    d0.values[i] += half;
    d1.values[i] += half;
  }
}

double watts_to_prob_per_sample(double power_w, double dt_s,
                                const DetectorParams& detector,
                                double wavelength_m) {
  return power_w * dt_s * detector.efficiency / photon_energy_j(wavelength_m);
}

TimestampSeries spad_detect(const Flux& prob_per_sample, const DetectorParams& params,
                            double span_s, std::uint64_t seed, int detector_id) {
  const auto& grid = prob_per_sample.grid;
  const double dark_per_sample = params.dark_rate_hz() * grid.dt;
  const auto n_samples = static_cast<std::size_t>(std::llround(span_s / grid.dt));
  Rng rng(seed);
  TimestampSeries out;
  out.detector_id = detector_id;
  out.span_s = span_s;
  double last = -1e300;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double p = prob_per_sample.values[i % grid.n] + dark_per_sample;
    if (p > 0.1)
      throw std::invalid_argument(
          "spad_detect: per-sample probability > 0.1, grid too coarse");
    if (rng.uniform() < p) {
      const double t = grid.t0 + static_cast<double>(i) * grid.dt;
      if (t - last >= params.dead_time_s) {
        out.times_s.push_back(t);
        last = t;
      }
    }
  }
  return out;
}

TimestampSeries spad_detect_periodic(const Flux& prob_per_sample_one_period,
                                     std::size_t n_periods,
                                     const DetectorParams& params, std::uint64_t seed,
                                     int detector_id) {
  const auto& grid = prob_per_sample_one_period.grid;
  const double dark_per_sample = params.dark_rate_hz() * grid.dt;
  std::vector<double> cdf(grid.n);
  double total = 0.0;
  for (std::size_t i = 0; i < grid.n; ++i) {
    const double p = prob_per_sample_one_period.values[i] + dark_per_sample;
    if (p > 0.1)
      throw std::invalid_argument(
          "spad_detect_periodic: per-sample probability > 0.1, grid too coarse");
    total += p;
    cdf[i] = total;
  }
  const double period = grid.span();
  Rng rng(seed);
  TimestampSeries out;
  out.detector_id = detector_id;
  out.span_s = period * static_cast<double>(n_periods);
  std::vector<double> batch;
  double last = -1e300;
  for (std::size_t p = 0; p < n_periods; ++p) {
    const auto k = rng.poisson(total);
    if (k == 0) continue;
    batch.clear();
    for (std::uint64_t j = 0; j < k; ++j) {
      const double u = rng.uniform() * total;
      const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
      const auto idx = static_cast<std::size_t>(it - cdf.begin());
      batch.push_back(period * static_cast<double>(p) + grid.time(idx) +
                      rng.uniform() * grid.dt);
    }
    std::sort(batch.begin(), batch.end());
    for (double t : batch) {
      if (t - last >= params.dead_time_s) {
        out.times_s.push_back(t);
        last = t;
      }
    }
  }
  return out;
}

TimeSeries classical_trace(const Flux& flux_w, const InterferenceParams& params,
                           double floor_c_rad2, std::uint64_t seed) {
  if (floor_c_rad2 < 0.0)
    throw std::invalid_argument("classical_trace: floor must be >= 0");
  TimeSeries out{flux_w.grid, flux_w.values};
  if (floor_c_rad2 == 0.0) return out;
  // Noise amplitude chosen so that extract_phase at the quadrature point maps
  // the intensity noise to a phase variance of exactly floor_c (first order).
  const double sigma = 0.5 * (params.i_max - params.i_min) * std::sqrt(floor_c_rad2);
  Rng rng(seed);
  for (auto& v : out.values) v += sigma * rng.gaussian();
  return out;
}

Histogram fold_histogram(const TimestampSeries& series, double period_s, double bin_s) {
  if (!(period_s > bin_s) || !(bin_s > 0.0))
    throw std::invalid_argument("fold_histogram: need period > bin > 0");
  Histogram h;
  h.period_s = period_s;
  h.bin_width_s = bin_s;
  h.n_periods = static_cast<std::size_t>(std::ceil(series.span_s / period_s));
  const auto n_bins = static_cast<std::size_t>(std::ceil(period_s / bin_s - 1e-12));
  h.bin_start_s.resize(n_bins);
  h.counts.assign(n_bins, 0);
  for (std::size_t b = 0; b < n_bins; ++b) h.bin_start_s[b] = static_cast<double>(b) * bin_s;
  for (double t : series.times_s) {
    double u = std::fmod(t, period_s);
    if (u < 0.0) u += period_s;
    auto idx = static_cast<std::size_t>(u / bin_s);
    if (idx >= n_bins) idx = n_bins - 1;
    ++h.counts[idx];
  }
  return h;
}

}  // namespace sagnac
