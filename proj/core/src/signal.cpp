#include "sagnac/signal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sagnac/detection.hpp"
#include "sagnac/noise.hpp"

namespace sagnac {

double SignalPattern::peak_power_w() const {
  double peak = 0.0;
  for (double p : power_w) peak = std::max(peak, p);
  return peak;
}

double SignalPattern::total_energy_j() const {
  double e = 0.0;
  for (double p : power_w) e += p * grid.dt;
  return e;
}

SignalPattern make_pulse_train(double rate_hz, double width_s, double peak_power_w,
                               const TimeGrid& grid) {
  if (!(rate_hz > 0.0) || !(width_s > 0.0) || peak_power_w < 0.0)
    throw std::invalid_argument("make_pulse_train: invalid parameters");
  if (!(width_s < 1.0 / rate_hz))
    throw std::invalid_argument("make_pulse_train: width must be < 1/rate");
  if (grid.dt > width_s + 1e-18)
    throw std::invalid_argument("make_pulse_train: grid cannot resolve the pulse width");

  SignalPattern pat;
  pat.grid = grid;
  pat.power_w.assign(grid.n, 0.0);
  pat.period_s = grid.span();
  pat.meta.pulse_rate_hz = rate_hz;
  pat.meta.pulse_width_s = width_s;
  const double pulse_period = 1.0 / rate_hz;
  const double span = grid.span();
  // Distribute each pulse's energy over the samples it overlaps, so the
  // energy per pulse is exactly peak * width regardless of alignment.
  for (double start = 0.0; start < span - 0.5 * grid.dt; start += pulse_period) {
    const double end = start + width_s;
    auto i0 = static_cast<std::size_t>(start / grid.dt);
    auto i1 = static_cast<std::size_t>(std::ceil(end / grid.dt));
    i1 = std::min<std::size_t>(i1, grid.n);
    for (std::size_t i = i0; i < i1; ++i) {
      const double lo = std::max(start, static_cast<double>(i) * grid.dt);
      const double hi = std::min(end, static_cast<double>(i + 1) * grid.dt);
      if (hi > lo) pat.power_w[i] += peak_power_w * (hi - lo) / grid.dt;
    }
  }
  return pat;
}

SignalPattern make_cw(double power_w, const TimeGrid& grid) {
  if (power_w < 0.0) throw std::invalid_argument("make_cw: power must be >= 0");
  SignalPattern pat;
  pat.grid = grid;
  pat.power_w.assign(grid.n, power_w);
  pat.period_s = grid.span();
  return pat;
}

SignalPattern apply_burst(const SignalPattern& pattern, double on_time_s,
                          double off_time_s) {
  if (!(on_time_s > 0.0) || off_time_s < 0.0)
    throw std::invalid_argument("apply_burst: need on > 0 and off >= 0");
  if (off_time_s == 0.0) return pattern;
  if (on_time_s + off_time_s > pattern.grid.span() + 0.5 * pattern.grid.dt)
    throw std::invalid_argument("apply_burst: burst period exceeds the grid span");
  if (pattern.meta.pulse_rate_hz > 0.0 &&
      on_time_s < 1.0 / pattern.meta.pulse_rate_hz)
    throw std::invalid_argument("apply_burst: on-time shorter than one pulse period");

  const double dt = pattern.grid.dt;
  // Burst boundaries rounded to the nearest sample and recorded in the meta.
  const auto on_samples = static_cast<std::size_t>(std::llround(on_time_s / dt));
  const auto period_samples =
      static_cast<std::size_t>(std::llround((on_time_s + off_time_s) / dt));
  if (on_samples == 0 || period_samples <= on_samples)
    throw std::invalid_argument("apply_burst: burst times unresolvable on the grid");

  SignalPattern out = pattern;
  for (std::size_t i = 0; i < out.grid.n; ++i)
    if (i % period_samples >= on_samples) out.power_w[i] = 0.0;
  out.meta.burst_on_s = static_cast<double>(on_samples) * dt;
  out.meta.burst_off_s = static_cast<double>(period_samples - on_samples) * dt;
  out.meta.duty = out.meta.burst_on_s / (out.meta.burst_on_s + out.meta.burst_off_s);
  return out;
}

double optimal_duty_two_user() {
  // on = L/(2 v_g), off = L/v_g; the length cancels.
  return 1.0 / 3.0;
}

double snr_value(double total_loss_db, double backscatter_power_w) {
  if (backscatter_power_w <= 0.0) return std::numeric_limits<double>::infinity();
  return std::pow(10.0, -total_loss_db / 10.0) / backscatter_power_w;
}

double snr(const LoopLayout& layout, const SignalPattern& pattern, double t_s) {
  const BackscatterWaveform bw = backscatter_response(layout, pattern);
  return snr_value(layout.total_loss_db(), bw.total_at(t_s));
}

namespace {

// Worst-case backscatter detection probability (per detector) over the pulse
// detection windows of a k-slot burst.
struct WindowCheck {
  double worst_prob = 0.0;
  double worst_power_w = 0.0;
};

WindowCheck worst_window(const BackscatterWaveform& bw, std::size_t on_slots,
                         double slot_s, double width_s, double transit_s,
                         const DetectorParams& detector, double wavelength_m) {
  const double dt = bw.grid.dt;
  const double period = bw.grid.span();
  const double window = width_s + 2.0 * dt;
  const double prob_per_w =
      detector.efficiency * dt / photon_energy_j(wavelength_m) * 0.5;
  WindowCheck out;
  for (std::size_t i = 0; i < on_slots; ++i) {
    const double center =
        std::fmod(static_cast<double>(i) * slot_s + 0.5 * width_s + transit_s, period);
    const auto j0 = static_cast<long long>(std::floor((center - 0.5 * window) / dt));
    const auto j1 = static_cast<long long>(std::ceil((center + 0.5 * window) / dt));
    double prob = 0.0;
    double peak = 0.0;
    const auto n = static_cast<long long>(bw.grid.n);
    for (long long j = j0; j <= j1; ++j) {
      const double v = bw.total_w[static_cast<std::size_t>(((j % n) + n) % n)];
      prob += v * prob_per_w;
      peak = std::max(peak, v);
    }
    if (prob > out.worst_prob) {
      out.worst_prob = prob;
      out.worst_power_w = peak;
    }
  }
  return out;
}

}  // namespace

BurstPlan design_burst(const LoopLayout& layout, const PulseTrainSpec& pulse,
                       const DetectorParams& detector, double margin,
                       double grid_dt_s, double wavelength_m) {
  if (!(margin >= 1.0))
    throw std::invalid_argument("design_burst: margin must be >= 1");
  const double slot = 1.0 / pulse.rate_hz;
  const double v_g = layout.group().km_per_s();
  const double raw_period = 1.5 * layout.length_km() / v_g;  // 3L/(2 v_g)
  const auto n_slots = static_cast<std::size_t>(std::llround(raw_period / slot));
  if (n_slots < 2) throw std::invalid_argument("design_burst: loop too short for rate");
  const double period = static_cast<double>(n_slots) * slot;
  const auto n_grid = static_cast<std::size_t>(std::llround(period / grid_dt_s));
  const TimeGrid grid(0.0, grid_dt_s, n_grid);
  const double transit = layout.transit_time_s();
  const double threshold = detector.dark_prob_per_pulse / margin;

  const SignalPattern train =
      make_pulse_train(pulse.rate_hz, pulse.width_s, pulse.peak_power_w, grid);

  auto evaluate = [&](std::size_t k) {
    const SignalPattern burst =
        k >= n_slots ? train
                     : apply_burst(train, static_cast<double>(k) * slot,
                                   static_cast<double>(n_slots - k) * slot);
    const BackscatterWaveform bw = backscatter_response(layout, burst);
    return worst_window(bw, k, slot, pulse.width_s, transit, detector, wavelength_m);
  };

  WindowCheck full = evaluate(n_slots);
  std::size_t best;
  WindowCheck best_check;
  if (full.worst_prob <= threshold) {
    best = n_slots;
    best_check = full;
  } else {
    WindowCheck lo_check = evaluate(1);
    if (lo_check.worst_prob > threshold)
      throw std::runtime_error(
          "design_burst: infeasible, source power too high for the dark-rate bound");
    // Bisect for the largest feasible on-time in whole pulse periods.
    std::size_t lo = 1, hi = n_slots;
    while (hi - lo > 1) {
      const std::size_t mid = lo + (hi - lo) / 2;
      const WindowCheck c = evaluate(mid);
      if (c.worst_prob <= threshold) {
        lo = mid;
        lo_check = c;
      } else {
        hi = mid;
      }
    }
    best = lo;
    best_check = lo_check;
  }

  BurstPlan plan;
  plan.on_time_s = static_cast<double>(best) * slot;
  plan.off_time_s = period - plan.on_time_s;
  plan.period_s = period;
  plan.windowed_backscatter_prob = best_check.worst_prob;
  plan.predicted_snr = snr_value(layout.total_loss_db(), best_check.worst_power_w);
  return plan;
}

}  // namespace sagnac
