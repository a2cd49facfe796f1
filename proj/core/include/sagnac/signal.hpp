#pragma once

#include <cstddef>
#include <vector>

#include "sagnac/loop.hpp"
#include "sagnac/units.hpp"

namespace sagnac {

struct DetectorParams;  // detection.hpp

struct PatternMeta {
  double pulse_rate_hz = 0.0;
  double pulse_width_s = 0.0;
  double burst_on_s = 0.0;
  double burst_off_s = 0.0;
  double duty = 1.0;  // d_B = on / (on + off) when bursts are present
};

/// Sampled optical power waveform, exactly periodic with the declared period.
struct SignalPattern {
  TimeGrid grid;
  std::vector<double> power_w;
  double period_s = 0.0;
  PatternMeta meta;

  double pulse_energy_j() const { return meta.pulse_width_s * peak_power_w(); }
  double peak_power_w() const;
  double total_energy_j() const;
};

/// Rectangular pulses at the given repetition rate. The grid span sets the
/// pattern period.
SignalPattern make_pulse_train(double rate_hz, double width_s, double peak_power_w,
                               const TimeGrid& grid);

SignalPattern make_cw(double power_w, const TimeGrid& grid);

/// Zeroes the power outside [k*(on+off), k*(on+off) + on). Burst boundaries
/// are rounded to the nearest grid sample.
SignalPattern apply_burst(const SignalPattern& pattern, double on_time_s,
                          double off_time_s);

/// Optimal burst duty for two symmetric users at L/2 separation; the loop
/// length cancels and the ratio is exactly 1/3.
double optimal_duty_two_user();

struct PulseTrainSpec {
  double rate_hz = 10e6;
  double width_s = 900e-12;
  double peak_power_w = 0.0;
};

struct BurstPlan {
  double on_time_s = 0.0;
  double off_time_s = 0.0;
  double period_s = 0.0;
  double predicted_snr = 0.0;
  double windowed_backscatter_prob = 0.0;  // worst pulse window, per detector
};

/// Fixes the burst period to 3L/(2 v_g) and searches for the largest on-time
/// (whole pulse periods, by bisection) such that the simulated backscatter
/// detection probability in every pulse window stays below dark/margin.
BurstPlan design_burst(const LoopLayout& layout, const PulseTrainSpec& pulse,
                       const DetectorParams& detector, double margin,
                       double grid_dt_s = 1e-9,
                       double wavelength_m = kDefaultWavelengthM);

/// Signal-to-backscatter ratio 10^(-beta/10) / (P_s conv x)(t).
/// Returns +inf where the backscatter vanishes.
double snr(const LoopLayout& layout, const SignalPattern& pattern, double t_s);

}  // namespace sagnac
