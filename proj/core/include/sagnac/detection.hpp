#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sagnac/noise.hpp"
#include "sagnac/signal.hpp"
#include "sagnac/units.hpp"

namespace sagnac {

/// Interference extrema and the static modulator phase of Eq.-style
/// two-port interference. In photon-counting mode the intensities are
/// per-pulse detection probabilities rather than watts.
struct InterferenceParams {
  double i_max = 0.0;
  double i_min = 0.0;
  double phi = 0.0;  // radians

  InterferenceParams() = default;
  InterferenceParams(double imax, double imin, double phi_);
};

enum class DetectorMode { classical, photon_counting };

struct DetectorParams {
  double efficiency = 0.1;
  double dark_prob_per_pulse = 7e-7;
  double pulse_rate_hz = 10e6;  // converts per-pulse dark rate to per-second
  double dead_time_s = 10e-6;
  DetectorMode mode = DetectorMode::photon_counting;

  double dark_rate_hz() const { return dark_prob_per_pulse * pulse_rate_hz; }
};

/// Sampled detector flux. Units follow the pipeline: watts in classical
/// mode, expected detection probability per sample in photon mode.
struct Flux {
  TimeGrid grid;
  std::vector<double> values;
};

/// Single-photon detection event times from one detector, sorted ascending.
struct TimestampSeries {
  std::vector<double> times_s;
  int detector_id = 0;  // 0 -> D0, 1 -> D1
  double span_s = 0.0;
};

struct TimeSeries {
  TimeGrid grid;
  std::vector<double> values;
};

struct Histogram {
  double period_s = 0.0;
  double bin_width_s = 0.0;
  std::size_t n_periods = 0;  // periods folded, if known
  std::vector<double> bin_start_s;
  std::vector<std::uint64_t> counts;
};

/// Two-port interference fluxes scaled by the instantaneous signal envelope.
/// D1 is the complementary port (cosine negated), so D0 + D1 conserves the
/// envelope times (i_max + i_min).
std::pair<Flux, Flux> interference_flux(const SignalPattern& signal,
                                        const PhaseTrace& phase,
                                        const InterferenceParams& params);

/// Adds half the backscatter waveform to each detector flux. `scale`
/// converts the waveform's watts into the flux units (1.0 when the flux is
/// in watts).
void add_backscatter(Flux& d0, Flux& d1, const BackscatterWaveform& backscatter,
                     double scale = 1.0);

/// Watts -> expected detection probability per sample for the given detector.
double watts_to_prob_per_sample(double power_w, double dt_s,
                                const DetectorParams& detector,
                                double wavelength_m = kDefaultWavelengthM);

/// Inhomogeneous Poisson thinning of a per-sample detection probability flux,
/// with dark counts added and dead-time pruning applied. Deterministic under
/// seed. Throws if any per-sample probability exceeds 0.1.
TimestampSeries spad_detect(const Flux& prob_per_sample, const DetectorParams& params,
                            double span_s, std::uint64_t seed, int detector_id = 0);

/// Event sampler for a periodic steady-state flux: Poisson draws per period
/// with positions from the per-period CDF. Equivalent in distribution to
/// spad_detect over n_periods repetitions, but costs O(events).
TimestampSeries spad_detect_periodic(const Flux& prob_per_sample_one_period,
                                     std::size_t n_periods,
                                     const DetectorParams& params, std::uint64_t seed,
                                     int detector_id = 0);

/// Classical intensity trace with additive Gaussian equipment noise sized so
/// that phase extraction on a noise-free-phase input has variance floor_c.
TimeSeries classical_trace(const Flux& flux_w, const InterferenceParams& params,
                           double floor_c_rad2, std::uint64_t seed);

/// Counts of events by time modulo period.
Histogram fold_histogram(const TimestampSeries& series, double period_s,
                         double bin_s);

}  // namespace sagnac
