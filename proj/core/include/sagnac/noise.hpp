#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sagnac/loop.hpp"
#include "sagnac/signal.hpp"
#include "sagnac/units.hpp"

namespace sagnac {

/// Steady-state backscatter power over one signal period, split by
/// propagation direction.
struct BackscatterWaveform {
  TimeGrid grid;
  std::vector<double> clockwise_w;
  std::vector<double> counterclockwise_w;
  std::vector<double> total_w;
  double period_s = 0.0;

  /// Periodic lookup of the total waveform at an arbitrary time.
  double total_at(double t) const;
};

/// Periodic steady-state convolution of the pattern's sampled pulse energies
/// with the directional impulse responses. Wrap-around tails from preceding
/// periods are accumulated over the full round-trip horizon.
BackscatterWaveform backscatter_response(const LoopLayout& layout,
                                         const SignalPattern& pattern);

/// Power-law phase-noise model sigma^2(L) = a * L^b with an additive
/// equipment floor c and a band-limited white spectrum.
struct PhaseNoiseModel {
  std::string fiber_label;
  double amplitude = 0.0;      // rad^2 / km^b
  double exponent = 0.0;       // b
  double floor_rad2 = 0.0;     // c, equipment noise
  double bandwidth_hz = 1e6;

  /// SMF-28 ULL, anchored to 0.06 rad^2 at 200 km with b = 2.6.
  static PhaseNoiseModel ull_default();
  /// SMF-28 with b = 3.1; the amplitude must be supplied explicitly.
  static PhaseNoiseModel smf28(double amplitude);
};

struct PhaseTrace {
  TimeGrid grid;
  std::vector<double> values;  // radians
  double target_variance = 0.0;
};

double variance_model(double length_km, const PhaseNoiseModel& model);

/// Zero-mean Gaussian process with a flat spectrum up to the model bandwidth,
/// scaled so the ensemble variance equals a * L^b. Deterministic under seed.
PhaseTrace synthesize_phase(const PhaseNoiseModel& model, double length_km,
                            const TimeGrid& grid, std::uint64_t seed);

/// Same process with an explicitly specified target variance.
PhaseTrace synthesize_phase_variance(double target_variance, double bandwidth_hz,
                                     const TimeGrid& grid, std::uint64_t seed);

}  // namespace sagnac
