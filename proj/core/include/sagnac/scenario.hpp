#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sagnac/analysis.hpp"
#include "sagnac/detection.hpp"
#include "sagnac/loop.hpp"
#include "sagnac/noise.hpp"
#include "sagnac/signal.hpp"
#include "sagnac/units.hpp"

namespace sagnac {

inline constexpr const char* kArtifactVersion = "0.1.0";

struct SegmentSpec {
  double length_km = 0.0;
  double alpha_db_per_km = 0.0;
  double eta_per_s = 0.0;
  std::string label;
};

struct BurstSpec {
  std::string mode = "none";  // "none" | "fixed" | "design"
  double on_s = 0.0;
  double off_s = 0.0;
  double design_margin = 1.0;
};

struct SignalSpec {
  std::string kind = "pulsed";  // "pulsed" | "cw"
  double rate_hz = 10e6;
  double width_s = 900e-12;
  // Exactly one of the two source strengths must be positive: a physical peak
  // power, or the signal-only detection probability per pulse at the bright
  // port (converted internally through the loop loss and efficiency).
  double peak_power_w = 0.0;
  double prob_per_pulse = 0.0;
  bool include_backscatter = true;
  BurstSpec burst;
};

struct PhaseSpec {
  std::string model = "none";  // "none" | "ull" | "smf28" | "explicit"
  double amplitude = 0.0;      // a in sigma^2 = a L^b (smf28/explicit)
  double exponent = 0.0;       // b (explicit)
  double floor_rad2 = 0.0;
  double floor_unc_rad2 = 0.0;
  double bandwidth_hz = 1e6;
  double sigma2_rad2 = -1.0;        // >= 0 overrides the length law
  std::vector<double> lengths_km;   // analyze-phase sweep; empty -> loop length
};

struct RunSpec {
  double span_s = 0.02;
  double grid_dt_s = 1e-7;
  int seeds = 1;
  double window_s = 0.0;  // detection window; 0 -> one pulse slot
  double rbw_hz = 100.0;
  double bin_s = 1e-7;    // OTDR histogram bin
  std::size_t subset_size = 1000;
};

struct Scenario {
  int schema_version = 1;
  std::string name;
  std::vector<SegmentSpec> segments;
  std::vector<LossPoint> loss_points;
  double group_index = 1.468;
  double wavelength_m = kDefaultWavelengthM;
  SignalSpec signal;
  PhaseSpec phase;
  DetectorParams detector;
  RunSpec run;

  LoopLayout layout() const;
  PhaseNoiseModel phase_model() const;
  /// Differential phase variance target at the given loop length.
  double target_sigma2(double length_km) const;
  /// Launched energy per pulse, resolving prob_per_pulse through the loop.
  double pulse_energy_j() const;
  /// Canonical document with all defaults filled.
  nlohmann::json echo() const;
  /// FNV-1a over the canonical document.
  std::uint64_t hash() const;
};

/// Parses and validates a scenario document. Validation errors name the
/// violated field, e.g. "detector.dark_rate".
Scenario scenario_from_json(const nlohmann::json& doc);
Scenario load_scenario(const std::string& path);

/// One Monte Carlo visibility experiment: both modulator settings, both
/// detectors, timestamps generated on a pulse-slot grid over run.span_s.
struct VisibilitySample {
  VisibilityResult vis;
  BurstTiming timing;
  bool timing_recovered = false;
  double sigma2_target = 0.0;
  TimestampSeries d0_phi0, d1_phi0, d0_phi_pi, d1_phi_pi;
};
VisibilitySample simulate_visibility(const Scenario& sc, std::uint64_t seed);

/// Photon-counting reflectometry: one launch per repetition period, folded
/// histogram, corrected exponential fit.
struct OtdrSample {
  Histogram hist;
  FitResult fit;
  TimestampSeries events;
  double pulse_energy_j = 0.0;
  double rep_period_s = 0.0;
  std::uint64_t n_events = 0;
};
OtdrSample simulate_otdr(const Scenario& sc, std::uint64_t seed);

/// Classical phase-noise run at the quadrature point for one loop length.
struct PhasePoint {
  double length_km = 0.0;
  double target_rad2 = 0.0;
  VarianceEstimate estimate;
  double excess_rad2 = 0.0;  // floor-subtracted
};
std::vector<PhasePoint> analyze_phase(const Scenario& sc, std::uint64_t seed);

BurstPlan plan_burst(const Scenario& sc);

/// Derives an independent stream seed; deterministic in (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct Report {
  nlohmann::json doc;
};

/// Executes one subcommand and writes report.json plus tabular outputs into
/// out_dir. Subcommands: simulate, analyze-phase, fit-otdr, optimize-burst,
/// psd.
Report run(const Scenario& sc, const std::string& subcommand, std::uint64_t seed,
           int n_seeds, const std::string& out_dir);

}  // namespace sagnac
