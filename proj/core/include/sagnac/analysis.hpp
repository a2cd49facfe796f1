#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sagnac/detection.hpp"
#include "sagnac/noise.hpp"
#include "sagnac/units.hpp"

namespace sagnac {

struct VarianceEstimate {
  double sigma2 = 0.0;          // mean of per-subset sample variances
  std::size_t n_subsets = 0;
  std::size_t subset_size = 0;
  double std_across = 0.0;      // standard deviation across subsets
};

struct FitResult {
  std::map<std::string, double> params;
  std::map<std::string, double> uncertainties;  // 1 sigma
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct VisibilityResult {
  double v_d0 = 0.0;
  double v_d1 = 0.0;
  double v_avg = 0.0;
  double imax_d0 = 0.0, imin_d0 = 0.0;  // windowed counts per setting
  double imax_d1 = 0.0, imin_d1 = 0.0;
  double window_s = 0.0;
};

struct BurstTiming {
  double period_s = 0.0;
  double offset_s = 0.0;    // burst start modulo period
  double on_time_s = 0.0;   // estimated burst on-time
};

/// Inverts the two-port interference relation on an intensity trace,
/// unwrapping by nearest-branch continuation. Rejects per-sample jumps
/// larger than pi/2.
PhaseTrace extract_phase(const TimeSeries& trace, const InterferenceParams& params);

/// Mean of per-subset sample variances over floor(N/n) time-ordered subsets.
VarianceEstimate subset_variance(const PhaseTrace& phase, std::size_t n);

/// Subtracts the lower bound of the equipment floor, clamped at zero.
double subtract_floor(const VarianceEstimate& est, double c_rad2, double c_unc_rad2);

struct PowerLawPoint {
  double length_km = 0.0;
  double sigma2 = 0.0;
  double error = 0.0;  // 1-sigma error bar; 0 means unweighted
};

/// Nonlinear least squares on a * L^b (+ c). Uncertainties come from the
/// linearized covariance at the optimum.
FitResult fit_power_law(const std::vector<PowerLawPoint>& points, bool with_offset);

/// Averaged-periodogram (Welch, Hann window, 50% overlap) one-sided PSD with
/// effective resolution bandwidth rbw, restricted to [f_lo, f_hi].
std::vector<std::pair<double, double>> psd(const TimeSeries& trace, double rbw_hz,
                                           double f_lo_hz, double f_hi_hz);

/// Corrects a folded photon-count histogram for dark counts, dead time
/// (non-paralyzable) and efficiency, then fits the corrected rate to the
/// exponential backscatter decay. Returns alpha (dB/km) and eta (1/s).
/// Bins past t_max_s (the round-trip horizon) are excluded; 0 keeps all.
FitResult fit_otdr(const Histogram& hist, const DetectorParams& detector,
                   double pulse_energy_j, double rep_period_s,
                   const GroupVelocity& group,
                   double wavelength_m = kDefaultWavelengthM,
                   double t_max_s = 0.0);

/// Fourier burst-timing recovery: the burst fundamental is located by
/// maximizing |sum exp(2 pi i t_k / T)| over T near nominal, then the burst
/// start is refined by an edge search on the folded event histogram.
BurstTiming recover_burst_timing(const TimestampSeries& series,
                                 double nominal_period_s);

/// Timestamp streams of one detector for the two modulator settings.
struct RunPair {
  TimestampSeries phi0;    // constructive setting for D0
  TimestampSeries phi_pi;  // destructive setting for D0
};

/// Counts events inside pulse detection windows (aligned to the pulse
/// lattice recovered from the brightest stream, gated to the burst
/// on-interval) and evaluates the fringe contrast per detector.
VisibilityResult windowed_visibility(const RunPair& d0, const RunPair& d1,
                                     const BurstTiming& timing,
                                     double pulse_period_s, double window_s);

double visibility_from_variance(double sigma2_rad2);
double qber_from_variance(double sigma2_rad2);

}  // namespace sagnac
