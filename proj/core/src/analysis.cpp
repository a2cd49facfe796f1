#include "sagnac/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>

#include "sagnac/fft.hpp"

namespace sagnac {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
}  // namespace

PhaseTrace extract_phase(const TimeSeries& trace, const InterferenceParams& params) {
  if (!(params.i_max > params.i_min))
    throw std::invalid_argument("extract_phase: zero fringe (i_max == i_min)");
  PhaseTrace out{trace.grid, std::vector<double>(trace.grid.n, 0.0), 0.0};
  const double inv_fringe = 2.0 / (params.i_max - params.i_min);
  double prev_total = params.phi;  // principal branch near zero
  for (std::size_t i = 0; i < trace.values.size(); ++i) {
    double u = (trace.values[i] - params.i_min) * inv_fringe - 1.0;
    u = std::clamp(u, -1.0, 1.0);
    const double base = std::acos(u);
    // Nearest-branch continuation: candidates are +-base shifted by 2 pi k.
    const double cand_p = base + kTwoPi * std::round((prev_total - base) / kTwoPi);
    const double cand_m = -base + kTwoPi * std::round((prev_total + base) / kTwoPi);
    const double total =
        std::abs(cand_p - prev_total) <= std::abs(cand_m - prev_total) ? cand_p : cand_m;
    if (i > 0 && std::abs(total - prev_total) > kPi / 2.0 + 1e-9)
      throw std::runtime_error("extract_phase: per-sample jump exceeds pi/2");
    out.values[i] = total - params.phi;
    prev_total = total;
  }
  return out;
}

VarianceEstimate subset_variance(const PhaseTrace& phase, std::size_t n) {
  if (n < 2) throw std::invalid_argument("subset_variance: subset size must be >= 2");
  const std::size_t total = phase.values.size();
  if (total < 2 * n)
    throw std::invalid_argument("subset_variance: need at least two subsets (N >= 2n)");
  const std::size_t m = total / n;
  std::vector<double> vars(m);
  for (std::size_t s = 0; s < m; ++s) {
    const double* block = phase.values.data() + s * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += block[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = block[i] - mean;
      ss += d * d;
    }
    vars[s] = ss / static_cast<double>(n - 1);
  }
  VarianceEstimate est;
  est.subset_size = n;
  est.n_subsets = m;
  est.sigma2 = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(m);
  double ss = 0.0;
  for (double v : vars) ss += (v - est.sigma2) * (v - est.sigma2);
  est.std_across = m > 1 ? std::sqrt(ss / static_cast<double>(m - 1)) : 0.0;
  return est;
}

double subtract_floor(const VarianceEstimate& est, double c_rad2, double c_unc_rad2) {
  if (est.sigma2 < 0.0) throw std::invalid_argument("subtract_floor: estimate < 0");
  return std::max(0.0, est.sigma2 - (c_rad2 - c_unc_rad2));
}

// ---------------------------------------------------------------------------
// Damped Gauss-Newton (Levenberg-Marquardt) for models with <= 3 parameters.

namespace {

struct LmOutcome {
  std::vector<double> params;
  double cov[3][3] = {};
  double chi2 = 0.0;
  bool converged = false;
  int iterations = 0;
  std::size_t n_points = 0;
};

// Solves A x = b for small n with partial pivoting; A is overwritten.
bool solve_linear(double a[3][3], double b[3], int n, double x[3]) {
  int piv[3] = {0, 1, 2};
  for (int col = 0; col < n; ++col) {
    int best = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[piv[r]][col]) > std::abs(a[piv[best]][col])) best = r;
    std::swap(piv[col], piv[best]);
    const double d = a[piv[col]][col];
    if (d == 0.0) return false;
    for (int r = col + 1; r < n; ++r) {
      const double f = a[piv[r]][col] / d;
      for (int c = col; c < n; ++c) a[piv[r]][c] -= f * a[piv[col]][c];
      b[piv[r]] -= f * b[piv[col]];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double s = b[piv[r]];
    for (int c = r + 1; c < n; ++c) s -= a[piv[r]][c] * x[c];
    x[r] = s / a[piv[r]][r];
  }
  return true;
}

bool invert_sym(const double a_in[3][3], int n, double inv[3][3]) {
  for (int col = 0; col < n; ++col) {
    double a[3][3];
    double b[3] = {0, 0, 0};
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a[i][j] = a_in[i][j];
    b[col] = 1.0;
    double x[3];
    if (!solve_linear(a, b, n, x)) return false;
    for (int i = 0; i < n; ++i) inv[i][col] = x[i];
  }
  return true;
}

// eval fills weighted residuals r_i and the weighted Jacobian rows; returns
// chi2 = sum r_i^2.
template <typename Eval>
LmOutcome lm_minimize(Eval&& eval, std::vector<double> p, std::size_t n_points,
                      int max_iter = 200) {
  const int np = static_cast<int>(p.size());
  std::vector<double> r(n_points);
  std::vector<double> jac(n_points * p.size());
  double chi2 = eval(p, r, jac);
  double lambda = 1e-3;
  LmOutcome out;
  out.n_points = n_points;
  int it = 0;
  for (; it < max_iter; ++it) {
    double jtj[3][3] = {};
    double jtr[3] = {};
    for (std::size_t i = 0; i < n_points; ++i) {
      for (int a = 0; a < np; ++a) {
        jtr[a] += jac[i * np + a] * r[i];
        for (int b = a; b < np; ++b) jtj[a][b] += jac[i * np + a] * jac[i * np + b];
      }
    }
    for (int a = 0; a < np; ++a)
      for (int b = 0; b < a; ++b) jtj[a][b] = jtj[b][a];

    bool stepped = false;
    for (int attempt = 0; attempt < 12 && !stepped; ++attempt) {
      double damped[3][3];
      double rhs[3];
      for (int a = 0; a < np; ++a) {
        for (int b = 0; b < np; ++b) damped[a][b] = jtj[a][b];
        damped[a][a] *= 1.0 + lambda;
        if (damped[a][a] == 0.0) damped[a][a] = lambda;
        rhs[a] = jtr[a];
      }
      double delta[3];
      if (!solve_linear(damped, rhs, np, delta)) {
        lambda *= 10.0;
        continue;
      }
      std::vector<double> trial(p);
      for (int a = 0; a < np; ++a) trial[a] += delta[a];
      std::vector<double> r_try(n_points);
      std::vector<double> jac_try(n_points * p.size());
      const double chi2_try = eval(trial, r_try, jac_try);
      if (std::isfinite(chi2_try) && chi2_try <= chi2) {
        double step_norm = 0.0;
        for (int a = 0; a < np; ++a) step_norm += delta[a] * delta[a];
        const bool done = chi2 - chi2_try <= 1e-14 * (chi2 + 1e-30) ||
                          step_norm < 1e-24;
        p = std::move(trial);
        r = std::move(r_try);
        jac = std::move(jac_try);
        chi2 = chi2_try;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        if (done) {
          out.converged = true;
          it = max_iter;  // leave the outer loop
        }
      } else {
        lambda *= 10.0;
      }
    }
    if (!stepped) {
      out.converged = true;  // no further decrease possible
      break;
    }
    if (it >= max_iter) break;
    ++out.iterations;
  }
  // Covariance from the undamped normal matrix at the optimum.
  double jtj[3][3] = {};
  for (std::size_t i = 0; i < n_points; ++i)
    for (int a = 0; a < np; ++a)
      for (int b = a; b < np; ++b) jtj[a][b] += jac[i * np + a] * jac[i * np + b];
  for (int a = 0; a < np; ++a)
    for (int b = 0; b < a; ++b) jtj[a][b] = jtj[b][a];
  invert_sym(jtj, np, out.cov);
  out.params = std::move(p);
  out.chi2 = chi2;
  return out;
}

}  // namespace

FitResult fit_power_law(const std::vector<PowerLawPoint>& points, bool with_offset) {
  const std::size_t min_points = with_offset ? 4 : 3;
  if (points.size() < min_points)
    throw std::invalid_argument("fit_power_law: too few points");
  double l_min = 1e300, l_max = -1e300;
  bool weighted = false;
  for (const auto& pt : points) {
    if (!(pt.length_km > 0.0))
      throw std::invalid_argument("fit_power_law: lengths must be > 0");
    l_min = std::min(l_min, pt.length_km);
    l_max = std::max(l_max, pt.length_km);
    if (pt.error > 0.0) weighted = true;
  }
  if (!(l_max > l_min))
    throw std::invalid_argument("fit_power_law: degenerate design (all lengths equal)");

  // Theory-informed start: b = 3, amplitude from the longest-length point.
  double y_at_lmax = 0.0;
  for (const auto& pt : points)
    if (pt.length_km == l_max) y_at_lmax = pt.sigma2;
  const double a0 = std::max(y_at_lmax, 1e-300) / std::pow(l_max, 3.0);
  std::vector<double> p0 = {std::log(a0), 3.0};
  if (with_offset) p0.push_back(0.0);
  const int np = static_cast<int>(p0.size());

  auto eval = [&](const std::vector<double>& p, std::vector<double>& r,
                  std::vector<double>& jac) {
    double chi2 = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& pt = points[i];
      const double w = pt.error > 0.0 ? 1.0 / pt.error : 1.0;
      const double power = std::exp(p[0]) * std::pow(pt.length_km, p[1]);
      const double f = power + (with_offset ? p[2] : 0.0);
      r[i] = (pt.sigma2 - f) * w;
      jac[i * np + 0] = power * w;
      jac[i * np + 1] = power * std::log(pt.length_km) * w;
      if (with_offset) jac[i * np + 2] = w;
      chi2 += r[i] * r[i];
    }
    return chi2;
  };

  LmOutcome lm = lm_minimize(eval, p0, points.size());
  const double dof = static_cast<double>(points.size()) - np;
  const double scale = weighted || dof <= 0.0 ? 1.0 : lm.chi2 / dof;
  const double a = std::exp(lm.params[0]);
  FitResult res;
  res.params["a"] = a;
  res.params["b"] = lm.params[1];
  res.uncertainties["a"] = a * std::sqrt(std::max(0.0, lm.cov[0][0] * scale));
  res.uncertainties["b"] = std::sqrt(std::max(0.0, lm.cov[1][1] * scale));
  if (with_offset) {
    res.params["c"] = lm.params[2];
    res.uncertainties["c"] = std::sqrt(std::max(0.0, lm.cov[2][2] * scale));
  }
  res.residual_norm = std::sqrt(lm.chi2 / static_cast<double>(points.size()));
  res.converged = lm.converged;
  res.iterations = lm.iterations;
  return res;
}

std::vector<std::pair<double, double>> psd(const TimeSeries& trace, double rbw_hz,
                                           double f_lo_hz, double f_hi_hz) {
  const double dt = trace.grid.dt;
  const double fs = 1.0 / dt;
  if (!(rbw_hz > 0.0)) throw std::invalid_argument("psd: rbw must be > 0");
  if (f_hi_hz > 0.5 * fs + 1e-9)
    throw std::invalid_argument("psd: f_hi exceeds the grid Nyquist");
  const auto nseg = static_cast<std::size_t>(std::llround(1.0 / (rbw_hz * dt)));
  if (nseg < 8 || nseg > trace.values.size())
    throw std::invalid_argument("psd: trace too short for the requested rbw");

  const double mean =
      std::accumulate(trace.values.begin(), trace.values.end(), 0.0) /
      static_cast<double>(trace.values.size());
  std::vector<double> window(nseg);
  double u = 0.0;
  for (std::size_t j = 0; j < nseg; ++j) {
    window[j] = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(j) /
                                      static_cast<double>(nseg)));
    u += window[j] * window[j];
  }
  u /= static_cast<double>(nseg);

  const std::size_t hop = nseg / 2;
  const std::size_t n_segs = 1 + (trace.values.size() - nseg) / hop;
  std::vector<double> accum(nseg / 2 + 1, 0.0);
  std::vector<double> seg(nseg);
  for (std::size_t s = 0; s < n_segs; ++s) {
    const double* src = trace.values.data() + s * hop;
    for (std::size_t j = 0; j < nseg; ++j) seg[j] = (src[j] - mean) * window[j];
    const auto spec = fft::rfft(seg);
    for (std::size_t k = 0; k < spec.size(); ++k) accum[k] += std::norm(spec[k]);
  }

  // One-sided PSD normalized so the integral over frequency equals variance.
  const double norm = 1.0 / (fs * static_cast<double>(nseg) * u *
                             static_cast<double>(n_segs));
  std::vector<std::pair<double, double>> out;
  for (std::size_t k = 0; k < accum.size(); ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(nseg);
    if (f < f_lo_hz || f > f_hi_hz) continue;
    const bool interior = k > 0 && k < nseg / 2;
    out.emplace_back(f, accum[k] * norm * (interior ? 2.0 : 1.0));
  }
  return out;
}

FitResult fit_otdr(const Histogram& hist, const DetectorParams& detector,
                   double pulse_energy_j, double rep_period_s,
                   const GroupVelocity& group, double wavelength_m,
                   double t_max_s) {
  if (hist.counts.empty() || hist.n_periods == 0)
    throw std::invalid_argument("fit_otdr: empty histogram");
  if (!(pulse_energy_j > 0.0))
    throw std::invalid_argument("fit_otdr: pulse energy must be > 0");
  (void)rep_period_s;

  const double bin_w = hist.bin_width_s;
  const double periods = static_cast<double>(hist.n_periods);
  const double dark_hz = detector.dark_rate_hz();
  const double e_ph = photon_energy_j(wavelength_m);
  const double v_g = group.km_per_s();

  // Dead-time (pile-up) correction per launch: a count in any of the bins
  // spanning the preceding dead time blocks this bin for that sweep, so the
  // per-launch probability is counts over live launches. The window wraps to
  // the previous sweep's tail since the histogram is a periodic steady state.
  const std::size_t m = hist.counts.size();
  const auto dead_bins = static_cast<std::size_t>(
      std::ceil(detector.dead_time_s / bin_w));
  std::vector<double> live(m, periods);
  if (dead_bins > 0 && dead_bins < m) {
    double window = 0.0;
    for (std::size_t k = m - dead_bins; k < m; ++k)
      window += static_cast<double>(hist.counts[k]);
    for (std::size_t b = 0; b < m; ++b) {
      live[b] = periods - window;
      window += static_cast<double>(hist.counts[b]);
      window -= static_cast<double>(hist.counts[(b + m - dead_bins) % m]);
    }
  }

  std::vector<double> t, rate, exposure;
  std::size_t negative = 0;
  for (std::size_t b = 0; b < m; ++b) {
    const double t_center = hist.bin_start_s[b] + 0.5 * bin_w;
    if (t_max_s > 0.0 && t_center > t_max_s) continue;
    if (live[b] <= 0.1 * periods)
      throw std::runtime_error("fit_otdr: observed rate too close to dead-time saturation");
    const double r_obs = static_cast<double>(hist.counts[b]) / (live[b] * bin_w);
    const double r_corr = (r_obs - dark_hz) / detector.efficiency;
    if (r_corr < 0.0) ++negative;
    t.push_back(t_center);
    rate.push_back(r_corr);
    exposure.push_back(live[b] * bin_w * detector.efficiency);
  }
  if (negative * 20 > hist.counts.size())
    throw std::runtime_error(
        "fit_otdr: dark-count subtraction yields >5% negative bins");

  // Log-linear regression on positive bins for the starting point.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (rate[i] <= 0.0) continue;
    const double y = std::log(rate[i]);
    sw += 1.0;
    sx += t[i];
    sy += y;
    sxx += t[i] * t[i];
    sxy += t[i] * y;
  }
  if (sw < 3.0) throw std::runtime_error("fit_otdr: too few positive bins");
  const double slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / sw;
  double alpha0 = -slope * 10.0 / (std::log(10.0) * v_g);
  alpha0 = std::clamp(alpha0, 0.001, 2.0);
  const double scale = pulse_energy_j / e_ph;
  const double eta0 = std::max(std::exp(intercept) / scale, 1e-12);

  std::vector<double> p0 = {std::log(eta0), alpha0};
  auto eval = [&](const std::vector<double>& p, std::vector<double>& r,
                  std::vector<double>& jac) {
    const double alpha_nat = attenuation_natural(std::max(p[1], 0.0));
    double chi2 = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double f = scale * std::exp(p[0] - alpha_nat * v_g * t[i]);
      // Model-based Poisson variance: weighting by observed counts would
      // overweight downward fluctuations of sparse bins and steepen the
      // fitted decay.
      const double c_exp =
          f * exposure[i] + dark_hz * exposure[i] / detector.efficiency;
      const double w = exposure[i] / std::sqrt(std::max(c_exp, 1.0));
      r[i] = (rate[i] - f) * w;
      jac[i * 2 + 0] = f * w;
      jac[i * 2 + 1] = -f * (std::log(10.0) / 10.0) * v_g * t[i] * w;
      chi2 += r[i] * r[i];
    }
    return chi2;
  };

  LmOutcome lm = lm_minimize(eval, p0, t.size());
  const double eta = std::exp(lm.params[0]);
  FitResult res;
  res.params["eta_per_s"] = eta;
  res.params["alpha_db_per_km"] = lm.params[1];
  res.uncertainties["eta_per_s"] = eta * std::sqrt(std::max(0.0, lm.cov[0][0]));
  res.uncertainties["alpha_db_per_km"] = std::sqrt(std::max(0.0, lm.cov[1][1]));
  res.residual_norm = std::sqrt(lm.chi2 / static_cast<double>(t.size()));
  res.converged = lm.converged;
  res.iterations = lm.iterations;
  return res;
}

// ---------------------------------------------------------------------------

namespace {

std::complex<double> harmonic_sum(const std::vector<double>& times, double t_ref,
                                  double period, std::size_t count) {
  std::complex<double> s{0.0, 0.0};
  const double w = kTwoPi / period;
  for (std::size_t i = 0; i < count; ++i) {
    const double ph = w * (times[i] - t_ref);
    s += std::complex<double>(std::cos(ph), std::sin(ph));
  }
  return s;
}

}  // namespace

BurstTiming recover_burst_timing(const TimestampSeries& series,
                                 double nominal_period_s) {
  const auto& times = series.times_s;
  const std::size_t n = times.size();
  if (n < 100)
    throw std::invalid_argument("recover_burst_timing: need at least 100 events");
  if (!(nominal_period_s > 0.0))
    throw std::invalid_argument("recover_burst_timing: invalid nominal period");
  const double t_ref = times.front();
  const double span = times.back() - t_ref;
  if (span < 2.0 * nominal_period_s)
    throw std::invalid_argument("recover_burst_timing: span shorter than two periods");

  auto events_within = [&](double s) {
    return static_cast<std::size_t>(
        std::upper_bound(times.begin(), times.end(), t_ref + s) - times.begin());
  };

  // Bootstrap: magnitude scan over the nominal uncertainty, on the shortest
  // window holding enough events that the fundamental stands out. The scan
  // step keeps the fold slip across this window below period/128, half the
  // envelope of a 1/64-duty burst.
  double s0 = std::min(span, 200.0 * nominal_period_s);
  while (s0 < span && events_within(s0) < 64) s0 = std::min(span, 2.0 * s0);
  double best_t = nominal_period_s;
  for (;;) {
    const std::size_t cnt = events_within(s0);
    const double step = nominal_period_s * nominal_period_s / (128.0 * s0);
    const double lo = 0.99 * nominal_period_s;
    const double hi = 1.01 * nominal_period_s;
    double best_mag = -1.0;
    for (double trial = lo; trial <= hi + 0.5 * step; trial += step) {
      const double m = std::abs(harmonic_sum(times, t_ref, trial, cnt));
      if (m > best_mag) {
        best_mag = m;
        best_t = trial;
      }
    }
    // With a strong uniform background the first window may hold too few
    // burst events for the peak to stand out of the scan noise floor; grow
    // the window until it does. Rescanning is cheap because the event count
    // grows with the window while the trial count stays proportional.
    if (best_mag >= 5.0 * std::sqrt(static_cast<double>(cnt)) || s0 >= span)
      break;
    const double s_next = std::min(span, 4.0 * s0);
    const double cost = 2.56 * (s_next / nominal_period_s) *
                        static_cast<double>(events_within(s_next));
    if (cost > 8e8) break;  // burst-free streams: leave it to the peak test
    s0 = s_next;
  }
  // Phase connection: double the window and correct the period from the
  // fundamental phase difference between the two halves. Unlike repeated
  // magnitude peak-picking this cannot lock onto a sidelobe: the phase step
  // stays well inside one turn because the period error shrinks faster than
  // the window grows.
  double s_level = s0;
  int extra = 2;  // repeat at full span to flush the loose early corrections
  while (s_level < span || extra-- > 0) {
    s_level = std::min(span, 2.0 * s_level);
    const std::size_t cnt = events_within(s_level);
    const std::size_t n_half = events_within(0.5 * s_level);
    if (n_half < 16 || cnt - n_half < 16) continue;
    const auto s_all = harmonic_sum(times, t_ref, best_t, cnt);
    const auto s_left = harmonic_sum(times, t_ref, best_t, n_half);
    const auto s_right = s_all - s_left;
    const double dpsi = std::arg(s_right * std::conj(s_left));
    double t_left = 0.0, t_right = 0.0;
    for (std::size_t i = 0; i < n_half; ++i) t_left += times[i] - t_ref;
    for (std::size_t i = n_half; i < cnt; ++i) t_right += times[i] - t_ref;
    t_left /= static_cast<double>(n_half);
    t_right /= static_cast<double>(cnt - n_half);
    if (!(t_right > t_left)) continue;
    best_t += dpsi / kTwoPi * best_t * best_t / (t_right - t_left);
  }

  const std::complex<double> s1 = harmonic_sum(times, t_ref, best_t, n);
  const double mag = std::abs(s1);
  if (mag < 4.0 * std::sqrt(static_cast<double>(n)))
    throw std::runtime_error("recover_burst_timing: no significant burst peak");

  // Edge location on the folded event phases. Candidate edges are the event
  // phases themselves, scored by short-window count differencing; the rising
  // edge lands on the first event of the burst (up to one inter-event gap).
  std::vector<double> phases(n);
  for (std::size_t i = 0; i < n; ++i) {
    double u = std::fmod(times[i] - t_ref, best_t);
    if (u < 0.0) u += best_t;
    phases[i] = u;
  }
  std::sort(phases.begin(), phases.end());
  const double delta = best_t / 128.0;
  auto count_in = [&](double a, double b) -> double {  // circular [a, b)
    a = std::fmod(a, best_t);
    if (a < 0.0) a += best_t;
    b = std::fmod(b, best_t);
    if (b < 0.0) b += best_t;
    const auto lb = std::lower_bound(phases.begin(), phases.end(), a) - phases.begin();
    const auto ub = std::lower_bound(phases.begin(), phases.end(), b) - phases.begin();
    if (a <= b) return static_cast<double>(ub - lb);
    return static_cast<double>(static_cast<long long>(n) - lb + ub);
  };
  double rise = phases.front(), rise_score = -1e300;
  double fall = phases.front(), fall_score = -1e300;
  for (double u : phases) {
    const double s_rise = count_in(u, u + delta) - count_in(u - delta, u);
    if (s_rise > rise_score) {
      rise_score = s_rise;
      rise = u;
    }
    // The falling edge sits just after the last burst event.
    const double eps = 1e-15 * best_t;
    const double s_fall = count_in(u + eps - delta, u + eps) - count_in(u + eps, u + eps + delta);
    if (s_fall > fall_score) {
      fall_score = s_fall;
      fall = u;
    }
  }
  double on_est = fall - rise;
  if (on_est < 0.0) on_est += best_t;

  // Edge refinement on the folded phases. The fundamental's period estimate
  // leaves a residual fold drift of order on_time / sqrt(N) across the span,
  // which smears the folded edge by roughly that amount; the edge windows are
  // shrunk level by level down to a floor well above both the drift band and
  // the typical folded inter-event gap.
  const double n_burst = count_in(rise, rise + on_est);
  if (on_est > 1e-4 * best_t && n_burst >= 50.0) {
    const double gap = on_est / n_burst;
    const double delta_min = std::max(12.0 * gap, 2e-9);
    // Asymmetric edge score on a folded, sorted phase vector: events just
    // after the candidate edge minus a penalized count just before it. The
    // penalty window is backed off by a guard so that events smeared a few
    // gaps early by fold drift do not punish the true edge; the penalty
    // itself keeps burst-interior candidates out.
    auto count_vec = [&](const std::vector<double>& ph, double a, double b) {
      a = std::fmod(a, best_t);
      if (a < 0.0) a += best_t;
      b = std::fmod(b, best_t);
      if (b < 0.0) b += best_t;
      const auto lb = std::lower_bound(ph.begin(), ph.end(), a) - ph.begin();
      const auto ub = std::lower_bound(ph.begin(), ph.end(), b) - ph.begin();
      if (a <= b) return static_cast<double>(ub - lb);
      return static_cast<double>(
          static_cast<long long>(ph.size()) - lb + ub);
    };
    struct Edge {
      double u;
      double score;
    };
    // Expected uniform-background count per window is subtracted from both
    // sides so a strong background neither drowns the edge contrast nor
    // penalizes the true edge.
    auto bg_density = [&](const std::vector<double>& ph) {
      const double in_burst = count_vec(ph, rise, rise + on_est);
      const double out = static_cast<double>(ph.size()) - in_burst;
      return std::max(0.0, out) / std::max(best_t - on_est, 1e-6 * best_t);
    };
    auto rise_edge = [&](const std::vector<double>& ph, double center,
                         double margin, double delta, double rho) {
      const double guard = 0.25 * delta;
      double best_score = -1e300, best_u = center;
      for (double u : ph) {
        double d = u - center;
        if (d > 0.5 * best_t) d -= best_t;
        if (d < -0.5 * best_t) d += best_t;
        if (std::abs(d) > margin) continue;
        const double right = count_vec(ph, u, u + delta) - rho * delta;
        const double left =
            count_vec(ph, u - delta - guard, u - guard) - rho * delta;
        const double s = right - 4.0 * std::max(0.0, left);
        if (s > best_score) {
          best_score = s;
          best_u = u;
        }
      }
      return Edge{best_u, best_score};
    };
    auto fold_range = [&](std::size_t first, std::size_t last) {
      std::vector<double> ph;
      ph.reserve(last - first);
      for (std::size_t i = first; i < last; ++i) {
        double u = std::fmod(times[i] - t_ref, best_t);
        if (u < 0.0) u += best_t;
        ph.push_back(u);
      }
      std::sort(ph.begin(), ph.end());
      return ph;
    };
    {
      double delta_lvl = std::max(on_est / 32.0, 32.0 * gap);
      double margin = 4.0 * on_est / std::sqrt(static_cast<double>(n)) +
                      2.0 * delta_lvl;
      while (true) {
        rise = rise_edge(phases, rise, margin, delta_lvl, bg_density(phases)).u;
        margin = 2.0 * delta_lvl;
        if (delta_lvl <= delta_min) break;
        delta_lvl = std::max(delta_lvl / 2.0, delta_min);
      }
    }

    // The period estimate from the fundamental phase is centroid-limited and
    // leaves a fold drift of up to a few inter-event gaps times sqrt(N)
    // across the span. The rising edge is much sharper than the centroid, so
    // aligning the edge of the first half of the stream against the second
    // half takes the remaining period error out; any common bias of the edge
    // score cancels in the difference.
    if (n >= 400 && span >= 16.0 * best_t && n_burst >= 200.0) {
      const std::size_t n_half = n / 2;
      double t_left = 0.0, t_right = 0.0;
      for (std::size_t i = 0; i < n_half; ++i) t_left += times[i] - t_ref;
      for (std::size_t i = n_half; i < n; ++i) t_right += times[i] - t_ref;
      t_left /= static_cast<double>(n_half);
      t_right /= static_cast<double>(n - n_half);
      double delta_h = std::max(48.0 * gap, 2e-9);
      double margin = std::max(8e-6, 128.0 * gap);
      for (int iter = 0; iter < 5 && t_right > t_left; ++iter) {
        const auto ph_left = fold_range(0, n_half);
        const auto ph_right = fold_range(n_half, n);
        const auto e_left =
            rise_edge(ph_left, rise, margin, delta_h, bg_density(ph_left));
        const auto e_right =
            rise_edge(ph_right, rise, margin, delta_h, bg_density(ph_right));
        double d = e_right.u - e_left.u;
        if (d > 0.5 * best_t) d -= best_t;
        if (d < -0.5 * best_t) d += best_t;
        // A weak or margin-clipped edge means the residual drift exceeds the
        // search window; widen both the window and the edge score and retry
        // instead of applying a bogus correction.
        if (e_left.score < 4.0 || e_right.score < 4.0 ||
            std::abs(d) > 0.9 * margin) {
          margin = std::min(2.0 * margin, 0.25 * best_t);
          delta_h = std::min(2.0 * delta_h, 0.1 * best_t);
          continue;
        }
        const double dt_period = d * best_t / (t_right - t_left);
        best_t += dt_period;
        // Track the edge through the refold; phases shift by the accumulated
        // slip at their epoch.
        double rise_pred =
            e_left.u - dt_period * (t_left - t_ref) / best_t;
        rise_pred = std::fmod(rise_pred, best_t);
        if (rise_pred < 0.0) rise_pred += best_t;
        phases = fold_range(0, n);
        rise = rise_edge(phases, rise_pred,
                         std::max(2.0 * std::abs(d), 16.0 * gap), delta_min,
                         bg_density(phases))
                   .u;
        margin = std::max({0.35 * margin, 4.0 * std::abs(d), 64.0 * gap});
        delta_h = std::max(48.0 * gap, 2e-9);
      }
    }
    // Edge placement by a two-rate profile likelihood: the fold is one dense
    // and one sparse segment, and each edge in turn moves to the split that
    // maximizes the likelihood given the other. Unlike a local window score
    // this weighs every event, so a lucky gap inside the burst cannot
    // masquerade as an edge.
    {
      auto split_ll = [&](double r, double f) {
        double len_in = f - r;
        len_in = std::fmod(len_in, best_t);
        if (len_in < 0.0) len_in += best_t;
        if (!(len_in > 0.0) || !(len_in < best_t)) return -1e300;
        const double n_in = count_in(r, f);
        const double n_out = static_cast<double>(n) - n_in;
        double ll = 0.0;
        if (n_in > 0.0) ll += n_in * std::log(n_in / len_in);
        if (n_out > 0.0) ll += n_out * std::log(n_out / (best_t - len_in));
        return ll;
      };
      const double tick = 1e-13;
      for (int pass = 0; pass < 2; ++pass) {
        double best_ll = -1e300;
        for (double u : phases) {
          const double ll = split_ll(rise, u + tick);
          if (ll > best_ll) {
            best_ll = ll;
            fall = u + tick;
          }
        }
        best_ll = -1e300;
        for (double u : phases) {
          const double ll = split_ll(u, fall);
          if (ll > best_ll) {
            best_ll = ll;
            rise = u;
          }
        }
      }
    }
    on_est = fall - rise;
    if (on_est < 0.0) on_est += best_t;

    // Final polish: slide a window of the estimated on-time and take the
    // placement maximizing the enclosed count. The count is piecewise
    // constant in the start phase with breakpoints at event phases and at
    // event phases minus the on-time; the midpoint of the longest maximal
    // plateau centers the estimate inside the fold-drift band instead of on
    // a single (late or early) event.
    {
      const double search = std::max(32.0 * delta_min, 1e-6);
      std::vector<double> breaks;
      for (double u : phases) {
        for (double b : {u, u - on_est}) {
          double d = b - rise;
          if (d > 0.5 * best_t) d -= best_t;
          if (d < -0.5 * best_t) d += best_t;
          if (std::abs(d) <= search) breaks.push_back(rise + d);
        }
      }
      std::sort(breaks.begin(), breaks.end());
      double best_cnt = -1.0, best_len = -1.0, best_mid = rise;
      for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double a = breaks[i], b = breaks[i + 1];
        if (!(b > a)) continue;
        const double c = count_in(0.5 * (a + b), 0.5 * (a + b) + on_est);
        const bool better =
            c > best_cnt || (c == best_cnt && b - a > best_len) ||
            (c == best_cnt && b - a == best_len &&
             std::abs(0.5 * (a + b) - rise) < std::abs(best_mid - rise));
        if (better) {
          best_cnt = c;
          best_len = b - a;
          best_mid = 0.5 * (a + b);
        }
      }
      if (best_cnt >= 0.0) {
        fall += best_mid - rise;
        rise = best_mid;
      }
    }
  }

  BurstTiming timing;
  timing.period_s = best_t;
  timing.on_time_s = on_est;
  double offset = std::fmod(rise + t_ref, best_t);
  if (offset < 0.0) offset += best_t;
  timing.offset_s = offset;
  return timing;
}

VisibilityResult windowed_visibility(const RunPair& d0, const RunPair& d1,
                                     const BurstTiming& timing,
                                     double pulse_period_s, double window_s) {
  if (!(pulse_period_s > 0.0) || !(window_s > 0.0) || !(timing.period_s > 0.0))
    throw std::invalid_argument("windowed_visibility: invalid timing/window");

  // Fine alignment of the pulse lattice from the brightest run (phi = 0).
  std::complex<double> s{0.0, 0.0};
  const double w = kTwoPi / pulse_period_s;
  std::size_t n_align = 0;
  for (const auto* series : {&d0.phi0, &d1.phi0}) {
    for (double t : series->times_s) {
      s += std::complex<double>(std::cos(w * t), std::sin(w * t));
      ++n_align;
    }
  }
  double lattice_phase;
  if (n_align > 0 && std::abs(s) > 3.0 * std::sqrt(static_cast<double>(n_align))) {
    lattice_phase = std::arg(s) / kTwoPi * pulse_period_s;
  } else {
    lattice_phase = std::fmod(timing.offset_s, pulse_period_s);
  }

  const bool gate =
      timing.on_time_s > 0.0 && timing.on_time_s < 0.999 * timing.period_s;
  auto windowed_count = [&](const TimestampSeries& series) {
    double count = 0.0;
    for (double t : series.times_s) {
      double d = std::fmod(t - lattice_phase + 0.5 * pulse_period_s, pulse_period_s);
      if (d < 0.0) d += pulse_period_s;
      d -= 0.5 * pulse_period_s;
      if (std::abs(d) > 0.5 * window_s) continue;
      if (gate) {
        double g = std::fmod(t - timing.offset_s, timing.period_s);
        if (g < 0.0) g += timing.period_s;
        if (g > timing.on_time_s + window_s && g < timing.period_s - window_s)
          continue;
      }
      count += 1.0;
    }
    return count;
  };

  VisibilityResult res;
  res.window_s = window_s;
  res.imax_d0 = windowed_count(d0.phi0);
  res.imin_d0 = windowed_count(d0.phi_pi);
  res.imax_d1 = windowed_count(d1.phi_pi);
  res.imin_d1 = windowed_count(d1.phi0);
  if (res.imax_d0 + res.imin_d0 <= 0.0 || res.imax_d1 + res.imin_d1 <= 0.0)
    throw std::runtime_error("windowed_visibility: empty detection windows");
  res.v_d0 = (res.imax_d0 - res.imin_d0) / (res.imax_d0 + res.imin_d0);
  res.v_d1 = (res.imax_d1 - res.imin_d1) / (res.imax_d1 + res.imin_d1);
  res.v_avg = 0.5 * (res.v_d0 + res.v_d1);
  return res;
}

double visibility_from_variance(double sigma2_rad2) {
  if (sigma2_rad2 < 0.0)
    throw std::invalid_argument("visibility_from_variance: variance must be >= 0");
  return std::exp(-sigma2_rad2 / 2.0);
}

double qber_from_variance(double sigma2_rad2) {
  if (sigma2_rad2 < 0.0)
    throw std::invalid_argument("qber_from_variance: variance must be >= 0");
  return sigma2_rad2 / 4.0;
}

}  // namespace sagnac
