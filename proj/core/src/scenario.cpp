#include "sagnac/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace sagnac {

namespace {

constexpr double kPi = 3.14159265358979323846;

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw std::invalid_argument("scenario: " + field + " " + what);
}

double get_num(const json& obj, const char* key, const std::string& path,
               double fallback, bool required = false) {
  if (!obj.contains(key)) {
    if (required) fail(path, "is required");
    return fallback;
  }
  const auto& v = obj.at(key);
  if (!v.is_number()) fail(path, "must be a number");
  return v.get<double>();
}

std::string get_str(const json& obj, const char* key, const std::string& path,
                    const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_string()) fail(path, "must be a string");
  return obj.at(key).get<std::string>();
}

}  // namespace

Scenario scenario_from_json(const json& doc) {
  if (!doc.is_object()) fail("document", "must be a JSON object");
  Scenario sc;
  sc.schema_version =
      static_cast<int>(get_num(doc, "schema_version", "schema_version", 1));
  if (sc.schema_version != 1) fail("schema_version", "must be 1");
  sc.name = get_str(doc, "name", "name", "unnamed");

  if (!doc.contains("layout") || !doc.at("layout").is_object())
    fail("layout", "is required");
  const json& layout = doc.at("layout");
  if (!layout.contains("segments") || !layout.at("segments").is_array() ||
      layout.at("segments").empty())
    fail("layout.segments", "must be a non-empty array");
  std::size_t idx = 0;
  for (const auto& seg : layout.at("segments")) {
    const std::string p = "layout.segments[" + std::to_string(idx) + "]";
    SegmentSpec s;
    s.length_km = get_num(seg, "length_km", p + ".length_km", 0.0, true);
    if (!(s.length_km > 0.0)) fail(p + ".length_km", "must be > 0");
    s.alpha_db_per_km = get_num(seg, "alpha_db_per_km", p + ".alpha_db_per_km", 0.0, true);
    if (s.alpha_db_per_km < 0.0) fail(p + ".alpha_db_per_km", "must be >= 0");
    s.eta_per_s = get_num(seg, "eta_per_s", p + ".eta_per_s", 0.0);
    if (s.eta_per_s < 0.0) fail(p + ".eta_per_s", "must be >= 0");
    s.label = get_str(seg, "label", p + ".label", "");
    sc.segments.push_back(s);
    ++idx;
  }
  if (layout.contains("loss_points")) {
    idx = 0;
    for (const auto& lp : layout.at("loss_points")) {
      const std::string p = "layout.loss_points[" + std::to_string(idx) + "]";
      LossPoint pt;
      pt.position_km = get_num(lp, "position_km", p + ".position_km", 0.0, true);
      pt.loss_db = get_num(lp, "loss_db", p + ".loss_db", 0.0, true);
      if (pt.loss_db < 0.0) fail(p + ".loss_db", "must be >= 0");
      sc.loss_points.push_back(pt);
      ++idx;
    }
  }
  sc.group_index = get_num(layout, "group_index", "layout.group_index", 1.468);
  if (!(sc.group_index > 1.0) || !(sc.group_index < 2.0))
    fail("layout.group_index", "must be in (1, 2)");
  const double wl_nm =
      get_num(layout, "wavelength_nm", "layout.wavelength_nm", 1545.3);
  if (!(wl_nm > 0.0)) fail("layout.wavelength_nm", "must be > 0");
  sc.wavelength_m = wl_nm * 1e-9;

  const json signal = doc.value("signal", json::object());
  sc.signal.kind = get_str(signal, "kind", "signal.kind", "pulsed");
  if (sc.signal.kind != "pulsed" && sc.signal.kind != "cw")
    fail("signal.kind", "must be \"pulsed\" or \"cw\"");
  sc.signal.rate_hz = get_num(signal, "rate_hz", "signal.rate_hz", 10e6);
  if (!(sc.signal.rate_hz > 0.0)) fail("signal.rate_hz", "must be > 0");
  sc.signal.width_s = get_num(signal, "width_s", "signal.width_s", 900e-12);
  if (!(sc.signal.width_s > 0.0) || !(sc.signal.width_s < 1.0 / sc.signal.rate_hz))
    fail("signal.width_s", "must be in (0, 1/rate_hz)");
  sc.signal.peak_power_w = get_num(signal, "peak_power_w", "signal.peak_power_w", 0.0);
  if (sc.signal.peak_power_w < 0.0) fail("signal.peak_power_w", "must be >= 0");
  sc.signal.prob_per_pulse =
      get_num(signal, "prob_per_pulse", "signal.prob_per_pulse", 0.0);
  if (sc.signal.prob_per_pulse < 0.0 || sc.signal.prob_per_pulse > 0.1)
    fail("signal.prob_per_pulse", "must be in [0, 0.1]");
  if ((sc.signal.peak_power_w > 0.0) == (sc.signal.prob_per_pulse > 0.0))
    fail("signal.peak_power_w/prob_per_pulse", "exactly one must be > 0");
  if (signal.contains("include_backscatter")) {
    if (!signal.at("include_backscatter").is_boolean())
      fail("signal.include_backscatter", "must be a boolean");
    sc.signal.include_backscatter = signal.at("include_backscatter").get<bool>();
  }
  const json burst = signal.value("burst", json::object());
  sc.signal.burst.mode = get_str(burst, "mode", "signal.burst.mode", "none");
  if (sc.signal.burst.mode != "none" && sc.signal.burst.mode != "fixed" &&
      sc.signal.burst.mode != "design")
    fail("signal.burst.mode", "must be \"none\", \"fixed\" or \"design\"");
  sc.signal.burst.on_s = get_num(burst, "on_s", "signal.burst.on_s", 0.0);
  sc.signal.burst.off_s = get_num(burst, "off_s", "signal.burst.off_s", 0.0);
  sc.signal.burst.design_margin =
      get_num(burst, "design_margin", "signal.burst.design_margin", 1.0);
  if (sc.signal.burst.mode == "fixed") {
    if (!(sc.signal.burst.on_s > 0.0)) fail("signal.burst.on_s", "must be > 0");
    if (!(sc.signal.burst.off_s > 0.0)) fail("signal.burst.off_s", "must be > 0");
  }
  if (!(sc.signal.burst.design_margin >= 1.0))
    fail("signal.burst.design_margin", "must be >= 1");

  const json phase = doc.value("phase_noise", json::object());
  sc.phase.model = get_str(phase, "model", "phase_noise.model", "none");
  double amp_default = 0.0, exp_default = 0.0, floor_default = 0.0;
  if (sc.phase.model == "ull") {
    const PhaseNoiseModel m = PhaseNoiseModel::ull_default();
    amp_default = m.amplitude;
    exp_default = m.exponent;
    floor_default = m.floor_rad2;
  } else if (sc.phase.model == "smf28") {
    exp_default = 3.1;
    floor_default = 0.0072;
  } else if (sc.phase.model != "none" && sc.phase.model != "explicit") {
    fail("phase_noise.model", "must be \"none\", \"ull\", \"smf28\" or \"explicit\"");
  }
  const bool needs_amp = sc.phase.model == "smf28" || sc.phase.model == "explicit";
  sc.phase.amplitude =
      get_num(phase, "amplitude", "phase_noise.amplitude", amp_default, needs_amp);
  sc.phase.exponent = get_num(phase, "exponent", "phase_noise.exponent", exp_default,
                              sc.phase.model == "explicit");
  sc.phase.floor_rad2 =
      get_num(phase, "floor_rad2", "phase_noise.floor_rad2", floor_default);
  sc.phase.floor_unc_rad2 =
      get_num(phase, "floor_unc_rad2", "phase_noise.floor_unc_rad2", 0.0);
  sc.phase.bandwidth_hz =
      get_num(phase, "bandwidth_hz", "phase_noise.bandwidth_hz", 1e6);
  sc.phase.sigma2_rad2 = get_num(phase, "sigma2_rad2", "phase_noise.sigma2_rad2", -1.0);
  if (sc.phase.model != "none" && !(sc.phase.amplitude > 0.0) &&
      !(sc.phase.sigma2_rad2 >= 0.0))
    fail("phase_noise.amplitude", "must be > 0");
  if (sc.phase.floor_rad2 < 0.0) fail("phase_noise.floor_rad2", "must be >= 0");
  if (!(sc.phase.bandwidth_hz > 0.0)) fail("phase_noise.bandwidth_hz", "must be > 0");
  if (phase.contains("lengths_km")) {
    if (!phase.at("lengths_km").is_array())
      fail("phase_noise.lengths_km", "must be an array");
    for (const auto& v : phase.at("lengths_km")) {
      if (!v.is_number() || !(v.get<double>() > 0.0))
        fail("phase_noise.lengths_km", "entries must be numbers > 0");
      sc.phase.lengths_km.push_back(v.get<double>());
    }
  }

  const json det = doc.value("detector", json::object());
  sc.detector.efficiency = get_num(det, "efficiency", "detector.efficiency", 0.1);
  if (!(sc.detector.efficiency > 0.0) || sc.detector.efficiency > 1.0)
    fail("detector.efficiency", "must be in (0, 1]");
  sc.detector.pulse_rate_hz = sc.signal.rate_hz;
  if (det.contains("dark_rate") && det.contains("dark_prob_per_pulse"))
    fail("detector.dark_rate", "conflicts with detector.dark_prob_per_pulse");
  if (det.contains("dark_rate")) {
    const double hz = get_num(det, "dark_rate", "detector.dark_rate", 0.0);
    if (hz < 0.0) fail("detector.dark_rate", "must be >= 0");
    sc.detector.dark_prob_per_pulse = hz / sc.signal.rate_hz;
  } else {
    sc.detector.dark_prob_per_pulse =
        get_num(det, "dark_prob_per_pulse", "detector.dark_prob_per_pulse", 7e-7);
    if (sc.detector.dark_prob_per_pulse < 0.0)
      fail("detector.dark_prob_per_pulse", "must be >= 0");
  }
  sc.detector.dead_time_s = get_num(det, "dead_time_s", "detector.dead_time_s", 10e-6);
  if (sc.detector.dead_time_s < 0.0) fail("detector.dead_time_s", "must be >= 0");

  const json run = doc.value("run", json::object());
  sc.run.span_s = get_num(run, "span_s", "run.span_s", 0.02);
  if (!(sc.run.span_s > 0.0)) fail("run.span_s", "must be > 0");
  sc.run.grid_dt_s = get_num(run, "grid_dt_s", "run.grid_dt_s", 1e-7);
  if (!(sc.run.grid_dt_s > 0.0)) fail("run.grid_dt_s", "must be > 0");
  sc.run.seeds = static_cast<int>(get_num(run, "seeds", "run.seeds", 1));
  if (sc.run.seeds < 1) fail("run.seeds", "must be >= 1");
  sc.run.window_s = get_num(run, "window_s", "run.window_s", 0.0);
  if (sc.run.window_s < 0.0) fail("run.window_s", "must be >= 0");
  sc.run.rbw_hz = get_num(run, "rbw_hz", "run.rbw_hz", 100.0);
  if (!(sc.run.rbw_hz > 0.0)) fail("run.rbw_hz", "must be > 0");
  sc.run.bin_s = get_num(run, "bin_s", "run.bin_s", 1e-7);
  if (!(sc.run.bin_s > 0.0)) fail("run.bin_s", "must be > 0");
  sc.run.subset_size = static_cast<std::size_t>(
      get_num(run, "subset_size", "run.subset_size", 1000));
  if (sc.run.subset_size < 2) fail("run.subset_size", "must be >= 2");

  sc.layout();  // surfaces layout-level inconsistencies (loss point range etc.)
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("scenario: cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("scenario: " + path + ": " + e.what());
  }
  try {
    return scenario_from_json(doc);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

LoopLayout Scenario::layout() const {
  std::vector<FiberSegment> segs;
  for (const auto& s : segments)
    segs.push_back({s.length_km, Attenuation(s.alpha_db_per_km), s.eta_per_s, s.label});
  return build_layout(segs, loss_points, GroupVelocity(group_index));
}

PhaseNoiseModel Scenario::phase_model() const {
  PhaseNoiseModel m;
  m.fiber_label = phase.model;
  m.amplitude = phase.amplitude;
  m.exponent = phase.exponent;
  m.floor_rad2 = phase.floor_rad2;
  m.bandwidth_hz = phase.bandwidth_hz;
  return m;
}

double Scenario::target_sigma2(double length_km) const {
  if (phase.sigma2_rad2 >= 0.0) return phase.sigma2_rad2;
  if (phase.model == "none") return 0.0;
  return phase.amplitude * std::pow(length_km, phase.exponent);
}

double Scenario::pulse_energy_j() const {
  if (signal.peak_power_w > 0.0) return signal.peak_power_w * signal.width_s;
  const double t_loop = db_to_linear(-layout().total_loss_db());
  return signal.prob_per_pulse * photon_energy_j(wavelength_m) /
         (detector.efficiency * t_loop);
}

json Scenario::echo() const {
  json segs = json::array();
  for (const auto& s : segments)
    segs.push_back({{"length_km", s.length_km},
                    {"alpha_db_per_km", s.alpha_db_per_km},
                    {"eta_per_s", s.eta_per_s},
                    {"label", s.label}});
  json lps = json::array();
  for (const auto& p : loss_points)
    lps.push_back({{"position_km", p.position_km}, {"loss_db", p.loss_db}});
  return json{
      {"schema_version", schema_version},
      {"name", name},
      {"layout",
       {{"segments", segs},
        {"loss_points", lps},
        {"group_index", group_index},
        {"wavelength_nm", wavelength_m * 1e9}}},
      {"signal",
       {{"kind", signal.kind},
        {"rate_hz", signal.rate_hz},
        {"width_s", signal.width_s},
        {"peak_power_w", signal.peak_power_w},
        {"prob_per_pulse", signal.prob_per_pulse},
        {"include_backscatter", signal.include_backscatter},
        {"burst",
         {{"mode", signal.burst.mode},
          {"on_s", signal.burst.on_s},
          {"off_s", signal.burst.off_s},
          {"design_margin", signal.burst.design_margin}}}}},
      {"phase_noise",
       {{"model", phase.model},
        {"amplitude", phase.amplitude},
        {"exponent", phase.exponent},
        {"floor_rad2", phase.floor_rad2},
        {"floor_unc_rad2", phase.floor_unc_rad2},
        {"bandwidth_hz", phase.bandwidth_hz},
        {"sigma2_rad2", phase.sigma2_rad2},
        {"lengths_km", phase.lengths_km}}},
      {"detector",
       {{"efficiency", detector.efficiency},
        {"dark_prob_per_pulse", detector.dark_prob_per_pulse},
        {"dead_time_s", detector.dead_time_s}}},
      {"run",
       {{"span_s", run.span_s},
        {"grid_dt_s", run.grid_dt_s},
        {"seeds", run.seeds},
        {"window_s", run.window_s},
        {"rbw_hz", run.rbw_hz},
        {"bin_s", run.bin_s},
        {"subset_size", run.subset_size}}}};
}

std::uint64_t Scenario::hash() const {
  const std::string dump = echo().dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

VisibilitySample simulate_visibility(const Scenario& sc, std::uint64_t seed) {
  const LoopLayout loop = sc.layout();
  const double slot = 1.0 / sc.signal.rate_hz;
  const double e_ph = photon_energy_j(sc.wavelength_m);
  const double t_loop = db_to_linear(-loop.total_loss_db());
  const double e_p = sc.pulse_energy_j();
  const double p_sig = e_p * t_loop * sc.detector.efficiency / e_ph;

  // Period of the pulse-slot simulation grid: the burst period when bursts
  // are on, otherwise the round-trip horizon (so the folded backscatter is
  // sampled over its natural period).
  double on_s = 0.0, off_s = 0.0;
  if (sc.signal.burst.mode == "fixed") {
    on_s = sc.signal.burst.on_s;
    off_s = sc.signal.burst.off_s;
  } else if (sc.signal.burst.mode == "design") {
    const BurstPlan plan = plan_burst(sc);
    on_s = plan.on_time_s;
    off_s = plan.off_time_s;
  }
  const bool bursty = on_s > 0.0;
  std::size_t n_slots;
  if (bursty) {
    n_slots = static_cast<std::size_t>(std::llround((on_s + off_s) / slot));
  } else {
    n_slots = std::max<std::size_t>(
        16, static_cast<std::size_t>(std::llround(backscatter_horizon_s(loop) / slot)));
  }
  const TimeGrid grid(0.0, slot, n_slots);

  SignalPattern pattern = make_cw(e_p / slot, grid);
  pattern.meta.pulse_rate_hz = sc.signal.rate_hz;
  pattern.meta.pulse_width_s = sc.signal.kind == "pulsed" ? sc.signal.width_s : slot;
  if (bursty) pattern = apply_burst(pattern, on_s, off_s);

  VisibilitySample out;
  out.sigma2_target = sc.target_sigma2(loop.length_km());
  PhaseTrace trace{grid, std::vector<double>(grid.n, 0.0), out.sigma2_target};
  if (out.sigma2_target > 0.0)
    trace = synthesize_phase_variance(out.sigma2_target, sc.phase.bandwidth_hz, grid,
                                      derive_seed(seed, 1));

  BackscatterWaveform bs;
  const bool with_bs = sc.signal.include_backscatter;
  if (with_bs) bs = backscatter_response(loop, pattern);
  // Fraction of each slot's backscatter that falls inside the coincidence
  // gate: the pulse width for pulsed operation, the whole slot for cw.
  const double gate_s = sc.signal.kind == "pulsed" ? sc.signal.width_s : slot;
  const double bs_scale =
      std::min(1.0, gate_s / slot) * slot * sc.detector.efficiency / e_ph;

  const auto n_periods = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(sc.run.span_s / grid.span())));

  auto run_setting = [&](double phi, std::uint64_t tag, TimestampSeries& out0,
                         TimestampSeries& out1) {
    const InterferenceParams params(p_sig, 0.0, phi);
    auto [f0, f1] = interference_flux(pattern, trace, params);
    if (with_bs) add_backscatter(f0, f1, bs, bs_scale);
    out0 = spad_detect_periodic(f0, n_periods, sc.detector, derive_seed(seed, tag), 0);
    out1 = spad_detect_periodic(f1, n_periods, sc.detector, derive_seed(seed, tag + 1), 1);
  };
  run_setting(0.0, 10, out.d0_phi0, out.d1_phi0);
  run_setting(kPi, 20, out.d0_phi_pi, out.d1_phi_pi);

  if (bursty) {
    try {
      out.timing = recover_burst_timing(out.d0_phi0, grid.span());
      out.timing_recovered = true;
    } catch (const std::exception&) {
      out.timing = BurstTiming{grid.span(), 0.0, pattern.meta.burst_on_s};
    }
  } else {
    out.timing = BurstTiming{grid.span(), 0.0, grid.span()};
  }
  const double window = sc.run.window_s > 0.0 ? sc.run.window_s : slot;
  out.vis = windowed_visibility({out.d0_phi0, out.d0_phi_pi},
                                {out.d1_phi0, out.d1_phi_pi}, out.timing, slot, window);
  return out;
}

OtdrSample simulate_otdr(const Scenario& sc, std::uint64_t seed) {
  const LoopLayout loop = sc.layout();
  const double period = 1.0 / sc.signal.rate_hz;
  const double dt = sc.run.bin_s;
  const auto n = static_cast<std::size_t>(std::llround(period / dt));
  if (n < 4) throw std::invalid_argument("simulate_otdr: run.bin_s too coarse");
  const TimeGrid grid(0.0, dt, n);

  OtdrSample out;
  out.rep_period_s = period;
  out.pulse_energy_j = sc.pulse_energy_j();

  // One launch per repetition period; only the backscattered light returns to
  // the source port, so the detector flux is the one-directional response.
  // The event sampler needs a small per-sample probability, so the simulation
  // grid is refined below the histogram bin until that holds; the histogram
  // itself stays at bin_s.
  Flux flux{grid, {}};
  std::size_t refine = 1;
  for (;;) {
    const double dts = dt / static_cast<double>(refine);
    const std::size_t ns = n * refine;
    const TimeGrid g(0.0, dts, ns);
    SignalPattern pattern;
    pattern.grid = g;
    pattern.power_w.assign(ns, 0.0);
    pattern.power_w[0] = out.pulse_energy_j / dts;
    pattern.period_s = g.span();
    pattern.meta.pulse_rate_hz = sc.signal.rate_hz;
    pattern.meta.pulse_width_s = sc.signal.width_s;
    const BackscatterWaveform bs = backscatter_response(loop, pattern);

    flux.grid = g;
    flux.values.assign(ns, 0.0);
    double p_max = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
      flux.values[i] = watts_to_prob_per_sample(bs.clockwise_w[i], dts,
                                                sc.detector, sc.wavelength_m);
      p_max = std::max(p_max, flux.values[i]);
    }
    if (p_max <= 0.05 || refine >= 1024) break;
    refine *= static_cast<std::size_t>(std::ceil(p_max / 0.05));
  }

  const auto n_periods = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(sc.run.span_s / period)));
  out.events = spad_detect_periodic(flux, n_periods, sc.detector,
                                    derive_seed(seed, 7), 0);
  out.n_events = out.events.times_s.size();
  out.hist = fold_histogram(out.events, period, dt);
  const double horizon = backscatter_horizon_s(loop);
  out.fit = fit_otdr(out.hist, sc.detector, out.pulse_energy_j, period, loop.group(),
                     sc.wavelength_m, std::min(horizon - 2.0 * dt, grid.span()));
  return out;
}

std::vector<PhasePoint> analyze_phase(const Scenario& sc, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(
      std::llround(sc.run.span_s / sc.run.grid_dt_s));
  if (n < 4 * sc.run.subset_size)
    throw std::invalid_argument("analyze_phase: run.span_s too short for subset_size");
  const TimeGrid grid(0.0, sc.run.grid_dt_s, n);
  std::vector<double> lengths = sc.phase.lengths_km;
  if (lengths.empty()) lengths.push_back(sc.layout().length_km());

  std::vector<PhasePoint> out;
  for (std::size_t j = 0; j < lengths.size(); ++j) {
    PhasePoint pt;
    pt.length_km = lengths[j];
    pt.target_rad2 = sc.target_sigma2(lengths[j]);
    PhaseTrace trace{grid, std::vector<double>(grid.n, 0.0), pt.target_rad2};
    if (pt.target_rad2 > 0.0)
      trace = synthesize_phase_variance(pt.target_rad2, sc.phase.bandwidth_hz, grid,
                                        derive_seed(seed, 100 + j));
    // Classical readout biased to the quadrature point, where the fringe
    // slope is maximal and the equipment floor calibration applies.
    const InterferenceParams params(1.0, 0.0, kPi / 2.0);
    const SignalPattern env = make_cw(1.0, grid);
    auto [f0, f1] = interference_flux(env, trace, params);
    (void)f1;
    const TimeSeries noisy = classical_trace(f0, params, sc.phase.floor_rad2,
                                             derive_seed(seed, 200 + j));
    const PhaseTrace extracted = extract_phase(noisy, params);
    pt.estimate = subset_variance(extracted, sc.run.subset_size);
    pt.excess_rad2 =
        subtract_floor(pt.estimate, sc.phase.floor_rad2, sc.phase.floor_unc_rad2);
    out.push_back(std::move(pt));
  }
  return out;
}

BurstPlan plan_burst(const Scenario& sc) {
  const LoopLayout loop = sc.layout();
  const double slot = 1.0 / sc.signal.rate_hz;
  const double e_p = sc.pulse_energy_j();
  PulseTrainSpec pulse{sc.signal.rate_hz, sc.signal.width_s, e_p / sc.signal.width_s};
  // Grid step: an integer divisor of the slot no coarser than the pulse width.
  const double base = std::min(1e-9, sc.signal.width_s);
  const double dt = slot / std::ceil(slot / base);
  return design_burst(loop, pulse, sc.detector, sc.signal.burst.design_margin, dt,
                      sc.wavelength_m);
}

// ---------------------------------------------------------------------------
// Report emission.

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string fmt_time(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.12f", v);
  return buf;
}

std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct CsvWriter {
  std::ofstream out;

  CsvWriter(const std::filesystem::path& path, const Scenario& sc,
            const std::string& subcommand, std::uint64_t seed, int n_seeds,
            const std::string& columns) {
    out.open(path, std::ios::binary);  // binary: byte-identical across platforms
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# generated by sagnac-sim " << kArtifactVersion << "\n"
        << "# subcommand: " << subcommand << "\n"
        << "# scenario: " << sc.name << "\n"
        << "# scenario_hash: " << hash_hex(sc.hash()) << "\n"
        << "# seed: " << seed << "\n"
        << "# seeds: " << n_seeds << "\n"
        << "# columns: " << columns << "\n"
        << columns << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out << cells[i] << (i + 1 < cells.size() ? "," : "\n");
  }
};

void write_timestamps(const std::filesystem::path& path,
                      const std::vector<const TimestampSeries*>& streams) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# seconds detector\n";
  std::vector<std::pair<double, int>> merged;
  for (const auto* s : streams)
    for (double t : s->times_s) merged.emplace_back(t, s->detector_id);
  std::sort(merged.begin(), merged.end());
  for (const auto& [t, id] : merged) out << fmt_time(t) << " " << id << "\n";
}

json fit_to_json(const FitResult& fit) {
  return json{{"params", fit.params},
              {"uncertainties", fit.uncertainties},
              {"residual_norm", fit.residual_norm},
              {"converged", fit.converged},
              {"iterations", fit.iterations}};
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0
                   : std::accumulate(v.begin(), v.end(), 0.0) /
                         static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

Report run(const Scenario& sc, const std::string& subcommand, std::uint64_t seed,
           int n_seeds, const std::string& out_dir) {
  if (n_seeds < 1) throw std::invalid_argument("run: seeds must be >= 1");
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);

  Report report;
  json& doc = report.doc;
  doc["artifact_version"] = kArtifactVersion;
  doc["subcommand"] = subcommand;
  doc["scenario"] = sc.echo();
  doc["scenario_hash"] = hash_hex(sc.hash());
  doc["seed"] = seed;
  doc["seeds"] = n_seeds;
  json& results = doc["results"];

  if (subcommand == "simulate") {
    CsvWriter csv(dir / "visibility.csv", sc, subcommand, seed, n_seeds,
                  "seed,v_d0,v_d1,v_avg,imax_d0,imin_d0,imax_d1,imin_d1,"
                  "sigma2_target,period_s,offset_s,on_time_s");
    std::vector<double> v_avg;
    std::unique_ptr<VisibilitySample> first;
    for (int s = 0; s < n_seeds; ++s) {
      VisibilitySample sample = simulate_visibility(sc, seed + static_cast<std::uint64_t>(s));
      csv.row({std::to_string(seed + s), fmt(sample.vis.v_d0), fmt(sample.vis.v_d1),
               fmt(sample.vis.v_avg), fmt(sample.vis.imax_d0), fmt(sample.vis.imin_d0),
               fmt(sample.vis.imax_d1), fmt(sample.vis.imin_d1),
               fmt(sample.sigma2_target), fmt(sample.timing.period_s),
               fmt(sample.timing.offset_s), fmt(sample.timing.on_time_s)});
      v_avg.push_back(sample.vis.v_avg);
      if (!first) first = std::make_unique<VisibilitySample>(std::move(sample));
    }
    write_timestamps(dir / "timestamps.txt", {&first->d0_phi0, &first->d1_phi0});
    results["visibility_mean"] = mean_of(v_avg);
    results["visibility_std"] = std_of(v_avg);
    results["visibility_predicted"] = visibility_from_variance(first->sigma2_target);
    results["qber_predicted"] = qber_from_variance(first->sigma2_target);
    results["sigma2_target"] = first->sigma2_target;
    results["timing"] = {{"period_s", first->timing.period_s},
                         {"offset_s", first->timing.offset_s},
                         {"on_time_s", first->timing.on_time_s},
                         {"recovered", first->timing_recovered}};
  } else if (subcommand == "analyze-phase") {
    CsvWriter csv(dir / "variance.csv", sc, subcommand, seed, n_seeds,
                  "length_km,seed,sigma2_rad2,std_across,n_subsets,excess_rad2");
    std::map<double, std::vector<double>> by_length, by_length_excess;
    std::vector<PhasePoint> last;
    for (int s = 0; s < n_seeds; ++s) {
      const auto points = analyze_phase(sc, seed + static_cast<std::uint64_t>(s));
      for (const auto& pt : points) {
        csv.row({fmt(pt.length_km), std::to_string(seed + s), fmt(pt.estimate.sigma2),
                 fmt(pt.estimate.std_across), std::to_string(pt.estimate.n_subsets),
                 fmt(pt.excess_rad2)});
        by_length[pt.length_km].push_back(pt.estimate.sigma2);
        by_length_excess[pt.length_km].push_back(pt.excess_rad2);
      }
      last = points;
    }
    json pts = json::array();
    std::vector<PowerLawPoint> fit_points;
    for (const auto& [len, vals] : by_length) {
      const double m = mean_of(vals);
      const double err = vals.size() > 1
                             ? std_of(vals) / std::sqrt(static_cast<double>(vals.size()))
                             : 0.0;
      const double ex = mean_of(by_length_excess[len]);
      pts.push_back({{"length_km", len},
                     {"sigma2_rad2", m},
                     {"excess_rad2", ex},
                     {"error_rad2", err},
                     {"visibility", visibility_from_variance(ex)},
                     {"qber", qber_from_variance(ex)}});
      fit_points.push_back({len, m, err});
    }
    results["points"] = pts;
    // Raw variances with a fitted offset: the fit estimates the equipment
    // floor alongside the power law instead of relying on its nominal value.
    if (fit_points.size() >= 3)
      results["power_law_fit"] = fit_to_json(fit_power_law(fit_points, true));
  } else if (subcommand == "fit-otdr") {
    std::vector<double> alphas, etas;
    std::unique_ptr<OtdrSample> first;
    json fits = json::array();
    for (int s = 0; s < n_seeds; ++s) {
      OtdrSample sample = simulate_otdr(sc, seed + static_cast<std::uint64_t>(s));
      alphas.push_back(sample.fit.params.at("alpha_db_per_km"));
      etas.push_back(sample.fit.params.at("eta_per_s"));
      fits.push_back(fit_to_json(sample.fit));
      if (!first) first = std::make_unique<OtdrSample>(std::move(sample));
    }
    CsvWriter csv(dir / "otdr.csv", sc, subcommand, seed, n_seeds,
                  "time_s,counts");
    for (std::size_t b = 0; b < first->hist.counts.size(); ++b)
      csv.row({fmt(first->hist.bin_start_s[b] + 0.5 * first->hist.bin_width_s),
               std::to_string(first->hist.counts[b])});
    write_timestamps(dir / "timestamps.txt", {&first->events});
    results["fits"] = fits;
    results["alpha_db_per_km_mean"] = mean_of(alphas);
    results["eta_per_s_mean"] = mean_of(etas);
    results["events_first_seed"] = first->n_events;
  } else if (subcommand == "optimize-burst") {
    const BurstPlan plan = plan_burst(sc);
    results["burst_plan"] = {
        {"on_time_s", plan.on_time_s},
        {"off_time_s", plan.off_time_s},
        {"period_s", plan.period_s},
        {"duty", plan.on_time_s / plan.period_s},
        {"predicted_snr", plan.predicted_snr},
        {"windowed_backscatter_prob", plan.windowed_backscatter_prob},
        {"dark_prob_per_pulse", sc.detector.dark_prob_per_pulse}};
    results["optimal_duty_two_user"] = optimal_duty_two_user();
    // Backscatter waveform over one burst period, decimated for plotting.
    const LoopLayout loop = sc.layout();
    const double slot = 1.0 / sc.signal.rate_hz;
    const auto n_slots =
        static_cast<std::size_t>(std::llround(plan.period_s / slot));
    const TimeGrid grid(0.0, slot, n_slots);
    SignalPattern pattern = make_cw(sc.pulse_energy_j() / slot, grid);
    pattern = apply_burst(pattern, plan.on_time_s, plan.off_time_s);
    const BackscatterWaveform bs = backscatter_response(loop, pattern);
    CsvWriter csv(dir / "backscatter.csv", sc, subcommand, seed, n_seeds,
                  "time_s,clockwise_w,counterclockwise_w,total_w");
    const std::size_t stride = std::max<std::size_t>(1, n_slots / 2000);
    for (std::size_t i = 0; i < n_slots; i += stride)
      csv.row({fmt(grid.time(i)), fmt(bs.clockwise_w[i]),
               fmt(bs.counterclockwise_w[i]), fmt(bs.total_w[i])});
  } else if (subcommand == "psd") {
    const auto n = static_cast<std::size_t>(
        std::llround(sc.run.span_s / sc.run.grid_dt_s));
    const TimeGrid grid(0.0, sc.run.grid_dt_s, n);
    const double length = sc.phase.lengths_km.empty() ? sc.layout().length_km()
                                                      : sc.phase.lengths_km.front();
    const double target = sc.target_sigma2(length);
    std::vector<double> accum;
    std::vector<double> freqs;
    for (int s = 0; s < n_seeds; ++s) {
      const PhaseTrace trace = synthesize_phase_variance(
          target, sc.phase.bandwidth_hz, grid,
          derive_seed(seed + static_cast<std::uint64_t>(s), 1));
      const auto spec = psd({trace.grid, trace.values}, sc.run.rbw_hz, 0.0,
                            0.5 / sc.run.grid_dt_s);
      if (accum.empty()) {
        accum.assign(spec.size(), 0.0);
        for (const auto& [f, v] : spec) freqs.push_back(f);
      }
      for (std::size_t k = 0; k < spec.size(); ++k) accum[k] += spec[k].second;
    }
    CsvWriter csv(dir / "psd.csv", sc, subcommand, seed, n_seeds,
                  "frequency_hz,psd_rad2_per_hz");
    double integral = 0.0;
    const double df = freqs.size() > 1 ? freqs[1] - freqs[0] : 0.0;
    for (std::size_t k = 0; k < accum.size(); ++k) {
      const double v = accum[k] / n_seeds;
      csv.row({fmt(freqs[k]), fmt(v)});
      integral += v * df;
    }
    results["integrated_variance_rad2"] = integral;
    results["sigma2_target"] = target;
    results["rbw_hz"] = sc.run.rbw_hz;
  } else {
    throw std::invalid_argument("run: unknown subcommand " + subcommand);
  }

  std::ofstream out(dir / "report.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report.json");
  out << doc.dump(2) << "\n";
  return report;
}

}  // namespace sagnac
