#include <doctest.h>

#include <set>
#include <string>

#include <json.hpp>

#include "sagnac/scenario.hpp"

using namespace sagnac;
using nlohmann::json;

namespace {

json minimal_doc() {
  return json{
      {"layout",
       {{"segments",
         json::array({{{"length_km", 20.0}, {"alpha_db_per_km", 0.202}, {"eta_per_s", 8.0}}})}}},
      {"signal", {{"peak_power_w", 1e-3}}},
  };
}

std::string error_of(const json& doc) {
  try {
    scenario_from_json(doc);
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal scenario fills defaults") {
  const Scenario sc = scenario_from_json(minimal_doc());
  CHECK(sc.signal.rate_hz == doctest::Approx(10e6));
  CHECK(sc.signal.width_s == doctest::Approx(900e-12));
  CHECK(sc.detector.efficiency == doctest::Approx(0.1));
  CHECK(sc.detector.dark_prob_per_pulse == doctest::Approx(7e-7));
  CHECK(sc.detector.dead_time_s == doctest::Approx(10e-6));
  CHECK(sc.group_index == doctest::Approx(1.468));
  CHECK(sc.wavelength_m == doctest::Approx(1545.3e-9));
  CHECK(sc.layout().length_km() == doctest::Approx(20.0));
  CHECK(sc.pulse_energy_j() == doctest::Approx(1e-3 * 900e-12));
}

TEST_CASE("validation names the offending field") {
  json doc = minimal_doc();
  doc["detector"]["dark_rate"] = -1.0;
  CHECK(error_of(doc).find("detector.dark_rate") != std::string::npos);

  doc = minimal_doc();
  doc["detector"]["efficiency"] = 1.5;
  CHECK(error_of(doc).find("detector.efficiency") != std::string::npos);

  doc = minimal_doc();
  doc["layout"]["segments"][0]["length_km"] = -5.0;
  CHECK(error_of(doc).find("length_km") != std::string::npos);

  doc = minimal_doc();
  doc["signal"]["prob_per_pulse"] = 1e-3;  // both source strengths set
  CHECK(error_of(doc).find("peak_power_w") != std::string::npos);

  doc = minimal_doc();
  doc["run"] = {{"span_s", -1.0}};
  CHECK(error_of(doc).find("run.span_s") != std::string::npos);

  doc = minimal_doc();
  doc.erase("layout");
  CHECK(error_of(doc).find("layout") != std::string::npos);
}

TEST_CASE("dark rate in hertz converts through the pulse rate") {
  json doc = minimal_doc();
  doc["detector"]["dark_rate"] = 7.0;
  doc["signal"]["rate_hz"] = 5e3;
  doc["signal"]["width_s"] = 450e-12;
  const Scenario sc = scenario_from_json(doc);
  CHECK(sc.detector.dark_prob_per_pulse == doctest::Approx(7.0 / 5e3));
  CHECK(sc.detector.dark_rate_hz() == doctest::Approx(7.0));
}

TEST_CASE("per-pulse probability resolves through the loop loss") {
  json doc = minimal_doc();
  doc["signal"]["peak_power_w"] = 0.0;
  doc["signal"]["prob_per_pulse"] = 3.5e-3;
  const Scenario sc = scenario_from_json(doc);
  // 4.04 dB loop loss and 10% efficiency
  const double expected = 3.5e-3 * photon_energy_j(sc.wavelength_m) /
                          (0.1 * db_to_linear(-4.04));
  CHECK(sc.pulse_energy_j() == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("scenario hash is stable and semantic") {
  const Scenario sc = scenario_from_json(minimal_doc());
  CHECK(sc.hash() == scenario_from_json(minimal_doc()).hash());
  // Echo round trip preserves the hash (defaults are canonical).
  CHECK(scenario_from_json(sc.echo()).hash() == sc.hash());

  json doc = minimal_doc();
  doc["run"] = {{"span_s", 0.05}};
  CHECK(scenario_from_json(doc).hash() != sc.hash());
}

TEST_CASE("derived seeds are distinct across streams and seeds") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t seed : {1ull, 2ull, 42ull})
    for (std::uint64_t stream = 0; stream < 64; ++stream)
      seen.insert(derive_seed(seed, stream));
  CHECK(seen.size() == 3 * 64);
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}

TEST_CASE("explicit phase model drives the variance target") {
  json doc = minimal_doc();
  doc["phase_noise"] = {{"model", "explicit"},
                        {"amplitude", 1e-7},
                        {"exponent", 3.0},
                        {"floor_rad2", 0.005}};
  const Scenario sc = scenario_from_json(doc);
  CHECK(sc.target_sigma2(100.0) == doctest::Approx(1e-7 * 1e6));
  const PhaseNoiseModel m = sc.phase_model();
  CHECK(m.exponent == doctest::Approx(3.0));
  CHECK(m.floor_rad2 == doctest::Approx(0.005));
}

TEST_CASE("burst planning from a scenario") {
  json doc = minimal_doc();
  doc["signal"]["peak_power_w"] = 3e-10;
  doc["signal"]["burst"] = {{"mode", "design"}, {"design_margin", 1.0}};
  const Scenario sc = scenario_from_json(doc);
  const BurstPlan plan = plan_burst(sc);
  const double v_g = 299792.458 / sc.group_index;
  CHECK(plan.period_s == doctest::Approx(1.5 * 20.0 / v_g).epsilon(0.01));
  CHECK(plan.on_time_s > 0.0);
  CHECK(plan.on_time_s < plan.period_s);
}
