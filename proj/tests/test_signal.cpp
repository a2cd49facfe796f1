#include <doctest.h>

#include <cmath>

#include "sagnac/detection.hpp"
#include "sagnac/noise.hpp"
#include "sagnac/signal.hpp"

using namespace sagnac;

namespace {

LoopLayout uniform_loop(double length_km, double alpha_db, double eta) {
  FiberSegment seg;
  seg.length_km = length_km;
  seg.alpha = Attenuation(alpha_db);
  seg.eta_per_s = eta;
  return build_layout({seg}, {}, GroupVelocity(1.468));
}

}  // namespace

TEST_CASE("pulse train conserves pulse energy") {
  // 900 ps at 1 mW: 9e-13 J per pulse regardless of grid alignment.
  const TimeGrid grid(0.0, 1e-10, 1000);  // one 10 MHz slot
  const SignalPattern pat = make_pulse_train(10e6, 900e-12, 1e-3, grid);
  CHECK(pat.peak_power_w() == doctest::Approx(1e-3));
  CHECK(pat.pulse_energy_j() == doctest::Approx(9e-13).epsilon(1e-12));
  CHECK(pat.total_energy_j() == doctest::Approx(9e-13).epsilon(1e-12));

  // Misaligned grid: the peak sample dilutes but the energy does not.
  const TimeGrid coarse(0.0, 7e-10, 143);
  const SignalPattern pat2 = make_pulse_train(10e6, 900e-12, 1e-3, coarse);
  CHECK(pat2.total_energy_j() == doctest::Approx(9e-13).epsilon(1e-9));
}

TEST_CASE("pulse train rejects unresolvable requests") {
  const TimeGrid grid(0.0, 1e-9, 1000);
  CHECK_THROWS(make_pulse_train(10e6, 2e-7, 1e-3, grid));   // width >= slot
  CHECK_THROWS(make_pulse_train(10e6, 900e-12, 1e-3, TimeGrid(0.0, 1e-8, 100)));
}

TEST_CASE("burst gating") {
  const TimeGrid grid(0.0, 1e-9, 1000000);  // 1 ms
  const SignalPattern train = make_pulse_train(1e6, 100e-9, 1e-3, grid);

  SUBCASE("off = 0 is the identity") {
    const SignalPattern same = apply_burst(train, 10e-6, 0.0);
    CHECK(same.power_w == train.power_w);
  }

  SUBCASE("integer pulses per burst scale the energy by the duty") {
    // 10 us on / 40 us off: 10 pulses per 50 us burst period, 20 periods.
    const SignalPattern burst = apply_burst(train, 10e-6, 40e-6);
    CHECK(burst.meta.duty == doctest::Approx(0.2));
    CHECK(burst.total_energy_j() ==
          doctest::Approx(0.2 * train.total_energy_j()).epsilon(1e-12));
    CHECK(burst.meta.burst_on_s == doctest::Approx(10e-6));
    CHECK(burst.meta.burst_off_s == doctest::Approx(40e-6));
  }

  SUBCASE("paper-style duty") {
    const TimeGrid wide(0.0, 1e-9, 2950000);  // two 1.475 ms burst periods
    const SignalPattern long_train = make_pulse_train(1e6, 100e-9, 1e-3, wide);
    const SignalPattern burst = apply_burst(long_train, 75e-6, 1400e-6);
    CHECK(burst.meta.duty == doctest::Approx(75.0 / 1475.0).epsilon(1e-9));
  }

  SUBCASE("rejects on-times below one pulse period") {
    CHECK_THROWS(apply_burst(train, 0.5e-6, 40e-6));
  }
}

TEST_CASE("two-user duty optimum is exactly one third") {
  CHECK(optimal_duty_two_user() == 1.0 / 3.0);
}

TEST_CASE("snr definition and scaling") {
  const LoopLayout loop = uniform_loop(20.0, 0.202, 8.0);
  // One pulse per 400 us period; the horizon is ~196 us, so late times are
  // backscatter-free.
  const TimeGrid grid(0.0, 1e-8, 40000);
  const SignalPattern pat = make_pulse_train(2.5e3, 2e-8, 1e-3, grid);

  const BackscatterWaveform bw = backscatter_response(loop, pat);
  const double t = 1e-5;
  const double expected = std::pow(10.0, -loop.total_loss_db() / 10.0) / bw.total_at(t);
  CHECK(snr(loop, pat, t) == doctest::Approx(expected).epsilon(1e-9));

  // Doubling the launch energy doubles the backscatter and halves the ratio.
  const SignalPattern pat2 = make_pulse_train(2.5e3, 2e-8, 2e-3, grid);
  CHECK(snr(loop, pat2, t) == doctest::Approx(0.5 * snr(loop, pat, t)).epsilon(1e-6));

  // A fiber that does not scatter gives an infinite ratio.
  const LoopLayout quiet = uniform_loop(20.0, 0.202, 0.0);
  CHECK(std::isinf(snr(quiet, pat, t)));
}

TEST_CASE("burst design") {
  const LoopLayout loop = uniform_loop(20.0, 0.202, 8.0);
  PulseTrainSpec pulse;
  pulse.rate_hz = 10e6;
  pulse.width_s = 2e-8;
  DetectorParams det;
  det.efficiency = 0.1;
  det.dark_prob_per_pulse = 7e-7;
  det.pulse_rate_hz = pulse.rate_hz;

  const double v_g = 299792.458 / 1.468;
  const double raw_period = 1.5 * 20.0 / v_g;

  double prev_on = 0.0;
  bool first = true;
  bool varied = false;
  for (double p : {1e-11, 4e-11, 1.6e-10}) {
    pulse.peak_power_w = p;
    const BurstPlan plan = design_burst(loop, pulse, det, 1.0, 1e-8);
    CHECK(plan.period_s == doctest::Approx(raw_period).epsilon(2e-3));
    CHECK(plan.on_time_s + plan.off_time_s == doctest::Approx(plan.period_s));
    CHECK(plan.windowed_backscatter_prob <= det.dark_prob_per_pulse);
    // More source power never buys more on-time.
    if (!first) {
      CHECK(plan.on_time_s <= prev_on);
      if (plan.on_time_s < prev_on) varied = true;
    }
    prev_on = plan.on_time_s;
    first = false;
  }
  CHECK(varied);  // the sweep must actually exercise the bisection
}
