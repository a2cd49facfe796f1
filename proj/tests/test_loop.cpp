#include <doctest.h>

#include <cmath>

#include "sagnac/loop.hpp"

using namespace sagnac;

namespace {

LoopLayout uniform_loop(double length_km, double alpha_db, double eta,
                        std::vector<LossPoint> points = {}) {
  FiberSegment seg;
  seg.length_km = length_km;
  seg.alpha = Attenuation(alpha_db);
  seg.eta_per_s = eta;
  return build_layout({seg}, std::move(points), GroupVelocity(1.468));
}

}  // namespace

TEST_CASE("layout totals") {
  const LoopLayout smf = uniform_loop(20.0, 0.202, 8.0);
  CHECK(smf.length_km() == doctest::Approx(20.0));
  CHECK(total_loss(smf) == doctest::Approx(4.04));

  const LoopLayout ull = uniform_loop(200.0, 0.159, 6.54);
  CHECK(total_loss(ull) == doctest::Approx(31.8));

  const LoopLayout lossy = uniform_loop(20.0, 0.202, 8.0, {{5.0, 1.5}});
  CHECK(total_loss(lossy) == doctest::Approx(4.04 + 1.5));
}

TEST_CASE("transit time and horizon") {
  const LoopLayout ull = uniform_loop(200.0, 0.159, 6.54);
  const double v_g = 299792.458 / 1.468;
  CHECK(transit_time(ull) == doctest::Approx(200.0 / v_g).epsilon(1e-12));
  CHECK(transit_time(ull) == doctest::Approx(9.79345e-4).epsilon(1e-5));
  CHECK(backscatter_horizon_s(ull) == doctest::Approx(2.0 * transit_time(ull)));
}

TEST_CASE("transmittance and eta lookup") {
  const LoopLayout loop = uniform_loop(20.0, 0.202, 8.0, {{5.0, 3.0}});
  const double a_nat = 0.202 * std::log(10.0) / 10.0;
  CHECK(loop.eta_at(7.0, Direction::clockwise) == doctest::Approx(8.0));
  // Before the loss point only fiber attenuation applies.
  CHECK(loop.one_way_transmittance(4.0, Direction::clockwise) ==
        doctest::Approx(std::exp(-a_nat * 4.0)).epsilon(1e-12));
  // Past it the 3 dB component is included once.
  CHECK(loop.one_way_transmittance(6.0, Direction::clockwise) ==
        doctest::Approx(std::exp(-a_nat * 6.0) * std::pow(10.0, -0.3)).epsilon(1e-12));
  // Counterclockwise the point sits at 15 km from the entry port.
  CHECK(loop.one_way_transmittance(6.0, Direction::counterclockwise) ==
        doctest::Approx(std::exp(-a_nat * 6.0)).epsilon(1e-12));
}

TEST_CASE("impulse response anchors") {
  const LoopLayout smf = uniform_loop(20.0, 0.202, 8.0);
  const double horizon = backscatter_horizon_s(smf);
  const double dt = 1e-7;
  const auto n = static_cast<std::size_t>(std::ceil(horizon / dt)) + 2;
  const ImpulseResponse h = impulse_response(smf, Direction::clockwise, TimeGrid(0.0, dt, n));

  CHECK(h.values[0] == 8.0);  // eta at the entry, exactly

  // At t = 100 us the round trip has covered v_g * t of fiber.
  const double t = 100e-6;
  const double a_nat = 0.202 * std::log(10.0) / 10.0;
  const double v_g = 299792.458 / 1.468;
  const auto k = static_cast<std::size_t>(std::llround(t / dt));
  CHECK(h.values[k] == doctest::Approx(8.0 * std::exp(-a_nat * v_g * t)).epsilon(1e-12));
  CHECK(h.values[k] == doctest::Approx(3.094).epsilon(1e-3));

  // Beyond the horizon the response is zero.
  CHECK(h.values[n - 1] == 0.0);
}

TEST_CASE("impulse response grid must cover the horizon") {
  const LoopLayout smf = uniform_loop(20.0, 0.202, 8.0);
  CHECK_THROWS(impulse_response(smf, Direction::clockwise, TimeGrid(0.0, 1e-7, 100)));
}

TEST_CASE("loss point scales the tail by its round-trip factor") {
  const LoopLayout plain = uniform_loop(20.0, 0.202, 8.0);
  const double x_db = 2.0;
  const LoopLayout lossy = uniform_loop(20.0, 0.202, 8.0, {{5.0, x_db}});
  const double dt = 1e-8;
  const double horizon = backscatter_horizon_s(plain);
  const auto n = static_cast<std::size_t>(std::ceil(horizon / dt)) + 1;
  const TimeGrid grid(0.0, dt, n);
  const ImpulseResponse h0 = impulse_response(plain, Direction::clockwise, grid);
  const ImpulseResponse h1 = impulse_response(lossy, Direction::clockwise, grid);

  const double v_g = 299792.458 / 1.468;
  const double t_point = 2.0 * 5.0 / v_g;
  const double factor = std::pow(10.0, -2.0 * x_db / 10.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = grid.time(k);
    if (h0.values[k] == 0.0) continue;
    if (t < t_point - 2.0 * dt)
      CHECK(h1.values[k] == doctest::Approx(h0.values[k]).epsilon(1e-12));
    else if (t > t_point + 2.0 * dt)
      CHECK(h1.values[k] == doctest::Approx(h0.values[k] * factor).epsilon(1e-12));
  }
}

TEST_CASE("direction symmetry") {
  // A uniform ring looks the same from both ports.
  const LoopLayout plain = uniform_loop(50.0, 0.159, 6.54);
  const double dt = 1e-7;
  const auto n =
      static_cast<std::size_t>(std::ceil(backscatter_horizon_s(plain) / dt)) + 1;
  const TimeGrid grid(0.0, dt, n);
  const ImpulseResponse cw = impulse_response(plain, Direction::clockwise, grid);
  const ImpulseResponse ccw = impulse_response(plain, Direction::counterclockwise, grid);
  for (std::size_t k = 0; k < n; ++k)
    CHECK(cw.values[k] == doctest::Approx(ccw.values[k]).epsilon(1e-12));

  // With a loss point at z0, the reverse direction matches a mirrored layout.
  const LoopLayout at5 = uniform_loop(50.0, 0.159, 6.54, {{5.0, 1.0}});
  const LoopLayout at45 = uniform_loop(50.0, 0.159, 6.54, {{45.0, 1.0}});
  const ImpulseResponse rev = impulse_response(at5, Direction::counterclockwise, grid);
  const ImpulseResponse mir = impulse_response(at45, Direction::clockwise, grid);
  for (std::size_t k = 0; k < n; ++k)
    CHECK(rev.values[k] == doctest::Approx(mir.values[k]).epsilon(1e-12));
}
