#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace sagnac {

inline constexpr double kSpeedOfLightKmPerS = 299792.458;
inline constexpr double kPlanckJs = 6.62607015e-34;
inline constexpr double kDefaultWavelengthM = 1545.3e-9;

/// Energy of one photon at the given vacuum wavelength.
inline double photon_energy_j(double wavelength_m = kDefaultWavelengthM) {
  if (!(wavelength_m > 0.0))
    throw std::invalid_argument("photon_energy_j: wavelength must be > 0");
  return kPlanckJs * (kSpeedOfLightKmPerS * 1e3) / wavelength_m;
}

double db_to_linear(double db);
double linear_to_db(double ratio);
double dbm_to_watts(double dbm);
double watts_to_dbm(double watts);

/// Natural (1/km) attenuation from a dB/km coefficient.
double attenuation_natural(double alpha_db_per_km);

/// Group velocity in km/s for a group index in (1, 2).
double group_velocity(double group_index);

/// Fiber attenuation coefficient. Stored in dB/km, converted to natural
/// units (1/km) where exponentials are evaluated.
struct Attenuation {
  double db_per_km = 0.0;

  Attenuation() = default;
  explicit Attenuation(double db_km) : db_per_km(db_km) {
    if (!(db_km >= 0.0) || !std::isfinite(db_km))
      throw std::invalid_argument("Attenuation: dB/km must be finite and >= 0");
  }
  double per_km_natural() const { return attenuation_natural(db_per_km); }
};

struct GroupVelocity {
  double index = 1.468;

  GroupVelocity() = default;
  explicit GroupVelocity(double n_g) : index(n_g) {
    if (!(n_g > 1.0) || !(n_g < 2.0))
      throw std::invalid_argument("GroupVelocity: group index must be in (1, 2)");
  }
  double km_per_s() const { return kSpeedOfLightKmPerS / index; }
};

struct OpticalPower {
  double watts = 0.0;

  OpticalPower() = default;
  explicit OpticalPower(double w) : watts(w) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("OpticalPower: watts must be finite and >= 0");
  }
  static OpticalPower from_dbm(double dbm) { return OpticalPower(dbm_to_watts(dbm)); }
  double dbm() const { return watts_to_dbm(watts); }
};

/// Uniform sample grid: times are t0 + k*dt for k in [0, n).
struct TimeGrid {
  double t0 = 0.0;
  double dt = 1e-9;
  std::size_t n = 1;

  TimeGrid() = default;
  TimeGrid(double t0_, double dt_, std::size_t n_) : t0(t0_), dt(dt_), n(n_) {
    if (!(dt > 0.0)) throw std::invalid_argument("TimeGrid: dt must be > 0");
    if (n < 1) throw std::invalid_argument("TimeGrid: n must be >= 1");
  }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
  double span() const { return static_cast<double>(n) * dt; }
};

}  // namespace sagnac
