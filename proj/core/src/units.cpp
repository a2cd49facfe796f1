#include "sagnac/units.hpp"

namespace sagnac {

double db_to_linear(double db) {
  if (!std::isfinite(db)) throw std::invalid_argument("db_to_linear: non-finite input");
  return std::pow(10.0, db / 10.0);
}

double linear_to_db(double ratio) {
  if (!std::isfinite(ratio) || ratio <= 0.0)
    throw std::invalid_argument("linear_to_db: ratio must be finite and > 0");
  return 10.0 * std::log10(ratio);
}

double dbm_to_watts(double dbm) { return db_to_linear(dbm) * 1e-3; }

double watts_to_dbm(double watts) { return linear_to_db(watts / 1e-3); }

double attenuation_natural(double alpha_db_per_km) {
  if (!std::isfinite(alpha_db_per_km) || alpha_db_per_km < 0.0)
    throw std::invalid_argument("attenuation_natural: alpha must be finite and >= 0");
  return alpha_db_per_km * std::log(10.0) / 10.0;
}

double group_velocity(double group_index) {
  if (!(group_index > 1.0) || !(group_index < 2.0))
    throw std::invalid_argument("group_velocity: group index must be in (1, 2)");
  return kSpeedOfLightKmPerS / group_index;
}

}  // namespace sagnac
