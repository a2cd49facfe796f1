#include "sagnac/loop.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sagnac {

LoopLayout::LoopLayout(std::vector<FiberSegment> segments,
                       std::vector<LossPoint> loss_points, GroupVelocity group)
    : segments_(std::move(segments)), loss_points_(std::move(loss_points)), group_(group) {
  if (segments_.empty())
    throw std::invalid_argument("LoopLayout: segment list must be non-empty");
  cum_length_km_.reserve(segments_.size());
  cum_alpha_nat_.reserve(segments_.size());
  double len = 0.0;
  double att = 0.0;
  for (const auto& seg : segments_) {
    if (!(seg.length_km > 0.0))
      throw std::invalid_argument("LoopLayout: segment length must be > 0");
    if (seg.eta_per_s < 0.0)
      throw std::invalid_argument("LoopLayout: eta must be >= 0");
    len += seg.length_km;
    att += seg.alpha.per_km_natural() * seg.length_km;
    cum_length_km_.push_back(len);
    cum_alpha_nat_.push_back(att);
  }
  length_km_ = len;
  for (const auto& lp : loss_points_) {
    if (lp.position_km < 0.0 || lp.position_km > length_km_)
      throw std::invalid_argument("LoopLayout: loss point outside [0, L]");
    if (lp.loss_db < 0.0)
      throw std::invalid_argument("LoopLayout: loss must be >= 0 dB");
  }
  std::sort(loss_points_.begin(), loss_points_.end(),
            [](const LossPoint& a, const LossPoint& b) { return a.position_km < b.position_km; });
}

double LoopLayout::total_loss_db() const {
  double db = 0.0;
  for (const auto& seg : segments_) db += seg.alpha.db_per_km * seg.length_km;
  for (const auto& lp : loss_points_) db += lp.loss_db;
  return db;
}

double LoopLayout::clockwise_position(double z_km, Direction dir) const {
  return dir == Direction::clockwise ? z_km : length_km_ - z_km;
}

double LoopLayout::eta_at(double z_km, Direction dir) const {
  const double pos = std::clamp(clockwise_position(z_km, dir), 0.0, length_km_);
  auto it = std::lower_bound(cum_length_km_.begin(), cum_length_km_.end(), pos);
  std::size_t idx = static_cast<std::size_t>(it - cum_length_km_.begin());
  if (idx >= segments_.size()) idx = segments_.size() - 1;
  return segments_[idx].eta_per_s;
}

double LoopLayout::one_way_transmittance(double z_km, Direction dir) const {
  const double z = std::clamp(z_km, 0.0, length_km_);
  // Fiber attenuation accumulated over [entry, z) in the travel direction.
  const double pos = clockwise_position(z, dir);
  auto it = std::lower_bound(cum_length_km_.begin(), cum_length_km_.end(), pos);
  std::size_t idx = static_cast<std::size_t>(it - cum_length_km_.begin());
  if (idx >= segments_.size()) idx = segments_.size() - 1;
  const double seg_start = idx == 0 ? 0.0 : cum_length_km_[idx - 1];
  const double att_start = idx == 0 ? 0.0 : cum_alpha_nat_[idx - 1];
  double alpha_cw = att_start + segments_[idx].alpha.per_km_natural() * (pos - seg_start);
  double alpha_nat;
  if (dir == Direction::clockwise) {
    alpha_nat = alpha_cw;
  } else {
    alpha_nat = cum_alpha_nat_.back() - alpha_cw;
  }
  double loss_db = 0.0;
  for (const auto& lp : loss_points_) {
    const bool passed = dir == Direction::clockwise ? lp.position_km < z
                                                    : lp.position_km > length_km_ - z;
    if (passed) loss_db += lp.loss_db;
  }
  return std::exp(-alpha_nat) * std::pow(10.0, -loss_db / 10.0);
}

LoopLayout build_layout(std::vector<FiberSegment> segments,
                        std::vector<LossPoint> loss_points, GroupVelocity group) {
  return LoopLayout(std::move(segments), std::move(loss_points), group);
}

double total_loss(const LoopLayout& layout) { return layout.total_loss_db(); }

double transit_time(const LoopLayout& layout) { return layout.transit_time_s(); }

double backscatter_horizon_s(const LoopLayout& layout) {
  return 2.0 * layout.length_km() / layout.group().km_per_s();
}

ImpulseResponse impulse_response(const LoopLayout& layout, Direction direction,
                                 const TimeGrid& grid) {
  const double horizon = backscatter_horizon_s(layout);
  if (grid.t0 > 0.0 || grid.time(grid.n - 1) + grid.dt < horizon)
    throw std::invalid_argument(
        "impulse_response: grid must cover the round-trip horizon [0, 2L/v_g]");
  const double v_g = layout.group().km_per_s();
  ImpulseResponse resp{grid, std::vector<double>(grid.n, 0.0), direction};
  for (std::size_t k = 0; k < grid.n; ++k) {
    const double t = grid.time(k);
    if (t < 0.0 || t > horizon) continue;
    const double z = 0.5 * v_g * t;  // scatter origin, arc distance from entry
    const double a = layout.one_way_transmittance(z, direction);
    resp.values[k] = layout.eta_at(z, direction) * a * a;
  }
  return resp;
}

}  // namespace sagnac
