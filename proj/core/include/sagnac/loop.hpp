#pragma once

#include <string>
#include <vector>

#include "sagnac/units.hpp"

namespace sagnac {

struct FiberSegment {
  double length_km = 0.0;
  Attenuation alpha;
  double eta_per_s = 0.0;  // backscatter power at t=0 per unit pulse energy
  std::string label;
};

struct LossPoint {
  double position_km = 0.0;  // arc length from the reference port, clockwise
  double loss_db = 0.0;
};

enum class Direction { clockwise, counterclockwise };

/// The Sagnac ring: ordered fiber segments plus discrete lossy components,
/// with positions in clockwise arc-length coordinates.
class LoopLayout {
 public:
  LoopLayout(std::vector<FiberSegment> segments, std::vector<LossPoint> loss_points,
             GroupVelocity group);

  double length_km() const { return length_km_; }
  double total_loss_db() const;
  double transit_time_s() const { return length_km_ / group_.km_per_s(); }
  const GroupVelocity& group() const { return group_; }
  const std::vector<FiberSegment>& segments() const { return segments_; }
  const std::vector<LossPoint>& loss_points() const { return loss_points_; }

  /// Backscatter coefficient of the segment containing arc position z,
  /// measured from the entry port in the given direction.
  double eta_at(double z_km, Direction dir) const;

  /// One-way power transmittance from the entry port to arc position z,
  /// including fiber attenuation and discrete loss points passed.
  double one_way_transmittance(double z_km, Direction dir) const;

 private:
  double clockwise_position(double z_km, Direction dir) const;

  std::vector<FiberSegment> segments_;
  std::vector<LossPoint> loss_points_;  // sorted by position
  GroupVelocity group_;
  double length_km_ = 0.0;
  std::vector<double> cum_length_km_;   // segment end positions
  std::vector<double> cum_alpha_nat_;   // natural attenuation up to segment end
};

LoopLayout build_layout(std::vector<FiberSegment> segments,
                        std::vector<LossPoint> loss_points, GroupVelocity group);

double total_loss(const LoopLayout& layout);
double transit_time(const LoopLayout& layout);

struct ImpulseResponse {
  TimeGrid grid;
  std::vector<double> values;  // 1/s, backscatter power per unit input pulse energy
  Direction direction = Direction::clockwise;
};

/// Samples the round-trip backscatter density on the grid. The grid must
/// cover the horizon [0, 2L/v_g]; light re-entering the loop after a full
/// transit is ignored.
ImpulseResponse impulse_response(const LoopLayout& layout, Direction direction,
                                 const TimeGrid& grid);

/// Round-trip backscatter horizon 2L/v_g in seconds.
double backscatter_horizon_s(const LoopLayout& layout);

}  // namespace sagnac
