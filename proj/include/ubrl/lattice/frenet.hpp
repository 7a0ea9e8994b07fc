#pragma once

#include <cmath>

#include "ubrl/common/geometry.hpp"
#include "ubrl/lattice/reference_path.hpp"

namespace ubrl::lattice {

/// Motion state in the path frame: lateral offset d (left positive) and arc position b.
struct FrenetState {
  double d = 0.0;
  double d_dot = 0.0;
  double d_ddot = 0.0;
  double b = 0.0;
  double b_dot = 0.0;
  double b_ddot = 0.0;
  double t = 0.0;

  friend bool operator==(const FrenetState&, const FrenetState&) = default;
};

/// World-frame pose with scalar speed and tangential acceleration.
struct WorldPose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double accel = 0.0;
};

inline WorldPose from_frenet(const FrenetState& f, const ReferencePath& path) {
  const PathPoint rp = path.at(f.b);
  const Vec2 pos = rp.position + f.d * left_normal(rp.heading);
  const double stretch = 1.0 - rp.curvature * f.d;
  const double v_tan = f.b_dot * stretch;
  const double speed = std::hypot(v_tan, f.d_dot);
  WorldPose out;
  out.x = pos.x;
  out.y = pos.y;
  out.heading = speed > 1e-9 ? wrap_angle(rp.heading + std::atan2(f.d_dot, v_tan)) : rp.heading;
  out.speed = speed;
  out.accel = speed > 1e-9 ? (f.b_ddot * stretch * v_tan + f.d_ddot * f.d_dot) / speed : f.b_ddot * stretch;
  return out;
}

/// Position and velocity invert `from_frenet` exactly; accelerations are the
/// first-order tangential decomposition.
inline FrenetState to_frenet(const WorldPose& w, const ReferencePath& path) {
  const auto proj = path.project({w.x, w.y});
  const PathPoint rp = path.at(proj.s);
  const double delta = wrap_angle(w.heading - rp.heading);
  const double stretch = 1.0 - rp.curvature * proj.d;
  FrenetState f;
  f.d = proj.d;
  f.b = proj.s;
  f.d_dot = w.speed * std::sin(delta);
  f.b_dot = w.speed * std::cos(delta) / stretch;
  f.d_ddot = w.accel * std::sin(delta);
  f.b_ddot = w.accel * std::cos(delta) / stretch;
  return f;
}

}  // namespace ubrl::lattice
