#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ubrl/lattice/frenet.hpp"
#include "ubrl/lattice/polynomial.hpp"
#include "ubrl/lattice/reference_path.hpp"

namespace ubrl::lattice {

enum class TrajectoryKind { candidate, brake };

struct TrajectorySample {
  double t = 0.0;
  FrenetState frenet;
  WorldPose pose;
};

/**
 * One element of the action set: a timed motion in the path frame plus its
 * world-frame samples at the planning interval.
 *
 * Candidates are a lateral quintic and a longitudinal velocity-keeping quartic.
 * Vehicles never reverse: if the longitudinal velocity would cross zero, the
 * motion holds position from that instant (`stop_time`).
 *
 * The brake trajectory decelerates at a constant rate to standstill while
 * following the geometric shape d(b) of the cheapest candidate.
 */
struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::candidate;
  int action_index = 0;
  FrenetState start;
  FrenetState end_state;
  Poly5 lateral{};
  Poly5 longitudinal{};
  double horizon = 0.0;
  double stop_time = std::numeric_limits<double>::infinity();
  double brake_decel = 0.0;
  /// Brake only: (b, d, dd/db) along the borrowed candidate shape, b non-decreasing.
  std::vector<std::array<double, 3>> shape;
  std::vector<TrajectorySample> samples;

  FrenetState state_at(double t) const {
    FrenetState f;
    f.t = t;
    if (kind == TrajectoryKind::candidate) {
      const double tl = std::min(t, horizon);
      f.d = evaluate(lateral, tl, 0);
      f.d_dot = evaluate(lateral, tl, 1);
      f.d_ddot = evaluate(lateral, tl, 2);
      const double tb = std::min(tl, stop_time);
      f.b = evaluate(longitudinal, tb, 0);
      if (tl < stop_time) {
        f.b_dot = evaluate(longitudinal, tb, 1);
        f.b_ddot = evaluate(longitudinal, tb, 2);
      }
      return f;
    }
    const double v0 = start.b_dot;
    const double ts = brake_decel > 0.0 ? v0 / brake_decel : 0.0;
    const double tb = std::min(t, ts);
    f.b = start.b + v0 * tb - 0.5 * brake_decel * tb * tb;
    f.b_dot = t < ts ? v0 - brake_decel * t : 0.0;
    f.b_ddot = t < ts ? -brake_decel : 0.0;
    const auto [d, slope] = shape_at(f.b);
    f.d = d;
    f.d_dot = slope * f.b_dot;
    f.d_ddot = slope * f.b_ddot;
    return f;
  }

  double end_speed() const { return end_state.b_dot; }

 private:
  std::pair<double, double> shape_at(double b) const {
    if (shape.empty()) return {start.d, 0.0};
    if (b <= shape.front()[0]) return {shape.front()[1], shape.front()[2]};
    if (b >= shape.back()[0]) return {shape.back()[1], 0.0};
    auto it = std::upper_bound(shape.begin(), shape.end(), b,
                               [](double v, const std::array<double, 3>& e) { return v < e[0]; });
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double span = hi[0] - lo[0];
    const double u = span > 0.0 ? (b - lo[0]) / span : 0.0;
    return {lo[1] + u * (hi[1] - lo[1]), lo[2] + u * (hi[2] - lo[2])};
  }
};

namespace detail {

/// First time in [0, T] where velocity of `c` drops below zero, or +inf.
inline double first_stop_time(const Poly5& c, double T) {
  std::vector<double> breaks{0.0};
  if (c[5] == 0.0) {
    // acceleration 2c2 + 6c3 t + 12c4 t^2: velocity is monotone between its roots.
    const double qa = 12.0 * c[4], qb = 6.0 * c[3], qc = 2.0 * c[2];
    if (qa == 0.0) {
      if (qb != 0.0) breaks.push_back(-qc / qb);
    } else {
      const double disc = qb * qb - 4.0 * qa * qc;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        breaks.push_back((-qb - sq) / (2.0 * qa));
        breaks.push_back((-qb + sq) / (2.0 * qa));
      }
    }
  } else {
    for (int k = 1; k < 200; ++k) breaks.push_back(T * k / 200.0);
  }
  breaks.push_back(T);
  std::erase_if(breaks, [T](double x) { return !(x >= 0.0 && x <= T); });
  std::sort(breaks.begin(), breaks.end());

  if (evaluate(c, 0.0, 1) < 0.0) return 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    double lo = breaks[i], hi = breaks[i + 1];
    if (evaluate(c, hi, 1) >= 0.0) continue;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (evaluate(c, mid, 1) >= 0.0)
        lo = mid;
      else
        hi = mid;
    }
    return lo;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Fills world samples at `dt` from t = 0 to the horizon inclusive.
inline void sample_world(Trajectory& traj, const ReferencePath& path, double dt) {
  const int steps = static_cast<int>(std::lround(traj.horizon / dt));
  traj.samples.clear();
  traj.samples.reserve(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) {
    TrajectorySample s;
    s.t = k * dt;
    s.frenet = traj.state_at(s.t);
    s.pose = from_frenet(s.frenet, path);
    traj.samples.push_back(s);
  }
}

}  // namespace ubrl::lattice
