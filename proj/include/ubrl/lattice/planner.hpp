#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "ubrl/common/error.hpp"
#include "ubrl/common/geometry.hpp"
#include "ubrl/lattice/polynomial.hpp"
#include "ubrl/lattice/reference_path.hpp"
#include "ubrl/lattice/trajectory.hpp"

namespace ubrl::lattice {

inline constexpr double kKmh = 1.0 / 3.6;

/// Baseline lattice planner parameters. Speeds are stored in m/s.
struct PlannerConfig {
  int n = 7;
  double max_width = 2.0;
  double max_speed = 30.0 * kKmh;
  double min_speed = 0.0;
  double t_end = 6.0;
  double k_j = 0.1;
  double k_t = 0.1;
  double k_p = 1.0;
  double planning_frequency = 10.0;

  int lateral_samples = 7;
  int speed_samples = 4;
  double brake_decel = 6.0;
  double vehicle_length = 4.5;
  double vehicle_width = 2.0;

  double dt() const { return 1.0 / planning_frequency; }
  int action_count() const { return n + 1; }
  int brake_action() const { return n; }

  void validate() const {
    if (n < 1) throw ConfigError("planner: n must be at least 1");
    if (lateral_samples < 1 || speed_samples < 1) throw ConfigError("planner: sample grid must be non-empty");
    if (n > lateral_samples * speed_samples) throw ConfigError("planner: n exceeds the end-state grid size");
    if (!(t_end > 0.0) || !(planning_frequency > 0.0)) throw ConfigError("planner: horizon and frequency must be positive");
    if (max_speed < min_speed || min_speed < 0.0) throw ConfigError("planner: invalid speed range");
    if (max_width < 0.0) throw ConfigError("planner: max_width must be non-negative");
    if (k_j < 0.0 || k_t < 0.0 || k_p < 0.0) throw ConfigError("planner: cost weights must be non-negative");
    if (!(brake_decel > 0.0)) throw ConfigError("planner: brake_decel must be positive");
  }
};

struct EndState {
  double d = 0.0;
  double speed = 0.0;
};

/// Deterministic grid of end states: laterals x speeds, truncated to n by
/// preferring small |d|, then higher speed, then negative side first.
inline std::vector<EndState> end_state_grid(const PlannerConfig& cfg) {
  cfg.validate();
  std::vector<EndState> all;
  for (int i = 0; i < cfg.lateral_samples; ++i) {
    const double d = cfg.lateral_samples == 1
                         ? 0.0
                         : -cfg.max_width + 2.0 * cfg.max_width * i / (cfg.lateral_samples - 1);
    for (int j = 0; j < cfg.speed_samples; ++j) {
      const double v = cfg.speed_samples == 1
                           ? cfg.max_speed
                           : cfg.min_speed + (cfg.max_speed - cfg.min_speed) * j / (cfg.speed_samples - 1);
      all.push_back({std::abs(d) < 1e-12 ? 0.0 : d, v});
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const EndState& a, const EndState& b) {
    const double ad = std::abs(a.d), bd = std::abs(b.d);
    if (std::abs(ad - bd) > 1e-12) return ad < bd;
    if (a.speed != b.speed) return a.speed > b.speed;
    return a.d < b.d;
  });
  all.resize(static_cast<std::size_t>(cfg.n));
  return all;
}

struct CostTerms {
  double jerk = 0.0;        ///< integral of squared jerk, lateral plus longitudinal
  double efficiency = 0.0;  ///< horizon plus squared shortfall of end speed below max_speed
  double follow = 0.0;      ///< squared terminal lateral offset
};

inline CostTerms cost_terms(const Trajectory& traj, const PlannerConfig& cfg) {
  CostTerms c;
  c.jerk = jerk_squared_integral(traj.lateral, traj.horizon) + jerk_squared_integral(traj.longitudinal, traj.horizon);
  const double shortfall = cfg.max_speed - traj.end_state.b_dot;
  c.efficiency = traj.horizon + shortfall * shortfall;
  c.follow = traj.end_state.d * traj.end_state.d;
  return c;
}

inline double cost(const Trajectory& traj, const PlannerConfig& cfg) {
  const CostTerms c = cost_terms(traj, cfg);
  return cfg.k_j * c.jerk + cfg.k_t * c.efficiency + cfg.k_p * c.follow;
}

inline Trajectory make_candidate(const FrenetState& current, EndState end, int index, const PlannerConfig& cfg,
                                 const ReferencePath& path) {
  Trajectory tr;
  tr.kind = TrajectoryKind::candidate;
  tr.action_index = index;
  tr.start = current;
  tr.start.t = 0.0;
  tr.horizon = cfg.t_end;
  tr.lateral = quintic_coeffs({current.d, current.d_dot, current.d_ddot}, {end.d, 0.0, 0.0}, cfg.t_end);
  tr.longitudinal =
      velocity_keeping_coeffs({current.b, current.b_dot, current.b_ddot}, end.speed, 0.0, cfg.t_end);
  tr.stop_time = detail::first_stop_time(tr.longitudinal, cfg.t_end);
  tr.end_state = FrenetState{end.d, 0.0, 0.0, evaluate(tr.longitudinal, cfg.t_end), end.speed, 0.0, cfg.t_end};
  sample_world(tr, path, cfg.dt());
  return tr;
}

/// Constant-deceleration stop along the geometric shape of `shape_of`.
inline Trajectory make_brake(const FrenetState& current, const Trajectory& shape_of, const PlannerConfig& cfg,
                             const ReferencePath& path) {
  Trajectory tr;
  tr.kind = TrajectoryKind::brake;
  tr.action_index = cfg.brake_action();
  tr.start = current;
  tr.start.t = 0.0;
  tr.horizon = cfg.t_end;
  tr.brake_decel = cfg.brake_decel;
  tr.lateral = shape_of.lateral;
  tr.longitudinal = {current.b, current.b_dot, 0.0, 0.0, 0.0, 0.0};

  constexpr int kShapeSteps = 300;
  double last_b = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= kShapeSteps; ++k) {
    const FrenetState s = shape_of.state_at(shape_of.horizon * k / kShapeSteps);
    if (s.b <= last_b) continue;
    const double slope = s.b_dot > 1e-6 ? s.d_dot / s.b_dot : 0.0;
    tr.shape.push_back({s.b, s.d, slope});
    last_b = s.b;
  }
  const FrenetState stop = tr.state_at(cfg.t_end);
  tr.end_state = FrenetState{stop.d, 0.0, 0.0, stop.b, 0.0, 0.0, cfg.t_end};
  sample_world(tr, path, cfg.dt());
  return tr;
}

/// Candidates (action indices 0..n-1) followed by the brake trajectory (index n).
struct CandidateSet {
  std::vector<Trajectory> candidates;
  std::vector<double> costs;
  Trajectory brake;
  int lowest_cost = 0;

  const Trajectory& action(int index) const {
    if (index == static_cast<int>(candidates.size())) return brake;
    if (index < 0 || index > static_cast<int>(candidates.size()))
      throw ContractViolation("action index out of range");
    return candidates[static_cast<std::size_t>(index)];
  }
  int action_count() const { return static_cast<int>(candidates.size()) + 1; }
};

/// Cheaper first; equal costs go to smaller |d_H|, then lower index.
inline bool cheaper(const CandidateSet& set, int a, int b) {
  const double ca = set.costs[static_cast<std::size_t>(a)], cb = set.costs[static_cast<std::size_t>(b)];
  if (ca != cb) return ca < cb;
  const double da = std::abs(set.candidates[static_cast<std::size_t>(a)].end_state.d);
  const double db = std::abs(set.candidates[static_cast<std::size_t>(b)].end_state.d);
  if (da != db) return da < db;
  return a < b;
}

inline CandidateSet sample_candidates(const FrenetState& current, const PlannerConfig& cfg,
                                      const ReferencePath& path) {
  const auto grid = end_state_grid(cfg);
  CandidateSet set;
  set.candidates.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    set.candidates.push_back(make_candidate(current, grid[i], static_cast<int>(i), cfg, path));
    set.costs.push_back(cost(set.candidates.back(), cfg));
  }
  for (int i = 1; i < cfg.n; ++i)
    if (cheaper(set, i, set.lowest_cost)) set.lowest_cost = i;
  set.brake = make_brake(current, set.candidates[static_cast<std::size_t>(set.lowest_cost)], cfg, path);
  return set;
}

/// Surrounding object as seen by the planner.
struct Obstacle {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double length = 4.5;
  double width = 2.0;

  /// Uniform straight-line prediction.
  OrientedBox predicted(double t) const {
    return {{x + speed * std::cos(heading) * t, y + speed * std::sin(heading) * t}, heading, length, width};
  }
};

/// True when the ego footprint along `traj` overlaps any predicted obstacle at a sample time.
inline bool collision_check(const Trajectory& traj, std::span<const Obstacle> obstacles, const PlannerConfig& cfg) {
  for (const auto& s : traj.samples) {
    const OrientedBox ego{{s.pose.x, s.pose.y}, s.pose.heading, cfg.vehicle_length, cfg.vehicle_width};
    for (const auto& ob : obstacles)
      if (overlaps(ego, ob.predicted(s.t))) return true;
  }
  return false;
}

struct BaselineChoice {
  int action = 0;
  std::vector<bool> collides;  ///< per candidate
};

/// Cheapest candidate that passes the collision check, else the brake action.
inline BaselineChoice baseline_choice(const CandidateSet& set, std::span<const Obstacle> obstacles,
                                      const PlannerConfig& cfg) {
  BaselineChoice out;
  out.action = static_cast<int>(set.candidates.size());
  out.collides.resize(set.candidates.size());
  int best = -1;
  for (std::size_t i = 0; i < set.candidates.size(); ++i) {
    out.collides[i] = collision_check(set.candidates[i], obstacles, cfg);
    if (out.collides[i]) continue;
    if (best < 0 || cheaper(set, static_cast<int>(i), best)) best = static_cast<int>(i);
  }
  if (best >= 0) out.action = best;
  return out;
}

}  // namespace ubrl::lattice
