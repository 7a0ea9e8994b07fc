#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ubrl/common/error.hpp"
#include "ubrl/common/geometry.hpp"
#include "ubrl/env/scenario.hpp"
#include "ubrl/env/traffic.hpp"
#include "ubrl/env/world.hpp"
#include "ubrl/lattice/planner.hpp"

namespace ubrl::env {

inline constexpr double kContinuityTolerance = 1e-6;

/**
 * Kinematic T-junction simulator. The ego executes the chosen trajectory
 * exactly; agents follow their lanes with IDM and yield to a committed ego.
 * All state, including the RNG, lives in WorldState so the class itself is
 * immutable after construction.
 */
class Simulator {
 public:
  Simulator(ScenarioConfig scenario, lattice::PlannerConfig planner)
      : cfg_(std::move(scenario)), planner_(planner), geo_(build_geometry(cfg_)) {
    planner_.validate();
    if (std::abs(cfg_.dt - planner_.dt()) > 1e-12)
      throw ConfigError("scenario dt must equal 1 / planning_frequency");
    planner_.vehicle_length = cfg_.vehicle_length;
    planner_.vehicle_width = cfg_.vehicle_width;
  }

  const ScenarioConfig& config() const { return cfg_; }
  const lattice::PlannerConfig& planner() const { return planner_; }
  const Geometry& geometry() const { return geo_; }
  int action_count() const { return planner_.action_count(); }
  std::size_t observation_size() const { return 4 + 5 * static_cast<std::size_t>(cfg_.m_max); }

  WorldState reset() const { return reset(cfg_.seed); }

  /// Warms traffic up with the ego absent, then places the ego on the approach.
  WorldState reset(std::uint64_t seed) const {
    WorldState w;
    w.rng.seed(seed);
    w.ego_present = false;
    const int warmup = static_cast<int>(std::lround(cfg_.traffic.warmup_time / cfg_.dt));
    for (int k = 0; k < warmup; ++k) advance_agents(w, geo_, cfg_);
    w.ego_present = true;
    w.sim_time = 0.0;
    w.stop_timer = 0.0;
    w.step_index = 0;
    w.ego_frenet = lattice::FrenetState{0.0, 0.0, 0.0, cfg_.ego_start_s, cfg_.ego_initial_speed, 0.0, 0.0};
    w.ego = ego_from(w.ego_frenet);
    return w;
  }

  lattice::CandidateSet candidates(const WorldState& w) const {
    return lattice::sample_candidates(w.ego_frenet, planner_, geo_.ego_path);
  }

  std::vector<lattice::Obstacle> obstacles(const WorldState& w) const {
    std::vector<lattice::Obstacle> out;
    out.reserve(w.agents.size());
    for (const auto& a : w.agents) out.push_back({a.x, a.y, a.heading, a.speed, cfg_.vehicle_length, cfg_.vehicle_width});
    return out;
  }

  lattice::BaselineChoice baseline(const WorldState& w, const lattice::CandidateSet& set) const {
    return lattice::baseline_choice(set, obstacles(w), planner_);
  }

  int baseline_action(const WorldState& w) const { return baseline(w, candidates(w)).action; }

  StepOutcome step(const WorldState& w, const lattice::Trajectory& traj) const {
    if (traj.horizon + 1e-12 < cfg_.dt || traj.samples.size() < 2)
      throw MalformedAction("trajectory is shorter than one planning interval");
    check_continuity(w.ego_frenet, traj);

    StepOutcome out;
    out.next = w;
    WorldState& n = out.next;
    advance_agents(n, geo_, cfg_);

    lattice::FrenetState f = traj.state_at(cfg_.dt);
    f.t = 0.0;
    n.ego_frenet = f;
    n.ego = ego_from(f);
    n.sim_time = w.sim_time + cfg_.dt;
    n.step_index = w.step_index + 1;
    n.stop_timer = n.ego.speed < cfg_.v_stop ? w.stop_timer + cfg_.dt : 0.0;

    out.terminal = classify(n);
    switch (out.terminal) {
      case Terminal::collision: out.reward = cfg_.rewards.collision; break;
      case Terminal::success: out.reward = cfg_.rewards.success; break;
      case Terminal::stuck: out.reward = cfg_.rewards.stuck; break;
      default: out.reward = 0.0; break;
    }
    return out;
  }

  /// Flat state vector: ego block then m_max agent blocks, each entry in [-1, 1].
  std::vector<double> observe(const WorldState& w) const {
    std::vector<double> v(observation_size(), 0.0);
    const auto& b = geo_.bounds;
    v[0] = normalize(w.ego.x, b.x_min, b.x_max);
    v[1] = normalize(w.ego.y, b.y_min, b.y_max);
    v[2] = w.ego.heading / std::numbers::pi;
    v[3] = normalize(w.ego.speed, 0.0, cfg_.observation_speed_max);
    const std::size_t slots = std::min(w.agents.size(), static_cast<std::size_t>(cfg_.m_max));
    for (std::size_t i = 0; i < slots; ++i) {
      const auto& a = w.agents[i];
      double* s = v.data() + 4 + 5 * i;
      s[0] = normalize(a.x, b.x_min, b.x_max);
      s[1] = normalize(a.y, b.y_min, b.y_max);
      s[2] = a.heading / std::numbers::pi;
      s[3] = normalize(a.speed, 0.0, cfg_.observation_speed_max);
      s[4] = 1.0;
    }
    return v;
  }

  static double normalize(double value, double lo, double hi) {
    return std::clamp(2.0 * (value - lo) / (hi - lo) - 1.0, -1.0, 1.0);
  }

  OrientedBox ego_box(const WorldState& w) const {
    return {{w.ego.x, w.ego.y}, w.ego.heading, cfg_.vehicle_length, cfg_.vehicle_width};
  }

  bool ego_collides(const WorldState& w) const {
    const OrientedBox eb = ego_box(w);
    return std::any_of(w.agents.begin(), w.agents.end(), [&](const AgentState& a) {
      return overlaps(eb, {{a.x, a.y}, a.heading, cfg_.vehicle_length, cfg_.vehicle_width});
    });
  }

  /// Priority when several causes coincide: collision, success, stuck, timeout.
  Terminal classify(const WorldState& w) const {
    if (ego_collides(w)) return Terminal::collision;
    if (w.ego_frenet.b >= geo_.goal_s) return Terminal::success;
    if (w.stop_timer >= cfg_.stuck_time - 1e-9) return Terminal::stuck;
    if (w.sim_time >= cfg_.episode_timeout - 1e-9) return Terminal::timeout;
    return Terminal::none;
  }

 private:
  EgoState ego_from(const lattice::FrenetState& f) const {
    const auto p = lattice::from_frenet(f, geo_.ego_path);
    return {p.x, p.y, p.heading, p.speed, p.accel};
  }

  static void check_continuity(const lattice::FrenetState& ego, const lattice::Trajectory& traj) {
    const auto& s = traj.start;
    bool ok = std::abs(s.d - ego.d) <= kContinuityTolerance && std::abs(s.b - ego.b) <= kContinuityTolerance &&
              std::abs(s.b_dot - ego.b_dot) <= kContinuityTolerance;
    if (traj.kind == lattice::TrajectoryKind::candidate)
      ok = ok && std::abs(s.d_dot - ego.d_dot) <= kContinuityTolerance &&
           std::abs(s.d_ddot - ego.d_ddot) <= kContinuityTolerance &&
           std::abs(s.b_ddot - ego.b_ddot) <= kContinuityTolerance;
    if (!ok) throw MalformedAction("trajectory does not start at the ego's current state");
  }

  ScenarioConfig cfg_;
  lattice::PlannerConfig planner_;
  Geometry geo_;
};

}  // namespace ubrl::env
