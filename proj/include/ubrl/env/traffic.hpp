#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "ubrl/common/rng.hpp"
#include "ubrl/env/scenario.hpp"
#include "ubrl/env/world.hpp"

namespace ubrl::env {

/// Intelligent Driver Model acceleration. `gap` is bumper-to-bumper distance to
/// the leader (infinite for free road), `closing` is own speed minus leader speed.
inline double idm_accel(double v, double gap, double closing, const IdmParams& p, const TrafficModel& m) {
  const double free_term = 1.0 - std::pow(v / p.desired_speed, 4);
  double interaction = 0.0;
  if (std::isfinite(gap)) {
    const double s_star =
        m.min_gap + std::max(0.0, v * p.time_gap + v * closing / (2.0 * std::sqrt(m.max_accel * p.comfort_decel)));
    const double g = std::max(gap, 0.1);
    interaction = (s_star / g) * (s_star / g);
  }
  return std::clamp(m.max_accel * (free_term - interaction), -m.max_brake, m.max_accel);
}

/// What one route's agents need to know about the ego this step.
struct EgoClaim {
  bool in_lane = false;        ///< ego footprint lies across or along this lane
  double lane_progress = 0.0;  ///< ego centre projected on the route
  double along_speed = 0.0;    ///< ego velocity component along the route
  bool occupies_zone = false;
  std::optional<double> eta;   ///< seconds until the ego reaches the conflict zone
};

inline EgoClaim ego_claim(const WorldState& w, const Geometry& geo, int route, const ScenarioConfig& cfg) {
  EgoClaim c;
  if (!w.ego_present) return c;
  const auto& path = geo.routes[static_cast<std::size_t>(route)];
  const auto& zone = geo.zones[static_cast<std::size_t>(route)];
  const double reach = 0.5 * geo.lane_width + 0.5 * cfg.vehicle_length;
  if (const auto proj = path.try_project({w.ego.x, w.ego.y}, reach)) {
    c.in_lane = true;
    c.lane_progress = proj->s;
    c.along_speed = w.ego.speed * std::cos(wrap_angle(w.ego.heading - path.at(proj->s).heading));
  }
  const double s_e = w.ego_frenet.b;
  c.occupies_zone = s_e >= zone.ego_in && s_e <= zone.ego_out;
  if (s_e < zone.ego_in && w.ego.speed >= cfg.traffic.claim_min_speed)
    c.eta = (zone.ego_in - s_e) / w.ego.speed;
  return c;
}

/// Longitudinal command for one agent given its same-lane leader and the ego.
inline double agent_command(const AgentState& a, const AgentState* leader, const EgoClaim& claim, const ConflictZone& zone,
                            const ScenarioConfig& cfg) {
  const auto& m = cfg.traffic;
  const double len = cfg.vehicle_length;
  double acc = idm_accel(a.speed, std::numeric_limits<double>::infinity(), 0.0, a.idm, m);
  auto follow = [&](double gap, double leader_speed) {
    acc = std::min(acc, idm_accel(a.speed, gap, a.speed - leader_speed, a.idm, m));
  };
  if (leader) follow(leader->progress - a.progress - len, leader->speed);

  if (claim.in_lane && claim.lane_progress > a.progress) {
    follow(claim.lane_progress - a.progress - len, std::max(0.0, claim.along_speed));
  } else if (a.progress < zone.route_in) {
    const double to_zone = zone.route_in - a.progress;
    bool yield = claim.occupies_zone;
    if (!yield && claim.eta) {
      const double stop_dist = a.speed * a.speed / (2.0 * m.max_brake);
      yield = *claim.eta <= a.idm.time_gap && stop_dist <= to_zone;
    }
    if (yield) follow(to_zone, 0.0);
  }
  return acc;
}

/// Advances every agent one step, removes agents past their route end and
/// spawns new ones. Agents stay sorted by (route, progress).
inline void advance_agents(WorldState& w, const Geometry& geo, const ScenarioConfig& cfg) {
  const double dt = cfg.dt;
  std::array<EgoClaim, kRouteCount> claims;
  for (int r = 0; r < kRouteCount; ++r) claims[static_cast<std::size_t>(r)] = ego_claim(w, geo, r, cfg);

  std::vector<double> accel(w.agents.size());
  for (std::size_t i = 0; i < w.agents.size(); ++i) {
    const auto& a = w.agents[i];
    const AgentState* leader = nullptr;
    if (i + 1 < w.agents.size() && w.agents[i + 1].route_id == a.route_id) leader = &w.agents[i + 1];
    const auto r = static_cast<std::size_t>(a.route_id);
    accel[i] = agent_command(a, leader, claims[r], geo.zones[r], cfg);
  }
  for (std::size_t i = 0; i < w.agents.size(); ++i) {
    auto& a = w.agents[i];
    const double v1 = a.speed + accel[i] * dt;
    if (v1 >= 0.0) {
      a.progress += 0.5 * (a.speed + v1) * dt;
      a.speed = v1;
    } else {
      a.progress += 0.5 * a.speed * (a.speed / -accel[i]);
      a.speed = 0.0;
    }
    a.accel = accel[i];
    const auto pp = geo.routes[static_cast<std::size_t>(a.route_id)].at(a.progress);
    a.x = pp.position.x;
    a.y = pp.position.y;
    a.heading = pp.heading;
  }
  std::erase_if(w.agents, [&](const AgentState& a) {
    return a.progress > geo.routes[static_cast<std::size_t>(a.route_id)].length();
  });

  const int per_route_cap = cfg.m_max / kRouteCount + (cfg.m_max % kRouteCount);
  const double p_spawn = 1.0 - std::exp(-cfg.spawn_rate * dt);
  for (int r = 0; r < kRouteCount; ++r) {
    if (!bernoulli(w.rng, p_spawn)) continue;
    const auto route = static_cast<RouteId>(r);
    int on_route = 0;
    const AgentState* last = nullptr;
    for (const auto& a : w.agents)
      if (a.route_id == route) {
        ++on_route;
        if (!last || a.progress < last->progress) last = &a;
      }
    if (on_route >= per_route_cap || static_cast<int>(w.agents.size()) >= cfg.m_max) continue;
    if (last && last->progress < cfg.traffic.spawn_min_gap) continue;

    AgentState a;
    a.route_id = route;
    a.progress = 0.0;
    a.idm.desired_speed = uniform(w.rng, cfg.agent_speed_range[0], cfg.agent_speed_range[1]);
    a.idm.time_gap = uniform(w.rng, cfg.traffic.time_gap[0], cfg.traffic.time_gap[1]);
    a.idm.comfort_decel = uniform(w.rng, cfg.traffic.comfort_decel[0], cfg.traffic.comfort_decel[1]);
    a.speed = a.idm.desired_speed;
    if (last) {
      const double room = std::max(0.0, last->progress - cfg.vehicle_length - cfg.traffic.min_gap);
      a.speed = std::min(a.speed, last->speed + std::sqrt(cfg.traffic.max_brake * room));
    }
    const auto pp = geo.routes[static_cast<std::size_t>(r)].at(0.0);
    a.x = pp.position.x;
    a.y = pp.position.y;
    a.heading = pp.heading;
    a.id = w.next_agent_id++;
    w.agents.push_back(a);
  }
  std::stable_sort(w.agents.begin(), w.agents.end(), [](const AgentState& a, const AgentState& b) {
    if (a.route_id != b.route_id) return a.route_id < b.route_id;
    return a.progress < b.progress;
  });
}

}  // namespace ubrl::env
