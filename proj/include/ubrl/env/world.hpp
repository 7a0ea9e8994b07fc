#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "ubrl/common/rng.hpp"
#include "ubrl/env/scenario.hpp"
#include "ubrl/lattice/frenet.hpp"

namespace ubrl::env {

struct EgoState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double accel = 0.0;

  friend bool operator==(const EgoState&, const EgoState&) = default;
};

struct IdmParams {
  double desired_speed = 10.0;
  double time_gap = 1.5;
  double comfort_decel = 2.0;

  friend bool operator==(const IdmParams&, const IdmParams&) = default;
};

struct AgentState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  RouteId route_id = RouteId::from_left;
  double progress = 0.0;  ///< arc length of the vehicle centre along its route
  double accel = 0.0;
  IdmParams idm;
  std::uint64_t id = 0;

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct WorldState {
  EgoState ego;
  lattice::FrenetState ego_frenet;  ///< planner continuity state on the ego path
  std::vector<AgentState> agents;   ///< sorted by (route_id, progress)
  double sim_time = 0.0;
  double stop_timer = 0.0;
  std::uint64_t step_index = 0;
  std::uint64_t next_agent_id = 0;
  bool ego_present = true;
  Rng rng;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

enum class Terminal { none, success, collision, stuck, timeout };

inline std::string_view to_string(Terminal t) {
  switch (t) {
    case Terminal::none: return "none";
    case Terminal::success: return "success";
    case Terminal::collision: return "collision";
    case Terminal::stuck: return "stuck";
    case Terminal::timeout: return "timeout";
  }
  return "none";
}

inline Terminal terminal_from_string(std::string_view s) {
  for (Terminal t : {Terminal::none, Terminal::success, Terminal::collision, Terminal::stuck, Terminal::timeout})
    if (to_string(t) == s) return t;
  throw ConfigError("unknown terminal kind: " + std::string(s));
}

/// Timeout ends the episode but is a truncation, not an absorbing state.
inline bool is_absorbing(Terminal t) {
  return t == Terminal::success || t == Terminal::collision || t == Terminal::stuck;
}

struct StepOutcome {
  WorldState next;
  double reward = 0.0;
  Terminal terminal = Terminal::none;
};

}  // namespace ubrl::env
