#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "ubrl/common/error.hpp"
#include "ubrl/common/geometry.hpp"
#include "ubrl/lattice/reference_path.hpp"

namespace ubrl::env {

enum class RouteId : int { from_left = 0, from_right = 1 };
inline constexpr int kRouteCount = 2;

struct Rewards {
  double collision = 0.0;  ///< r_c
  double success = 1.0;    ///< r_p
  double stuck = 0.0;      ///< r_s
};

/// Ranges for the per-agent car-following parameters, sampled uniformly at spawn.
struct TrafficModel {
  std::array<double, 2> time_gap{1.0, 2.0};
  std::array<double, 2> comfort_decel{1.5, 3.0};
  double max_accel = 2.0;
  double min_gap = 2.0;
  double max_brake = 8.0;
  double spawn_min_gap = 15.0;
  double warmup_time = 20.0;
  /// Ego below this speed does not claim a conflict zone it has not entered yet.
  double claim_min_speed = 0.5;
};

/// T-junction layout. Optional polylines override the generated default.
struct GeometryConfig {
  double lane_width = 3.5;
  double approach_length = 40.0;
  double turn_radius = 7.0;
  double exit_length = 80.0;
  double route_half_length = 25.0;
  double goal_x = -20.0;
  double zone_margin = 0.5;
  std::optional<std::vector<Vec2>> ego_path;
  std::optional<std::vector<Vec2>> route_from_left;
  std::optional<std::vector<Vec2>> route_from_right;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  int m_max = 4;
  double spawn_rate = 1.0;  ///< arrivals per second per route
  std::array<double, 2> agent_speed_range{7.6, 8.9};
  double dt = 0.1;
  double episode_timeout = 60.0;
  double stuck_time = 5.0;
  double v_stop = 0.1;
  double ego_start_s = 10.0;
  double ego_initial_speed = 5.0;
  double observation_speed_max = 15.0;
  double vehicle_length = 4.5;
  double vehicle_width = 2.0;
  Rewards rewards;
  TrafficModel traffic;
  GeometryConfig geometry;

  void validate() const {
    if (m_max < 0) throw ConfigError("scenario: m_max must be non-negative");
    if (spawn_rate < 0.0) throw ConfigError("scenario: spawn_rate must be non-negative");
    if (agent_speed_range[0] <= 0.0 || agent_speed_range[1] < agent_speed_range[0])
      throw ConfigError("scenario: invalid agent_speed_range");
    if (!(dt > 0.0)) throw ConfigError("scenario: dt must be positive");
    if (!(episode_timeout > 0.0) || !(stuck_time > 0.0)) throw ConfigError("scenario: timeouts must be positive");
    if (geometry.lane_width <= 0.0 || geometry.turn_radius <= 0.0 || geometry.approach_length <= 0.0)
      throw ConfigError("scenario: geometry lengths must be positive");
    if (observation_speed_max <= 0.0) throw ConfigError("scenario: observation_speed_max must be positive");
  }
};

/// Interval pair where the ego path and one route come within a footprint of each other.
struct ConflictZone {
  double ego_in = 0.0;     ///< ego path arc length where the overlap starts
  double ego_out = 0.0;
  double route_in = 0.0;   ///< agent route progress (vehicle centre) where the overlap starts
  double route_out = 0.0;
};

struct Bounds {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
};

struct Geometry {
  lattice::ReferencePath ego_path;
  std::array<lattice::ReferencePath, kRouteCount> routes;
  std::array<ConflictZone, kRouteCount> zones;
  Bounds bounds;
  double goal_s = 0.0;
  double lane_width = 3.5;
};

namespace detail {

inline Bounds bounds_of(const std::vector<const lattice::ReferencePath*>& paths, double pad) {
  Bounds b{1e300, -1e300, 1e300, -1e300};
  for (const auto* p : paths)
    for (const Vec2 v : p->points()) {
      b.x_min = std::min(b.x_min, v.x);
      b.x_max = std::max(b.x_max, v.x);
      b.y_min = std::min(b.y_min, v.y);
      b.y_max = std::max(b.y_max, v.y);
    }
  b.x_min -= pad;
  b.x_max += pad;
  b.y_min -= pad;
  b.y_max += pad;
  return b;
}

inline std::optional<ConflictZone> conflict_zone(const lattice::ReferencePath& ego, const lattice::ReferencePath& route,
                                                 double length, double width, double margin) {
  constexpr double kStep = 0.25;
  ConflictZone z{1e300, -1e300, 1e300, -1e300};
  bool any = false;
  std::vector<OrientedBox> route_boxes;
  std::vector<double> route_s;
  for (double s = 0.0; s <= route.length(); s += kStep) {
    const auto rp = route.at(s);
    route_boxes.push_back({rp.position, rp.heading, length + 2 * margin, width + 2 * margin});
    route_s.push_back(s);
  }
  for (double s = 0.0; s <= ego.length(); s += kStep) {
    const auto ep = ego.at(s);
    const OrientedBox eb{ep.position, ep.heading, length, width};
    for (std::size_t j = 0; j < route_boxes.size(); ++j) {
      if (!overlaps(eb, route_boxes[j])) continue;
      any = true;
      z.ego_in = std::min(z.ego_in, s);
      z.ego_out = std::max(z.ego_out, s);
      z.route_in = std::min(z.route_in, route_s[j]);
      z.route_out = std::max(z.route_out, route_s[j]);
    }
  }
  if (!any) return std::nullopt;
  return z;
}

}  // namespace detail

/// Builds the junction and checks that the ego path actually crosses both routes.
inline Geometry build_geometry(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto& g = cfg.geometry;
  Geometry geo;
  geo.lane_width = g.lane_width;
  const double half = 0.5 * g.lane_width;

  if (g.ego_path) {
    geo.ego_path = lattice::ReferencePath::densified(*g.ego_path);
  } else {
    const double straight = g.approach_length + (half - g.turn_radius);
    if (straight <= 0.0) throw ConfigError("scenario: approach too short for the turn radius");
    geo.ego_path = lattice::PathBuilder({half, -g.approach_length}, std::numbers::pi / 2)
                       .straight(straight)
                       .arc(g.turn_radius, std::numbers::pi / 2)
                       .straight(g.exit_length)
                       .build();
  }
  const double r = g.route_half_length;
  geo.routes[0] = g.route_from_left ? lattice::ReferencePath::densified(*g.route_from_left)
                                    : lattice::ReferencePath::densified({{-r, -half}, {r, -half}});
  geo.routes[1] = g.route_from_right ? lattice::ReferencePath::densified(*g.route_from_right)
                                     : lattice::ReferencePath::densified({{r, half}, {-r, half}});

  for (int k = 0; k < kRouteCount; ++k) {
    auto z = detail::conflict_zone(geo.ego_path, geo.routes[static_cast<std::size_t>(k)], cfg.vehicle_length,
                                   cfg.vehicle_width, g.zone_margin);
    if (!z) throw ConfigError("scenario: ego path does not intersect route " + std::to_string(k));
    geo.zones[static_cast<std::size_t>(k)] = *z;
  }

  // Goal line: first ego-path sample at or beyond goal_x on the exit leg.
  geo.goal_s = -1.0;
  const auto& pts = geo.ego_path.points();
  for (std::size_t i = pts.size(); i-- > 0;) {
    if (pts[i].x > g.goal_x) {
      if (i + 1 < pts.size()) geo.goal_s = geo.ego_path.arc_lengths()[i + 1];
      break;
    }
  }
  if (geo.goal_s <= cfg.ego_start_s) throw ConfigError("scenario: goal line is not ahead of the ego start");

  geo.bounds = detail::bounds_of({&geo.routes[0], &geo.routes[1]}, 0.0);
  const auto ego_b = detail::bounds_of({&geo.ego_path}, 0.0);
  geo.bounds.y_min = std::min(geo.bounds.y_min - half, ego_b.y_min);
  geo.bounds.y_max = std::max(geo.bounds.y_max + half, geo.bounds.y_max);
  return geo;
}

}  // namespace ubrl::env
