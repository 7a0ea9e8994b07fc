#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "ubrl/agent/gating.hpp"
#include "ubrl/env/scenario.hpp"
#include "ubrl/lattice/planner.hpp"
#include "ubrl/replay/prioritized_buffer.hpp"
#include "ubrl/valuenet/ensemble.hpp"

namespace ubrl::agent {

using nlohmann::json;

struct RunSettings {
  std::uint64_t total_steps = 300000;
  std::uint64_t checkpoint_every = 40000;
  std::uint64_t learning_starts = 1000;
  int eval_episodes = 200;
  bool timeout_counts_as_stuck = true;
  double divergence_limit = 1e3;
};

/// Everything a run depends on. One master seed feeds every random stream.
struct RunConfig {
  std::uint64_t seed = 1;
  env::ScenarioConfig scenario;
  lattice::PlannerConfig planner;
  valuenet::TrainConfig train;
  replay::ReplayConfig replay;
  double p_thres = 0.4;
  std::uint64_t n_thres = 40;
  RunSettings run;

  GateConfig gate() const { return {p_thres, n_thres, train.sigma_thres, train.k_e}; }

  void validate() const {
    scenario.validate();
    planner.validate();
    train.validate();
    replay.validate();
    gate().validate();
    if (run.checkpoint_every == 0) throw ConfigError("run: checkpoint_every must be positive");
    if (run.eval_episodes < 1) throw ConfigError("run: eval_episodes must be positive");
    if (std::abs(scenario.dt - planner.dt()) > 1e-12)
      throw ConfigError("scenario dt must equal 1 / planning_frequency");
  }
};

namespace detail {

/// Reads known keys from one JSON object and rejects anything left over.
class Fields {
 public:
  Fields(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  /// Speeds written in km/h, stored in m/s.
  void get_kmh(const char* key, double& out_ms) {
    double kmh = out_ms * 3.6;
    get(key, kmh);
    kmh = std::round(kmh * 1e9) / 1e9;  // the m/s -> km/h echo is not exact in binary
    out_ms = kmh * lattice::kKmh;
  }

  template <class F>
  void section(const char* key, F&& f) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    Fields sub(obj_.at(key), where_ + "." + key);
    f(sub);
    sub.finish();
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key: " + where_ + "." + k);
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

inline std::vector<Vec2> polyline_from(const json& j) {
  std::vector<Vec2> out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw ConfigError("polyline points must be [x, y] pairs");
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

inline json polyline_to(const std::vector<Vec2>& pts) {
  json j = json::array();
  for (const auto& p : pts) j.push_back({p.x, p.y});
  return j;
}

}  // namespace detail

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  detail::Fields root(j, "config");
  root.get("seed", c.seed);
  root.section("scenario", [&](detail::Fields& f) {
    auto& s = c.scenario;
    f.get("m_max", s.m_max);
    f.get("spawn_rate", s.spawn_rate);
    f.get("agent_speed_range", s.agent_speed_range);
    f.get("episode_timeout", s.episode_timeout);
    f.get("stuck_time", s.stuck_time);
    f.get("v_stop", s.v_stop);
    f.get("ego_start_s", s.ego_start_s);
    f.get("ego_initial_speed", s.ego_initial_speed);
    f.get("observation_speed_max", s.observation_speed_max);
    f.get("vehicle_length", s.vehicle_length);
    f.get("vehicle_width", s.vehicle_width);
    f.section("rewards", [&](detail::Fields& r) {
      r.get("r_c", s.rewards.collision);
      r.get("r_p", s.rewards.success);
      r.get("r_s", s.rewards.stuck);
    });
    f.section("traffic", [&](detail::Fields& t) {
      t.get("time_gap", s.traffic.time_gap);
      t.get("comfort_decel", s.traffic.comfort_decel);
      t.get("max_accel", s.traffic.max_accel);
      t.get("min_gap", s.traffic.min_gap);
      t.get("max_brake", s.traffic.max_brake);
      t.get("spawn_min_gap", s.traffic.spawn_min_gap);
      t.get("warmup_time", s.traffic.warmup_time);
      t.get("claim_min_speed", s.traffic.claim_min_speed);
    });
    f.section("geometry", [&](detail::Fields& g) {
      auto& geo = s.geometry;
      g.get("lane_width", geo.lane_width);
      g.get("approach_length", geo.approach_length);
      g.get("turn_radius", geo.turn_radius);
      g.get("exit_length", geo.exit_length);
      g.get("route_half_length", geo.route_half_length);
      g.get("goal_x", geo.goal_x);
      g.get("zone_margin", geo.zone_margin);
      json tmp;
      tmp = nullptr;
      g.get("ego_path", tmp);
      if (!tmp.is_null()) geo.ego_path = detail::polyline_from(tmp);
      tmp = nullptr;
      g.get("route_from_left", tmp);
      if (!tmp.is_null()) geo.route_from_left = detail::polyline_from(tmp);
      tmp = nullptr;
      g.get("route_from_right", tmp);
      if (!tmp.is_null()) geo.route_from_right = detail::polyline_from(tmp);
    });
  });
  root.section("planner", [&](detail::Fields& f) {
    auto& p = c.planner;
    f.get("n", p.n);
    f.get("max_width", p.max_width);
    f.get_kmh("max_speed", p.max_speed);
    f.get_kmh("min_speed", p.min_speed);
    f.get("t_end", p.t_end);
    f.get("k_j", p.k_j);
    f.get("k_t", p.k_t);
    f.get("k_p", p.k_p);
    f.get("planning_frequency", p.planning_frequency);
    f.get("lateral_samples", p.lateral_samples);
    f.get("speed_samples", p.speed_samples);
    f.get("brake_decel", p.brake_decel);
  });
  root.section("train", [&](detail::Fields& f) {
    auto& t = c.train;
    f.get("alpha", t.alpha);
    f.get("gamma", t.gamma);
    f.get("batch_size", t.batch_size);
    f.get("tau_sync", t.tau_sync);
    f.get("k_e", t.k_e);
    f.get("sigma_thres", t.sigma_thres);
    f.get("n_e", t.n_e);
    f.get("hidden", t.hidden);
  });
  root.section("replay", [&](detail::Fields& f) {
    auto& r = c.replay;
    f.get("capacity", r.capacity);
    f.get("alpha", r.alpha);
    f.get("beta_start", r.beta_start);
    f.get("beta_end", r.beta_end);
    f.get("eps", r.eps);
    f.get("p_share", r.p_share);
  });
  root.section("gate", [&](detail::Fields& f) {
    f.get("p_thres", c.p_thres);
    f.get("n_thres", c.n_thres);
  });
  root.section("run", [&](detail::Fields& f) {
    f.get("total_steps", c.run.total_steps);
    f.get("checkpoint_every", c.run.checkpoint_every);
    f.get("learning_starts", c.run.learning_starts);
    f.get("eval_episodes", c.run.eval_episodes);
    f.get("timeout_counts_as_stuck", c.run.timeout_counts_as_stuck);
    f.get("divergence_limit", c.run.divergence_limit);
  });
  root.finish();
  c.scenario.dt = c.planner.dt();
  c.scenario.seed = c.seed;
  c.validate();
  return c;
}

inline json config_to_json(const RunConfig& c) {
  const auto& s = c.scenario;
  const auto& g = s.geometry;
  json geo = {{"lane_width", g.lane_width},
              {"approach_length", g.approach_length},
              {"turn_radius", g.turn_radius},
              {"exit_length", g.exit_length},
              {"route_half_length", g.route_half_length},
              {"goal_x", g.goal_x},
              {"zone_margin", g.zone_margin}};
  if (g.ego_path) geo["ego_path"] = detail::polyline_to(*g.ego_path);
  if (g.route_from_left) geo["route_from_left"] = detail::polyline_to(*g.route_from_left);
  if (g.route_from_right) geo["route_from_right"] = detail::polyline_to(*g.route_from_right);
  const auto& p = c.planner;
  const auto& t = c.train;
  const auto& r = c.replay;
  return json{
      {"seed", c.seed},
      {"scenario",
       {{"m_max", s.m_max},
        {"spawn_rate", s.spawn_rate},
        {"agent_speed_range", s.agent_speed_range},
        {"episode_timeout", s.episode_timeout},
        {"stuck_time", s.stuck_time},
        {"v_stop", s.v_stop},
        {"ego_start_s", s.ego_start_s},
        {"ego_initial_speed", s.ego_initial_speed},
        {"observation_speed_max", s.observation_speed_max},
        {"vehicle_length", s.vehicle_length},
        {"vehicle_width", s.vehicle_width},
        {"rewards", {{"r_c", s.rewards.collision}, {"r_p", s.rewards.success}, {"r_s", s.rewards.stuck}}},
        {"traffic",
         {{"time_gap", s.traffic.time_gap},
          {"comfort_decel", s.traffic.comfort_decel},
          {"max_accel", s.traffic.max_accel},
          {"min_gap", s.traffic.min_gap},
          {"max_brake", s.traffic.max_brake},
          {"spawn_min_gap", s.traffic.spawn_min_gap},
          {"warmup_time", s.traffic.warmup_time},
          {"claim_min_speed", s.traffic.claim_min_speed}}},
        {"geometry", geo}}},
      {"planner",
       {{"n", p.n},
        {"max_width", p.max_width},
        {"max_speed", p.max_speed * 3.6},
        {"min_speed", p.min_speed * 3.6},
        {"t_end", p.t_end},
        {"k_j", p.k_j},
        {"k_t", p.k_t},
        {"k_p", p.k_p},
        {"planning_frequency", p.planning_frequency},
        {"lateral_samples", p.lateral_samples},
        {"speed_samples", p.speed_samples},
        {"brake_decel", p.brake_decel}}},
      {"train",
       {{"alpha", t.alpha},
        {"gamma", t.gamma},
        {"batch_size", t.batch_size},
        {"tau_sync", t.tau_sync},
        {"k_e", t.k_e},
        {"sigma_thres", t.sigma_thres},
        {"n_e", t.n_e},
        {"hidden", t.hidden}}},
      {"replay",
       {{"capacity", r.capacity},
        {"alpha", r.alpha},
        {"beta_start", r.beta_start},
        {"beta_end", r.beta_end},
        {"eps", r.eps},
        {"p_share", r.p_share}}},
      {"gate", {{"p_thres", c.p_thres}, {"n_thres", c.n_thres}}},
      {"run",
       {{"total_steps", c.run.total_steps},
        {"checkpoint_every", c.run.checkpoint_every},
        {"learning_starts", c.run.learning_starts},
        {"eval_episodes", c.run.eval_episodes},
        {"timeout_counts_as_stuck", c.run.timeout_counts_as_stuck},
        {"divergence_limit", c.run.divergence_limit}}}};
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace ubrl::agent
