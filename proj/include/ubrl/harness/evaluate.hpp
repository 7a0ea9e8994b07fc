#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubrl/agent/gating.hpp"
#include "ubrl/common/error.hpp"
#include "ubrl/common/rng.hpp"
#include "ubrl/counts/count_index.hpp"
#include "ubrl/env/simulator.hpp"
#include "ubrl/valuenet/ensemble.hpp"

namespace ubrl::harness {

enum class Policy { baseline_only, drl_only, ubrl };

inline std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::baseline_only: return "baseline";
    case Policy::drl_only: return "drl";
    case Policy::ubrl: return "ubrl";
  }
  return "ubrl";
}

inline Policy policy_from_string(std::string_view s) {
  for (Policy p : {Policy::baseline_only, Policy::drl_only, Policy::ubrl})
    if (to_string(p) == s) return p;
  throw ConfigError("unknown policy '" + std::string(s) + "' (expected baseline, drl or ubrl)");
}

struct EpisodeRecord {
  std::uint64_t episode = 0;
  std::uint64_t seed = 0;
  env::Terminal terminal = env::Terminal::none;
  std::uint64_t steps = 0;
  std::uint64_t drl_steps = 0;
  double reward = 0.0;
  std::vector<int> actions;  ///< filled only when requested

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct EvalReport {
  Policy policy = Policy::ubrl;
  std::uint64_t episodes = 0;
  std::uint64_t collisions = 0;
  std::uint64_t stucks = 0;
  std::uint64_t timeouts = 0;
  std::uint64_t successes = 0;
  bool timeout_counts_as_stuck = true;
  std::uint64_t decisions = 0;
  std::uint64_t drl_decisions = 0;
  std::vector<EpisodeRecord> records;

  /// Failures in the stuck column of the success-rate formula.
  std::uint64_t stuck_like() const { return stucks + (timeout_counts_as_stuck ? timeouts : 0); }
  double p_s() const { return success_rate(collisions, stuck_like(), episodes); }
  double activation() const {
    return decisions == 0 ? 0.0 : static_cast<double>(drl_decisions) / static_cast<double>(decisions);
  }
  bool partition_holds() const { return collisions + stucks + timeouts + successes == episodes; }

  static double success_rate(std::uint64_t collisions, std::uint64_t stucks, std::uint64_t episodes) {
    if (episodes == 0) throw ContractViolation("success rate needs at least one episode");
    return 1.0 - static_cast<double>(collisions + stucks) / static_cast<double>(episodes);
  }

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Binomial standard error of a success fraction.
inline double binomial_se(double p, std::uint64_t n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

/// Wilson score interval at z (1.96 for 95 %).
inline std::pair<double, double> wilson_interval(double p, std::uint64_t n, double z = 1.96) {
  const double nn = static_cast<double>(n);
  const double denom = 1.0 + z * z / nn;
  const double centre = (p + z * z / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
  return {centre - half, centre + half};
}

inline nlohmann::json report_json(const EvalReport& r) {
  return {{"policy", to_string(r.policy)},
          {"episodes", r.episodes},
          {"collisions", r.collisions},
          {"stucks", r.stucks},
          {"timeouts", r.timeouts},
          {"successes", r.successes},
          {"timeout_counts_as_stuck", r.timeout_counts_as_stuck},
          {"p_s", r.p_s()},
          {"decisions", r.decisions},
          {"drl_decisions", r.drl_decisions},
          {"activation", r.activation()}};
}

inline nlohmann::json decision_json(std::uint64_t episode, std::uint64_t step, const agent::Decision& d) {
  return {{"episode", episode}, {"step", step},         {"source", agent::to_string(d.source)},
          {"a_u", d.action},    {"a_rl", d.a_rl},       {"a_rb", d.a_rb},
          {"p_o", d.p_o},       {"mean_gap", d.mean_gap}, {"n_rl", d.n_rl},
          {"n_rb", d.n_rb},     {"sigma_rl", d.sigma_rl}, {"sigma_rb", d.sigma_rb},
          {"mean_ok", d.mean_ok}, {"vote_ok", d.vote_ok}, {"count_ok", d.count_ok}};
}

/// A frozen policy: networks and counts are only read.
struct PolicyModel {
  const valuenet::EnsembleNet* net = nullptr;
  const counts::CountIndex* counts = nullptr;
  agent::GateConfig gate;
};

struct EvalOptions {
  std::uint64_t episodes = 200;
  std::uint64_t seed = 1;
  bool timeout_counts_as_stuck = true;
  bool keep_actions = false;
  std::ostream* decision_log = nullptr;  ///< JSONL, one line per gated decision
  std::ostream* trace = nullptr;         ///< JSONL, one line per environment step
};

inline std::uint64_t eval_episode_seed(std::uint64_t seed, std::uint64_t episode) {
  return derive_seed(seed, streams::kEvalEpisode, episode);
}

/**
 * Runs fresh episodes from seeds derived from `opt.seed`. The same seed gives
 * the same initial worlds for every policy, so reports are comparable.
 */
inline EvalReport evaluate(Policy policy, const env::Simulator& sim, const PolicyModel& model, const EvalOptions& opt) {
  if (policy != Policy::baseline_only && (!model.net || !model.counts))
    throw ContractViolation("drl and ubrl evaluation need a loaded checkpoint");
  if (model.net && (model.net->input_size() != static_cast<int>(sim.observation_size()) ||
                    model.net->action_count() != sim.action_count()))
    throw ConfigError("checkpoint network shape does not match the scenario/planner config");

  const auto disc = counts::Discretizer::normalized(sim.observation_size());
  EvalReport rep;
  rep.policy = policy;
  rep.timeout_counts_as_stuck = opt.timeout_counts_as_stuck;
  for (std::uint64_t ep = 0; ep < opt.episodes; ++ep) {
    EpisodeRecord rec;
    rec.episode = ep;
    rec.seed = eval_episode_seed(opt.seed, ep);
    env::WorldState w = sim.reset(rec.seed);
    while (true) {
      const auto cs = sim.candidates(w);
      const int a_rb = sim.baseline(w, cs).action;
      int a = a_rb;
      const auto s = sim.observe(w);
      if (policy == Policy::drl_only) {
        const auto q = valuenet::ensemble_forward(*model.net, s);
        q.colwise().mean().maxCoeff(&a);
        ++rec.drl_steps;
      } else if (policy == Policy::ubrl) {
        const auto q = valuenet::ensemble_forward(*model.net, s);
        const auto d = agent::act(
            q, a_rb, [&](int act) { return model.counts->query(disc(s, act)); }, model.gate);
        if (d.source == agent::Source::drl && !(d.mean_ok && d.vote_ok && d.count_ok))
          throw ContractViolation("gate accepted a DRL action without all activation conditions");
        a = d.action;
        rec.drl_steps += d.source == agent::Source::drl ? 1 : 0;
        if (opt.decision_log) *opt.decision_log << decision_json(ep, rec.steps, d).dump() << '\n';
      }
      if (opt.keep_actions) rec.actions.push_back(a);
      const auto out = sim.step(w, cs.action(a));
      if (opt.trace)
        *opt.trace << nlohmann::json{{"episode", ep},
                                     {"step", rec.steps},
                                     {"state", s},
                                     {"action", a},
                                     {"reward", out.reward},
                                     {"terminal", env::to_string(out.terminal)}}
                          .dump()
                   << '\n';
      ++rec.steps;
      rec.reward += out.reward;
      if (out.terminal != env::Terminal::none) {
        rec.terminal = out.terminal;
        break;
      }
      w = out.next;
    }
    ++rep.episodes;
    switch (rec.terminal) {
      case env::Terminal::success: ++rep.successes; break;
      case env::Terminal::collision: ++rep.collisions; break;
      case env::Terminal::stuck: ++rep.stucks; break;
      case env::Terminal::timeout: ++rep.timeouts; break;
      case env::Terminal::none: break;
    }
    rep.decisions += rec.steps;
    rep.drl_decisions += policy == Policy::baseline_only ? 0 : rec.drl_steps;
    rep.records.push_back(std::move(rec));
  }
  if (!rep.partition_holds()) throw ContractViolation("evaluation outcome partition broken");
  return rep;
}

}  // namespace ubrl::harness
