// Command-line front end: train, eval, sweep, inspect, replay-trace.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubrl/agent/run_config.hpp"
#include "ubrl/agent/trainer.hpp"
#include "ubrl/harness/evaluate.hpp"
#include "ubrl/harness/runs.hpp"

namespace {

using nlohmann::json;
using namespace ubrl;

/// Applies "section.key=value" overrides; values are parsed as JSON, falling back to strings.
json apply_overrides(json base, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("override must look like section.key=value: " + s);
    json value;
    try {
      value = json::parse(s.substr(eq + 1));
    } catch (const json::exception&) {
      value = s.substr(eq + 1);
    }
    json* node = &base;
    std::stringstream path(s.substr(0, eq));
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(path, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = value;
  }
  return base;
}

agent::RunConfig resolve_config(const std::string& path, const std::vector<std::string>& sets,
                                std::optional<std::uint64_t> seed) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    j = json::parse(in);
  }
  j = apply_overrides(std::move(j), sets);
  if (seed) j["seed"] = *seed;
  return agent::config_from_json(j);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  return os;
}

void print_report(const harness::EvalReport& r) {
  std::cout << harness::report_json(r).dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-bounded RL at a simulated unprotected left turn"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  // train
  auto* train = app.add_subcommand("train", "Train from scratch, writing a manifest and checkpoint series");
  std::string out_dir = "run";
  std::optional<std::uint64_t> steps, every;
  std::uint64_t curve_episodes = 0;
  train->add_option("-c,--config", config_path, "JSON config file");
  train->add_option("--set", sets, "Override, e.g. --set train.alpha=1e-3");
  train->add_option("--seed", seed, "Master seed");
  train->add_option("-o,--out", out_dir, "Output directory")->capture_default_str();
  train->add_option("--steps", steps, "Total environment steps");
  train->add_option("--checkpoint-every", every, "Checkpoint cadence in environment steps");
  train->add_option("--curve-episodes", curve_episodes, "After training, evaluate every checkpoint on this many episodes");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a policy on fresh seeded episodes");
  std::string checkpoint, policy_name = "ubrl", csv_path, log_path, trace_path;
  std::optional<std::uint64_t> episodes;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file (not needed for the baseline)");
  eval->add_option("-c,--config", config_path, "JSON config file (baseline without checkpoint)");
  eval->add_option("--set", sets, "Config override");
  eval->add_option("--policy", policy_name, "baseline, drl or ubrl")->capture_default_str();
  eval->add_option("--episodes", episodes, "Episode count");
  eval->add_option("--seed", seed, "Evaluation seed");
  eval->add_option("--csv", csv_path, "Append a CSV report here");
  eval->add_option("--decision-log", log_path, "JSONL decision log (ubrl only)");
  eval->add_option("--trace", trace_path, "JSONL episode trace");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Sweep p_thres or n_thres on a shared seed set");
  std::string param = "p_thres";
  std::vector<double> values;
  sw->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  sw->add_option("--param", param, "p_thres or n_thres")->capture_default_str();
  sw->add_option("--values", values, "Values to sweep")->required()->delimiter(',');
  sw->add_option("--episodes", episodes, "Episodes per value");
  sw->add_option("--seed", seed, "Evaluation seed");
  sw->add_option("--csv", csv_path, "CSV output (stdout if omitted)");

  // inspect
  auto* ins = app.add_subcommand("inspect", "Per-head values, spread and counts at probe state-actions");
  std::string probes_path;
  std::size_t terminal_probes = 20, top_k = 10;
  std::uint64_t driving_episodes = 0;
  ins->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ins->add_option("--probes", probes_path, "JSONL probes {\"state\": [...], \"action\": a}");
  ins->add_option("--terminal", terminal_probes, "Sample this many absorbing transitions from the replay buffer")
      ->capture_default_str();
  ins->add_option("--driving", driving_episodes,
                  "Probe the final state-action of this many UBRL evaluation episodes instead");
  ins->add_option("--seed", seed, "Evaluation seed for --driving");
  ins->add_option("--top", top_k, "Dump the k most and least visited count keys")->capture_default_str();

  // replay-trace
  auto* rt = app.add_subcommand("replay-trace", "Re-simulate a recorded trace and check it step by step");
  std::string trace_in;
  rt->add_option("--trace", trace_in, "JSONL trace written by eval --trace")->required();
  rt->add_option("-c,--config", config_path, "JSON config used for the trace");
  rt->add_option("--set", sets, "Config override");
  rt->add_option("--seed", seed, "Evaluation seed used for the trace");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      auto cfg = resolve_config(config_path, sets, seed);
      if (steps) cfg.run.total_steps = *steps;
      if (every) cfg.run.checkpoint_every = *every;
      cfg.validate();
      const auto m = harness::train_run(cfg, out_dir, &std::cout);
      std::cout << "wrote " << m.checkpoints.size() << " checkpoints to " << out_dir << '\n';
      if (curve_episodes > 0) {
        const auto curve = harness::eval_curve(m, out_dir, curve_episodes, cfg.seed);
        auto os = open_out((std::filesystem::path(out_dir) / "curve.csv").string());
        harness::write_curve_csv(os, curve);
        harness::write_curve_csv(std::cout, curve);
      }
      return 0;
    }

    if (*eval) {
      const auto policy = harness::policy_from_string(policy_name);
      std::optional<agent::PolicyCheckpoint> ck;
      agent::RunConfig cfg;
      if (!checkpoint.empty()) {
        ck = agent::read_policy_checkpoint(checkpoint);
        cfg = ck->config;
        if (!config_path.empty() || !sets.empty()) {
          const auto other = resolve_config(config_path, sets, cfg.seed);
          if (agent::config_to_json(other) != agent::config_to_json(cfg))
            throw ConfigError("config does not match the checkpoint; refusing to evaluate");
        }
      } else {
        if (policy != harness::Policy::baseline_only) throw ConfigError("--checkpoint is required for drl and ubrl");
        cfg = resolve_config(config_path, sets, std::nullopt);
      }
      env::Simulator sim(cfg.scenario, cfg.planner);
      harness::EvalOptions opt;
      opt.episodes = episodes.value_or(static_cast<std::uint64_t>(cfg.run.eval_episodes));
      opt.seed = seed.value_or(cfg.seed);
      opt.timeout_counts_as_stuck = cfg.run.timeout_counts_as_stuck;
      std::ofstream log_os, trace_os;
      if (!log_path.empty()) {
        log_os = open_out(log_path);
        opt.decision_log = &log_os;
      }
      if (!trace_path.empty()) {
        trace_os = open_out(trace_path);
        opt.trace = &trace_os;
      }
      harness::PolicyModel model;
      if (ck) model = {&ck->net, &ck->counts, cfg.gate()};
      const auto rep = harness::evaluate(policy, sim, model, opt);
      print_report(rep);
      if (!csv_path.empty()) {
        const bool fresh = !std::filesystem::exists(csv_path);
        std::ofstream os(csv_path, std::ios::app);
        if (fresh) os << harness::csv_header() << '\n';
        os << harness::csv_row(rep) << '\n';
      }
      return 0;
    }

    if (*sw) {
      const auto ck = agent::read_policy_checkpoint(checkpoint);
      env::Simulator sim(ck.config.scenario, ck.config.planner);
      harness::EvalOptions opt;
      opt.episodes = episodes.value_or(static_cast<std::uint64_t>(ck.config.run.eval_episodes));
      opt.seed = seed.value_or(ck.config.seed);
      opt.timeout_counts_as_stuck = ck.config.run.timeout_counts_as_stuck;
      const auto which = harness::sweep_param_from_string(param);
      const auto rows = harness::sweep(which, values, sim, ck, opt);
      const auto base = harness::evaluate(harness::Policy::baseline_only, sim, {}, opt);
      if (csv_path.empty()) {
        harness::write_sweep_csv(std::cout, which, rows);
      } else {
        auto os = open_out(csv_path);
        harness::write_sweep_csv(os, which, rows);
      }
      std::cout << "baseline p_s on the same seeds: " << base.p_s() << '\n';
      return 0;
    }

    if (*ins) {
      const auto header = [&] {
        std::ifstream is(checkpoint, std::ios::binary);
        return agent::read_header(is);
      }();
      const auto cfg = agent::config_from_json(header.at("config"));
      agent::Trainer full(cfg);
      full.load_file(checkpoint);
      std::vector<harness::Probe> probes;
      if (!probes_path.empty()) {
        std::ifstream in(probes_path);
        if (!in) throw ConfigError("cannot open probes file " + probes_path);
        for (std::string line; std::getline(in, line);) {
          if (line.empty()) continue;
          const auto j = json::parse(line);
          harness::Probe p;
          p.s = j.at("state").get<std::vector<double>>();
          p.a = j.at("action");
          if (j.contains("terminal_reward")) {
            p.terminal = true;
            p.true_value = j.at("terminal_reward");
          }
          probes.push_back(std::move(p));
        }
      } else if (driving_episodes > 0) {
        harness::EvalOptions opt;
        opt.episodes = driving_episodes;
        opt.seed = seed.value_or(cfg.seed);
        probes = harness::driving_terminal_probes(harness::Policy::ubrl, full.simulator(),
                                                  {&full.ensemble(), &full.counts(), cfg.gate()}, opt);
      } else {
        probes = harness::terminal_probes(full.buffer(), terminal_probes);
      }
      for (const auto& r : harness::inspect_uncertainty(full.ensemble(), full.counts(), probes)) {
        json j = {{"action", r.probe.a}, {"head_q", r.head_q}, {"mean", r.mean}, {"sigma", r.sigma}, {"count", r.count}};
        if (r.probe.terminal) {
          j["true_value"] = r.probe.true_value;
          j["true_error"] = r.true_error;
        }
        std::cout << j.dump() << '\n';
      }
      for (const bool most : {true, false}) {
        std::cout << (most ? "most" : "least") << " visited keys:\n";
        for (const auto& [key, n] : full.counts().extremes(top_k, most)) {
          std::cout << "  " << n << "  [";
          for (std::size_t i = 0; i < key.size(); ++i) std::cout << (i ? "," : "") << int(key[i]);
          std::cout << "]\n";
        }
      }
      return 0;
    }

    if (*rt) {
      const auto cfg = resolve_config(config_path, sets, std::nullopt);
      env::Simulator sim(cfg.scenario, cfg.planner);
      const std::uint64_t eval_seed = seed.value_or(cfg.seed);
      std::ifstream in(trace_in);
      if (!in) throw ConfigError("cannot open trace " + trace_in);
      std::optional<std::uint64_t> episode;
      env::WorldState w;
      std::uint64_t checked = 0;
      for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        const std::uint64_t ep = j.at("episode");
        if (!episode || *episode != ep) {
          episode = ep;
          w = sim.reset(harness::eval_episode_seed(eval_seed, ep));
        }
        const auto s = sim.observe(w);
        if (json(s) != j.at("state")) {
          std::cerr << "state mismatch at episode " << ep << " step " << j.at("step") << '\n';
          return 3;
        }
        const auto cs = sim.candidates(w);
        const auto out = sim.step(w, cs.action(j.at("action").get<int>()));
        if (out.reward != j.at("reward").get<double>() ||
            env::to_string(out.terminal) != j.at("terminal").get<std::string>()) {
          std::cerr << "outcome mismatch at episode " << ep << " step " << j.at("step") << '\n';
          return 3;
        }
        w = out.next;
        ++checked;
      }
      std::cout << "replayed " << checked << " steps, all identical\n";
      return 0;
    }
  } catch (const ContractViolation& e) {
    std::cerr << "invariant violated: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
