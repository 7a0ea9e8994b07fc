#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubrl/agent/run_config.hpp"
#include "ubrl/agent/trainer.hpp"
#include "ubrl/harness/evaluate.hpp"

#ifndef UBRL_VERSION
#define UBRL_VERSION "dev"
#endif

namespace ubrl::harness {

namespace fs = std::filesystem;
using nlohmann::json;

struct CheckpointRef {
  std::uint64_t step = 0;
  std::string path;
};

struct RunManifest {
  std::uint64_t seed = 0;
  json config;
  std::string version = UBRL_VERSION;
  std::vector<CheckpointRef> checkpoints;
  std::string status = "running";  ///< running, complete or partial
  std::string error;
};

inline json manifest_json(const RunManifest& m) {
  json cks = json::array();
  for (const auto& c : m.checkpoints) cks.push_back({{"step", c.step}, {"path", c.path}});
  json j = {{"seed", m.seed}, {"config", m.config}, {"version", m.version}, {"checkpoints", cks}, {"status", m.status}};
  if (!m.error.empty()) j["error"] = m.error;
  return j;
}

inline RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.seed = j.at("seed");
  m.config = j.at("config");
  m.version = j.at("version");
  m.status = j.at("status");
  if (j.contains("error")) m.error = j.at("error");
  for (const auto& c : j.at("checkpoints")) m.checkpoints.push_back({c.at("step"), c.at("path")});
  return m;
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw CheckpointError("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw CheckpointError("failed writing " + path.string());
}

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open manifest " + path);
  return manifest_from_json(json::parse(is));
}

inline std::string checkpoint_name(std::uint64_t step) {
  std::ostringstream os;
  os << "ckpt_" << std::setw(9) << std::setfill('0') << step << ".bin";
  return os.str();
}

/**
 * Trains from scratch and writes a checkpoint at step 0, every
 * `checkpoint_every` steps and at the end. A `PARTIAL` marker sits next to the
 * manifest until the run completes; failures leave it and record the error.
 */
inline RunManifest train_run(const agent::RunConfig& cfg, const std::string& out_dir, std::ostream* progress = nullptr) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const fs::path marker = dir / "PARTIAL";
  RunManifest m;
  m.seed = cfg.seed;
  m.config = agent::config_to_json(cfg);
  {
    std::ofstream(marker) << "run in progress\n";
  }
  write_json(dir / "manifest.json", manifest_json(m));

  agent::Trainer trainer(cfg);
  auto checkpoint = [&]() {
    const std::string name = checkpoint_name(trainer.env_steps());
    trainer.save_file((dir / name).string());
    m.checkpoints.push_back({trainer.env_steps(), name});
    write_json(dir / "manifest.json", manifest_json(m));
    if (progress) {
      const auto& s = trainer.stats();
      *progress << "step " << trainer.env_steps() << ": episodes " << s.episodes << ", successes " << s.successes
                << ", collisions " << s.collisions << ", stucks " << s.stucks << ", timeouts " << s.timeouts
                << ", head steps " << s.head_steps << '\n';
    }
  };
  try {
    checkpoint();
    const std::uint64_t total = cfg.run.total_steps;
    while (trainer.env_steps() < total) {
      const std::uint64_t next = std::min(total, trainer.env_steps() + cfg.run.checkpoint_every);
      trainer.run(next);
      checkpoint();
    }
  } catch (const std::exception& e) {
    m.status = "partial";
    m.error = e.what();
    write_json(dir / "manifest.json", manifest_json(m));
    throw;
  }
  m.status = "complete";
  write_json(dir / "manifest.json", manifest_json(m));
  fs::remove(marker);
  return m;
}

inline std::string csv_header() {
  return "policy,episodes,collisions,stucks,timeouts,successes,p_s,activation";
}

inline std::string csv_row(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(10) << to_string(r.policy) << ',' << r.episodes << ',' << r.collisions << ',' << r.stucks
     << ',' << r.timeouts << ',' << r.successes << ',' << r.p_s() << ',' << r.activation();
  return os.str();
}

struct CurvePoint {
  std::uint64_t step = 0;
  EvalReport ubrl;
};

struct EvalCurve {
  EvalReport baseline;
  std::vector<CurvePoint> points;
};

/// Evaluates every checkpoint of a run on one shared seed set.
inline EvalCurve eval_curve(const RunManifest& m, const std::string& run_dir, std::uint64_t episodes, std::uint64_t seed) {
  const auto cfg = agent::config_from_json(m.config);
  env::Simulator sim(cfg.scenario, cfg.planner);
  EvalOptions opt;
  opt.episodes = episodes;
  opt.seed = seed;
  opt.timeout_counts_as_stuck = cfg.run.timeout_counts_as_stuck;
  EvalCurve curve;
  curve.baseline = evaluate(Policy::baseline_only, sim, {}, opt);
  for (const auto& c : m.checkpoints) {
    const auto ck = agent::read_policy_checkpoint((fs::path(run_dir) / c.path).string());
    if (ck.header.at("config") != m.config) throw ConfigError("checkpoint " + c.path + " does not belong to this run");
    const PolicyModel model{&ck.net, &ck.counts, cfg.gate()};
    curve.points.push_back({c.step, evaluate(Policy::ubrl, sim, model, opt)});
  }
  return curve;
}

inline void write_curve_csv(std::ostream& os, const EvalCurve& c) {
  os << "step," << csv_header() << '\n';
  os << "-," << csv_row(c.baseline) << '\n';
  for (const auto& p : c.points) os << p.step << ',' << csv_row(p.ubrl) << '\n';
}

enum class SweepParam { p_thres, n_thres };

inline SweepParam sweep_param_from_string(const std::string& s) {
  if (s == "p_thres") return SweepParam::p_thres;
  if (s == "n_thres") return SweepParam::n_thres;
  throw ConfigError("sweep parameter must be p_thres or n_thres, got '" + s + "'");
}

struct SweepRow {
  double value = 0.0;
  EvalReport report;
};

/// One UBRL report per value, all on the same episode seeds.
inline std::vector<SweepRow> sweep(SweepParam param, const std::vector<double>& values, const env::Simulator& sim,
                                   const agent::PolicyCheckpoint& ck, const EvalOptions& opt) {
  std::vector<SweepRow> rows;
  for (double v : values) {
    agent::GateConfig gate = ck.config.gate();
    if (param == SweepParam::p_thres) {
      gate.p_thres = v;
    } else {
      if (v < 0.0 || v != std::floor(v)) throw ConfigError("n_thres values must be non-negative integers");
      gate.n_thres = static_cast<std::uint64_t>(v);
    }
    gate.validate();
    rows.push_back({v, evaluate(Policy::ubrl, sim, {&ck.net, &ck.counts, gate}, opt)});
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& os, SweepParam param, const std::vector<SweepRow>& rows) {
  os << "parameter,value," << csv_header() << '\n';
  for (const auto& r : rows)
    os << (param == SweepParam::p_thres ? "p_thres" : "n_thres") << ',' << std::setprecision(10) << r.value << ','
       << csv_row(r.report) << '\n';
}

struct Probe {
  std::vector<double> s;
  int a = 0;
  bool terminal = false;     ///< absorbing transition: its true value is the terminal reward
  double true_value = 0.0;
};

struct ProbeReport {
  Probe probe;
  std::vector<double> head_q;
  double mean = 0.0;
  double sigma = 0.0;
  std::uint64_t count = 0;
  double true_error = 0.0;  ///< |mean - r_T| for terminal probes
};

inline std::vector<ProbeReport> inspect_uncertainty(const valuenet::EnsembleNet& net, const counts::CountIndex& counts,
                                                    const std::vector<Probe>& probes) {
  const auto disc = counts::Discretizer::normalized(static_cast<std::size_t>(net.input_size()));
  std::vector<ProbeReport> out;
  for (const auto& p : probes) {
    const auto q = valuenet::ensemble_forward(net, p.s);
    ProbeReport r;
    r.probe = p;
    for (Eigen::Index i = 0; i < q.rows(); ++i) r.head_q.push_back(q(i, p.a));
    const auto st = valuenet::column_stats(q, p.a);
    r.mean = st.mean;
    r.sigma = st.sigma;
    r.count = counts.query(disc(p.s, p.a));
    if (p.terminal) r.true_error = std::abs(r.mean - p.true_value);
    out.push_back(std::move(r));
  }
  return out;
}

/// Absorbing transitions stored in the replay buffer, oldest slot first.
inline std::vector<Probe> terminal_probes(const replay::PrioritizedBuffer& buf, std::size_t limit) {
  std::vector<Probe> out;
  for (std::size_t i = 0; i < buf.size() && out.size() < limit; ++i) {
    const auto& e = buf.at(i);
    if (e.terminal) out.push_back({e.s, e.a, true, e.r});
  }
  return out;
}

/// Last state-action of each evaluation episode, as driven by the given policy.
inline std::vector<Probe> driving_terminal_probes(Policy policy, const env::Simulator& sim, const PolicyModel& model,
                                                  EvalOptions opt) {
  std::ostringstream trace;
  opt.trace = &trace;
  opt.decision_log = nullptr;
  evaluate(policy, sim, model, opt);
  std::vector<Probe> out;
  std::istringstream lines(trace.str());
  for (std::string line; std::getline(lines, line);) {
    const auto j = json::parse(line);
    const auto t = env::terminal_from_string(j.at("terminal").get<std::string>());
    if (t == env::Terminal::none) continue;
    const bool absorbing = env::is_absorbing(t);
    out.push_back({j.at("state").get<std::vector<double>>(), j.at("action").get<int>(), absorbing,
                   absorbing ? j.at("reward").get<double>() : 0.0});
  }
  return out;
}

struct ProbePair {
  Probe low;   ///< zero training count
  Probe high;  ///< training count >= the high threshold
};

/// Same-state pairs: the most trained action against the first never-trained one.
inline std::vector<ProbePair> count_contrast_pairs(const replay::PrioritizedBuffer& buf, const counts::CountIndex& counts,
                                                   int actions, std::uint64_t high, std::size_t limit) {
  const auto disc = counts::Discretizer::normalized(counts.key_length() - 1);
  std::vector<ProbePair> out;
  std::vector<counts::Key> seen;
  for (std::size_t i = 0; i < buf.size() && out.size() < limit; ++i) {
    const auto& s = buf.at(i).s;
    const auto key = disc(s, 0);
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    int hi_a = -1, lo_a = -1;
    std::uint64_t best = 0;
    for (int a = 0; a < actions; ++a) {
      const auto n = counts.query(disc(s, a));
      if (n >= high && n > best) {
        best = n;
        hi_a = a;
      }
      if (n == 0 && lo_a < 0) lo_a = a;
    }
    if (hi_a < 0 || lo_a < 0) continue;
    seen.push_back(key);
    out.push_back({{s, lo_a, false, 0.0}, {s, hi_a, false, 0.0}});
  }
  return out;
}

/// One-sided sign test: P(X >= k) for X ~ Binomial(n, 1/2).
inline double sign_test_p(std::uint64_t k, std::uint64_t n) {
  double p = 0.0;
  for (std::uint64_t i = k; i <= n; ++i)
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
  return std::min(1.0, p);
}

}  // namespace ubrl::harness
