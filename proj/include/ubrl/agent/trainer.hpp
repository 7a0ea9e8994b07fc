#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubrl/agent/gating.hpp"
#include "ubrl/agent/run_config.hpp"
#include "ubrl/common/binary_io.hpp"
#include "ubrl/common/error.hpp"
#include "ubrl/common/rng.hpp"
#include "ubrl/counts/count_index.hpp"
#include "ubrl/env/simulator.hpp"
#include "ubrl/replay/prioritized_buffer.hpp"
#include "ubrl/valuenet/ensemble.hpp"

namespace ubrl::agent {

inline constexpr char kCheckpointMagic[8] = {'U', 'B', 'R', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainStats {
  std::uint64_t episodes = 0;
  std::uint64_t successes = 0;
  std::uint64_t collisions = 0;
  std::uint64_t stucks = 0;
  std::uint64_t timeouts = 0;
  std::uint64_t head_steps = 0;    ///< steps where the ensemble agreed and head k acted
  std::uint64_t random_steps = 0;  ///< epsilon draws among those
  std::uint64_t updates = 0;
  double last_loss = 0.0;

  friend bool operator==(const TrainStats&, const TrainStats&) = default;
};

inline nlohmann::json to_json(const TrainStats& s) {
  return {{"episodes", s.episodes},     {"successes", s.successes},       {"collisions", s.collisions},
          {"stucks", s.stucks},         {"timeouts", s.timeouts},         {"head_steps", s.head_steps},
          {"random_steps", s.random_steps}, {"updates", s.updates},       {"last_loss", s.last_loss}};
}

inline TrainStats stats_from_json(const nlohmann::json& j) {
  TrainStats s;
  s.episodes = j.at("episodes");
  s.successes = j.at("successes");
  s.collisions = j.at("collisions");
  s.stucks = j.at("stucks");
  s.timeouts = j.at("timeouts");
  s.head_steps = j.at("head_steps");
  s.random_steps = j.at("random_steps");
  s.updates = j.at("updates");
  s.last_loss = j.at("last_loss");
  return s;
}

namespace detail {

inline void put_world(std::ostream& os, const env::WorldState& w) {
  const auto& e = w.ego;
  for (double v : {e.x, e.y, e.heading, e.speed, e.accel}) io::put(os, v);
  const auto& f = w.ego_frenet;
  for (double v : {f.d, f.d_dot, f.d_ddot, f.b, f.b_dot, f.b_ddot, f.t}) io::put(os, v);
  io::put<std::uint64_t>(os, w.agents.size());
  for (const auto& a : w.agents) {
    for (double v : {a.x, a.y, a.heading, a.speed, a.progress, a.accel, a.idm.desired_speed, a.idm.time_gap,
                     a.idm.comfort_decel})
      io::put(os, v);
    io::put<std::int32_t>(os, static_cast<std::int32_t>(a.route_id));
    io::put<std::uint64_t>(os, a.id);
  }
  io::put(os, w.sim_time);
  io::put(os, w.stop_timer);
  io::put<std::uint64_t>(os, w.step_index);
  io::put<std::uint64_t>(os, w.next_agent_id);
  io::put<std::uint8_t>(os, w.ego_present ? 1 : 0);
  io::put_string(os, serialize_rng(w.rng));
}

inline env::WorldState get_world(std::istream& is) {
  env::WorldState w;
  auto& e = w.ego;
  for (double* v : {&e.x, &e.y, &e.heading, &e.speed, &e.accel}) *v = io::get<double>(is);
  auto& f = w.ego_frenet;
  for (double* v : {&f.d, &f.d_dot, &f.d_ddot, &f.b, &f.b_dot, &f.b_ddot, &f.t}) *v = io::get<double>(is);
  const auto n = io::get<std::uint64_t>(is);
  if (n > 1024) throw CheckpointError("implausible agent count in checkpoint");
  w.agents.resize(n);
  for (auto& a : w.agents) {
    for (double* v : {&a.x, &a.y, &a.heading, &a.speed, &a.progress, &a.accel, &a.idm.desired_speed, &a.idm.time_gap,
                      &a.idm.comfort_decel})
      *v = io::get<double>(is);
    a.route_id = static_cast<env::RouteId>(io::get<std::int32_t>(is));
    a.id = io::get<std::uint64_t>(is);
  }
  w.sim_time = io::get<double>(is);
  w.stop_timer = io::get<double>(is);
  w.step_index = io::get<std::uint64_t>(is);
  w.next_agent_id = io::get<std::uint64_t>(is);
  w.ego_present = io::get<std::uint8_t>(is) != 0;
  w.rng = deserialize_rng(io::get_string(is));
  return w;
}

inline void put_net(std::ostream& os, const std::vector<valuenet::Mlp>& nets) {
  for (const auto& m : nets) io::put_vector(os, m.flat());
}

inline void get_net(std::istream& is, std::vector<valuenet::Mlp>& nets) {
  for (auto& m : nets) {
    const auto p = io::get_vector<double>(is);
    if (p.size() != m.parameter_count()) throw CheckpointError("network parameter count mismatch");
    m.set_flat(p);
  }
}

}  // namespace detail

/// Parsed checkpoint as needed by evaluation: header, networks and counts.
struct PolicyCheckpoint {
  nlohmann::json header;
  RunConfig config;
  valuenet::EnsembleNet net;
  counts::CountIndex counts;
  std::uint64_t env_steps = 0;
};

inline nlohmann::json read_header(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, kCheckpointMagic)) throw CheckpointError("not a checkpoint file");
  const auto version = io::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  try {
    return nlohmann::json::parse(io::get_string(is));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
}

/**
 * Training loop: the baseline acts until the ensemble agrees with itself on the
 * baseline action, after which a per-episode head takes over. Every
 * environment step adds one experience and, once the buffer is warm, runs one
 * masked TD update and counts the trained state-action boxes.
 */
class Trainer {
 public:
  explicit Trainer(RunConfig cfg)
      : cfg_(std::move(cfg)),
        sim_(cfg_.scenario, cfg_.planner),
        disc_(counts::Discretizer::normalized(sim_.observation_size())),
        net_(valuenet::init(widths(), cfg_.train.n_e, cfg_.seed)),
        buf_(cfg_.replay, cfg_.train.n_e),
        counts_(sim_.observation_size() + 1),
        rng_(derive_seed(cfg_.seed, streams::kTraining)) {
    cfg_.validate();
  }

  const RunConfig& config() const { return cfg_; }
  const env::Simulator& simulator() const { return sim_; }
  const valuenet::EnsembleNet& ensemble() const { return net_; }
  const counts::CountIndex& counts() const { return counts_; }
  const counts::Discretizer& discretizer() const { return disc_; }
  const replay::PrioritizedBuffer& buffer() const { return buf_; }
  const TrainStats& stats() const { return stats_; }
  std::uint64_t env_steps() const { return env_steps_; }

  std::vector<int> widths() const {
    return cfg_.train.widths(static_cast<int>(sim_.observation_size()), cfg_.planner.action_count());
  }

  /// Steps until `until` environment steps; `on_step` fires after each one.
  void run(std::uint64_t until, const std::function<void(std::uint64_t)>& on_step = {}) {
    while (env_steps_ < until) {
      step();
      if (on_step) on_step(env_steps_);
    }
  }

  void step() {
    if (!in_episode_) begin_episode();
    const GateConfig gate = cfg_.gate();
    const std::vector<double> s = sim_.observe(world_);
    const valuenet::Matrix q = valuenet::ensemble_forward(net_, s);
    const int a_rb = baseline_->action;
    const std::uint64_t n_rb = counts_.query(disc_(s, a_rb));
    const Exploration ex = explore_action(q, head_, a_rb, n_rb, gate, rng_);
    stats_.head_steps += ex.followed_head ? 1 : 0;
    stats_.random_steps += ex.random ? 1 : 0;

    env::StepOutcome out = sim_.step(world_, candidates_->action(ex.action));
    const bool absorbing = env::is_absorbing(out.terminal);
    std::optional<lattice::CandidateSet> next_cs;
    std::optional<lattice::BaselineChoice> next_base;
    int a_b = 0;
    if (!absorbing) {
      next_cs = sim_.candidates(out.next);
      next_base = sim_.baseline(out.next, *next_cs);
      a_b = next_base->action;
    }
    replay::Experience e;
    e.s = s;
    e.a = ex.action;
    e.r = out.reward;
    e.s_next = sim_.observe(out.next);
    e.terminal = absorbing;
    e.baseline_next_action = a_b;
    buf_.add(std::move(e), rng_);

    if (buf_.size() >= std::max<std::uint64_t>(cfg_.run.learning_starts, cfg_.train.batch_size)) train_batch();
    ++env_steps_;

    if (out.terminal != env::Terminal::none) {
      record(out.terminal);
      in_episode_ = false;
      candidates_.reset();
      baseline_.reset();
    } else {
      world_ = std::move(out.next);
      candidates_ = std::move(next_cs);
      baseline_ = std::move(next_base);
    }
  }

  void save(std::ostream& os) const {
    nlohmann::json h;
    h["config"] = config_to_json(cfg_);
    h["shapes"] = {{"widths", widths()}, {"n_e", net_.size()}};
    h["counters"] = {{"env_steps", env_steps_},
                     {"train_steps", net_.train_steps},
                     {"episode_index", episode_index_},
                     {"in_episode", in_episode_},
                     {"head", head_}};
    h["rng"] = {{"training", serialize_rng(rng_)}};
    h["stats"] = to_json(stats_);
    os.write(kCheckpointMagic, 8);
    io::put<std::uint32_t>(os, kCheckpointVersion);
    io::put_string(os, h.dump());
    detail::put_net(os, net_.heads);
    detail::put_net(os, net_.targets);
    counts_.save(os);
    buf_.save(os);
    io::put<std::uint8_t>(os, in_episode_ ? 1 : 0);
    if (in_episode_) detail::put_world(os, world_);
  }

  /// Restores a checkpoint written by a trainer with the same configuration.
  void load(std::istream& is) {
    const nlohmann::json h = read_header(is);
    if (h.at("config") != config_to_json(cfg_)) throw CheckpointError("checkpoint config does not match this run");
    if (h.at("shapes").at("widths").get<std::vector<int>>() != widths())
      throw CheckpointError("checkpoint network shape mismatch");
    const auto& c = h.at("counters");
    env_steps_ = c.at("env_steps");
    net_.train_steps = c.at("train_steps");
    episode_index_ = c.at("episode_index");
    in_episode_ = c.at("in_episode");
    head_ = c.at("head");
    rng_ = deserialize_rng(h.at("rng").at("training").get<std::string>());
    stats_ = stats_from_json(h.at("stats"));
    detail::get_net(is, net_.heads);
    detail::get_net(is, net_.targets);
    counts_.load(is);
    buf_.load(is);
    const bool mid_episode = io::get<std::uint8_t>(is) != 0;
    if (mid_episode != in_episode_) throw CheckpointError("checkpoint episode flag mismatch");
    candidates_.reset();
    baseline_.reset();
    if (in_episode_) {
      world_ = detail::get_world(is);
      candidates_ = sim_.candidates(world_);
      baseline_ = sim_.baseline(world_, *candidates_);
    }
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot write checkpoint " + path);
    save(os);
    os.flush();
    if (!os) throw CheckpointError("failed writing checkpoint " + path);
  }

  void load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint " + path);
    load(is);
  }

 private:
  void begin_episode() {
    world_ = sim_.reset(derive_seed(cfg_.seed, streams::kTrainEpisode, episode_index_));
    ++episode_index_;
    head_ = uniform_int(rng_, 0, cfg_.train.n_e - 1);
    candidates_ = sim_.candidates(world_);
    baseline_ = sim_.baseline(world_, *candidates_);
    in_episode_ = true;
  }

  void train_batch() {
    const double progress =
        cfg_.run.total_steps > 0 ? static_cast<double>(env_steps_) / static_cast<double>(cfg_.run.total_steps) : 1.0;
    const auto batch = buf_.sample(static_cast<std::size_t>(cfg_.train.batch_size), rng_, cfg_.replay.beta_at(progress));
    const auto r = valuenet::td_update(net_, batch.items, batch.weights, cfg_.train);
    if (!(r.max_abs_q <= cfg_.run.divergence_limit)) {
      std::ostringstream msg;
      msg << "ensemble diverged at env step " << env_steps_ << " (train step " << net_.train_steps
          << "): max |Q| = " << r.max_abs_q << ", limit " << cfg_.run.divergence_limit;
      throw DivergenceError(msg.str());
    }
    buf_.update_priorities(batch.handles, r.td_abs);
    for (const auto* x : batch.items) counts_.increment(disc_(x->s, x->a));
    double loss = 0.0;
    for (double l : r.head_loss) loss += l;
    stats_.last_loss = loss / static_cast<double>(r.head_loss.size());
    ++stats_.updates;
  }

  void record(env::Terminal t) {
    ++stats_.episodes;
    switch (t) {
      case env::Terminal::success: ++stats_.successes; break;
      case env::Terminal::collision: ++stats_.collisions; break;
      case env::Terminal::stuck: ++stats_.stucks; break;
      case env::Terminal::timeout: ++stats_.timeouts; break;
      case env::Terminal::none: break;
    }
  }

  RunConfig cfg_;
  env::Simulator sim_;
  counts::Discretizer disc_;
  valuenet::EnsembleNet net_;
  replay::PrioritizedBuffer buf_;
  counts::CountIndex counts_;
  Rng rng_;
  TrainStats stats_;

  std::uint64_t env_steps_ = 0;
  std::uint64_t episode_index_ = 0;
  bool in_episode_ = false;
  int head_ = 0;
  env::WorldState world_;
  std::optional<lattice::CandidateSet> candidates_;
  std::optional<lattice::BaselineChoice> baseline_;
};

/// Loads header, config, networks and counts; the replay section is not read.
inline PolicyCheckpoint read_policy_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path);
  PolicyCheckpoint p;
  p.header = read_header(is);
  p.config = config_from_json(p.header.at("config"));
  const auto widths = p.header.at("shapes").at("widths").get<std::vector<int>>();
  const int n_e = p.header.at("shapes").at("n_e");
  p.net = valuenet::init(widths, n_e, 0);
  detail::get_net(is, p.net.heads);
  detail::get_net(is, p.net.targets);
  p.net.train_steps = p.header.at("counters").at("train_steps");
  p.env_steps = p.header.at("counters").at("env_steps");
  p.counts = counts::CountIndex(static_cast<std::size_t>(widths.front()) + 1);
  p.counts.load(is);
  return p;
}

}  // namespace ubrl::agent
