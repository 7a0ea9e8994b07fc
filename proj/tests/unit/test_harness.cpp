#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "support/oracles.hpp"
#include "ubrl/harness/evaluate.hpp"
#include "ubrl/harness/runs.hpp"

using namespace ubrl;
using namespace ubrl::harness;

namespace {

agent::RunConfig tiny_run(std::uint64_t seed = 5) {
  agent::RunConfig c;
  c.seed = seed;
  c.scenario.seed = seed;
  c.train.hidden = {16, 16};
  c.train.n_e = 4;
  c.train.batch_size = 8;
  c.replay.capacity = 2000;
  c.run.total_steps = 400;
  c.run.checkpoint_every = 200;
  c.run.learning_starts = 100;
  return c;
}

std::string fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::path(::testing::TempDir()) / name;
  std::filesystem::remove_all(dir);
  return dir.string();
}

}  // namespace

TEST(Metrics, SuccessRateCountsCollisionsAndStucks) {
  EXPECT_DOUBLE_EQ(EvalReport::success_rate(3, 2, 1000), 0.995);
  EXPECT_DOUBLE_EQ(EvalReport::success_rate(0, 0, 1), 1.0);
  EXPECT_THROW(EvalReport::success_rate(0, 0, 0), ContractViolation);
}

TEST(Metrics, TimeoutsJoinStucksOnlyWhenConfigured) {
  EvalReport r;
  r.episodes = 10;
  r.collisions = 1;
  r.stucks = 1;
  r.timeouts = 2;
  r.successes = 6;
  EXPECT_TRUE(r.partition_holds());
  EXPECT_DOUBLE_EQ(r.p_s(), 0.6);
  r.timeout_counts_as_stuck = false;
  EXPECT_DOUBLE_EQ(r.p_s(), 0.8);
}

TEST(Metrics, WilsonBoundsSolveTheScoreEquation) {
  for (const auto& [p, n] : std::vector<std::pair<double, std::uint64_t>>{{0.5, 200}, {0.9, 200}, {0.02, 50}}) {
    const auto [lo, hi] = wilson_interval(p, n);
    const double z2 = 1.96 * 1.96;
    for (double b : {lo, hi}) EXPECT_NEAR((p - b) * (p - b), z2 * b * (1 - b) / n, 1e-12);
    EXPECT_LT(lo, p);
    EXPECT_GT(hi, p);
  }
  const auto [lo, hi] = wilson_interval(1.0, 200);
  EXPECT_NEAR(hi, 1.0, 1e-12);
  EXPECT_LT(lo, 1.0);
}

TEST(Metrics, SignTestMatchesExactTail) {
  for (std::uint64_t n : {10u, 50u, 80u})
    for (std::uint64_t k = 0; k <= n; k += 3)
      EXPECT_NEAR(sign_test_p(k, n), oracle::sign_test_upper_tail(k, n), 1e-10) << k << "/" << n;
}

TEST(Metrics, PolicyNamesRoundTrip) {
  for (Policy p : {Policy::baseline_only, Policy::drl_only, Policy::ubrl}) EXPECT_EQ(policy_from_string(to_string(p)), p);
  EXPECT_THROW(policy_from_string("random"), ConfigError);
}

TEST(Evaluate, BaselineIsDeterministicPerSeed) {
  const auto cfg = tiny_run();
  const env::Simulator sim(cfg.scenario, cfg.planner);
  EvalOptions opt;
  opt.episodes = 6;
  opt.seed = 11;
  opt.keep_actions = true;
  const auto a = evaluate(Policy::baseline_only, sim, {}, opt);
  const auto b = evaluate(Policy::baseline_only, sim, {}, opt);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.partition_holds());
  EXPECT_EQ(a.activation(), 0.0);
  opt.seed = 12;
  EXPECT_FALSE(evaluate(Policy::baseline_only, sim, {}, opt).records == a.records);
}

TEST(Evaluate, LearnedPoliciesNeedAModel) {
  const auto cfg = tiny_run();
  const env::Simulator sim(cfg.scenario, cfg.planner);
  EXPECT_THROW(evaluate(Policy::ubrl, sim, {}, EvalOptions{}), ContractViolation);
}

TEST(Evaluate, PThresOneReproducesBaselineTrace) {
  auto cfg = tiny_run();
  agent::Trainer t(cfg);
  t.run(300);
  const env::Simulator& sim = t.simulator();
  EvalOptions opt;
  opt.episodes = 4;
  opt.seed = 2;
  opt.keep_actions = true;
  std::stringstream base_trace, ubrl_trace, log;
  opt.trace = &base_trace;
  const auto base = evaluate(Policy::baseline_only, sim, {}, opt);
  auto gate = cfg.gate();
  gate.p_thres = 1.0;
  opt.trace = &ubrl_trace;
  opt.decision_log = &log;
  const auto u = evaluate(Policy::ubrl, sim, {&t.ensemble(), &t.counts(), gate}, opt);
  EXPECT_EQ(u.activation(), 0.0);
  EXPECT_EQ(base_trace.str(), ubrl_trace.str());
  ASSERT_EQ(u.records.size(), base.records.size());
  for (std::size_t i = 0; i < u.records.size(); ++i) EXPECT_EQ(u.records[i].actions, base.records[i].actions);

  std::uint64_t lines = 0;
  for (std::string line; std::getline(log, line); ++lines) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("source"), "baseline");
    EXPECT_EQ(j.at("a_u"), j.at("a_rb"));
  }
  EXPECT_EQ(lines, u.decisions);
}

TEST(Evaluate, DecisionLogShowsCountGateOpenAtZeroThreshold) {
  auto cfg = tiny_run();
  agent::Trainer t(cfg);
  t.run(300);
  auto gate = cfg.gate();
  gate.n_thres = 0;
  std::stringstream log;
  EvalOptions opt;
  opt.episodes = 3;
  opt.decision_log = &log;
  evaluate(Policy::ubrl, t.simulator(), {&t.ensemble(), &t.counts(), gate}, opt);
  int lines = 0;
  for (std::string line; std::getline(log, line); ++lines) EXPECT_TRUE(nlohmann::json::parse(line).at("count_ok"));
  EXPECT_GT(lines, 0);
}

TEST(Runs, ManifestRoundTripsAndReproducesCurve) {
  const auto cfg = tiny_run();
  const auto dir = fresh_dir("ubrl_run_manifest");
  const auto m = train_run(cfg, dir);
  EXPECT_EQ(m.status, "complete");
  ASSERT_EQ(m.checkpoints.size(), 3u);
  EXPECT_EQ(m.checkpoints[0].step, 0u);
  EXPECT_EQ(m.checkpoints[2].step, 400u);
  EXPECT_FALSE(std::filesystem::exists(std::filesystem::path(dir) / "PARTIAL"));

  const auto loaded = load_manifest((std::filesystem::path(dir) / "manifest.json").string());
  EXPECT_EQ(manifest_json(loaded), manifest_json(m));
  const auto c1 = eval_curve(m, dir, 4, 8);
  const auto c2 = eval_curve(loaded, dir, 4, 8);
  ASSERT_EQ(c1.points.size(), 3u);
  for (std::size_t i = 0; i < c1.points.size(); ++i) {
    EXPECT_EQ(c1.points[i].ubrl, c2.points[i].ubrl);
    EXPECT_EQ(c1.points[i].ubrl.p_s(), c2.points[i].ubrl.p_s());
  }
}

TEST(Runs, SameSeedRunsWriteIdenticalCheckpoints) {
  const auto cfg = tiny_run();
  const auto d1 = fresh_dir("ubrl_run_a"), d2 = fresh_dir("ubrl_run_b");
  const auto m1 = train_run(cfg, d1);
  train_run(cfg, d2);
  for (const auto& c : m1.checkpoints) {
    std::ifstream a(std::filesystem::path(d1) / c.path, std::ios::binary), b(std::filesystem::path(d2) / c.path, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_FALSE(sa.empty());
    EXPECT_EQ(sa, sb) << c.path;
  }
}

TEST(Runs, CountContrastPairsShareState) {
  auto cfg = tiny_run();
  agent::Trainer t(cfg);
  t.run(400);
  const auto pairs = count_contrast_pairs(t.buffer(), t.counts(), t.simulator().action_count(), 5, 20);
  const auto disc = counts::Discretizer::normalized(t.simulator().observation_size());
  for (const auto& p : pairs) {
    EXPECT_EQ(p.low.s, p.high.s);
    EXPECT_EQ(t.counts().query(disc(p.low.s, p.low.a)), 0u);
    EXPECT_GE(t.counts().query(disc(p.high.s, p.high.a)), 5u);
  }
  const auto probes = terminal_probes(t.buffer(), 10);
  for (const auto& r : inspect_uncertainty(t.ensemble(), t.counts(), probes)) {
    EXPECT_TRUE(r.probe.terminal);
    EXPECT_EQ(r.head_q.size(), 4u);
    EXPECT_NEAR(r.true_error, std::abs(r.mean - r.probe.true_value), 1e-15);
  }
}

TEST(Runs, SweepRejectsBadParameters) {
  EXPECT_THROW(sweep_param_from_string("alpha"), ConfigError);
  EXPECT_EQ(sweep_param_from_string("n_thres"), SweepParam::n_thres);
}

TEST(Runs, DrivingProbesAreEpisodeEnds) {
  auto cfg = tiny_run();
  agent::Trainer t(cfg);
  t.run(300);
  EvalOptions opt;
  opt.episodes = 5;
  opt.seed = 4;
  const PolicyModel model{&t.ensemble(), &t.counts(), cfg.gate()};
  const auto rep = evaluate(Policy::ubrl, t.simulator(), model, opt);
  const auto probes = driving_terminal_probes(Policy::ubrl, t.simulator(), model, opt);
  ASSERT_EQ(probes.size(), 5u);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto t_kind = rep.records[i].terminal;
    EXPECT_EQ(probes[i].terminal, env::is_absorbing(t_kind));
    if (t_kind == env::Terminal::success) EXPECT_EQ(probes[i].true_value, cfg.scenario.rewards.success);
    if (t_kind == env::Terminal::collision) EXPECT_EQ(probes[i].true_value, cfg.scenario.rewards.collision);
    EXPECT_EQ(probes[i].s.size(), t.simulator().observation_size());
  }
}
