// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <CLI11.hpp>

#include <bit>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "ubrl/agent/gating.hpp"
#include "ubrl/agent/run_config.hpp"
#include "ubrl/agent/trainer.hpp"
#include "ubrl/harness/evaluate.hpp"
#include "ubrl/harness/runs.hpp"
#include "ubrl/lattice/polynomial.hpp"
#include "ubrl/replay/prioritized_buffer.hpp"
#include "ubrl/valuenet/ensemble.hpp"

namespace fs = std::filesystem;
using namespace ubrl;
using Clock = std::chrono::steady_clock;
using Matrix = Eigen::MatrixXd;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  int id = 0;
  bool pass = false;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, bool pass, const std::string& detail) {
  verdicts.push_back({id, pass, detail});
  std::cout << "criterion " << std::setw(2) << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

void quintic() {
  std::mt19937_64 gen(101);
  std::uniform_real_distribution<double> pos(-50.0, 50.0), vel(-15.0, 15.0), acc(-5.0, 5.0), horizon(0.5, 8.0);
  double worst_residual = 0.0, worst_rel = 0.0;
  const auto t0 = Clock::now();
  for (int i = 0; i < 1000; ++i) {
    const lattice::BoundaryState a{pos(gen), vel(gen), acc(gen)}, b{pos(gen), vel(gen), acc(gen)};
    const double T = horizon(gen);
    const auto c = lattice::quintic_coeffs(a, b, T);
    const auto s0 = lattice::state_of(c, 0.0), s1 = lattice::state_of(c, T);
    for (double r : {s0.p - a.p, s0.v - a.v, s0.a - a.a, s1.p - b.p, s1.v - b.v, s1.a - b.a})
      worst_residual = std::max(worst_residual, std::abs(r));
    const auto ref = oracle::dense_quintic(a, b, T);
    double scale = 0.0;
    for (double v : ref) scale = std::max(scale, std::abs(v));
    for (int k = 0; k < 6; ++k) worst_rel = std::max(worst_rel, std::abs(c[k] - ref[k]) / scale);
  }
  const double secs = seconds_since(t0);
  report(1, worst_residual < 1e-6 && worst_rel < 1e-8 && secs < 1.0,
         "max residual " + fmt(worst_residual) + ", max coefficient rel diff " + fmt(worst_rel) + ", " +
             fmt(secs, 3) + " s");
}

void gradient_check() {
  std::mt19937_64 gen(202);
  std::uniform_int_distribution<int> width(2, 9), depth(1, 3), batch(1, 8);
  double worst = 0.0;
  const auto t0 = Clock::now();
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> widths{width(gen)};
    const int hidden = depth(gen);
    for (int h = 0; h < hidden; ++h) widths.push_back(width(gen));
    widths.push_back(width(gen));
    Rng rng(gen());
    const auto net = valuenet::Mlp::random(widths, rng);
    const int cols = batch(gen);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix x(widths.front(), cols), d_out(widths.back(), cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(gen);
    for (Eigen::Index i = 0; i < d_out.size(); ++i) d_out.data()[i] = u(gen);
    valuenet::Mlp::Tape tape;
    net.forward(x, tape);
    std::vector<double> analytic;
    for (const auto& l : net.backward(tape, d_out)) {
      analytic.insert(analytic.end(), l.w.data(), l.w.data() + l.w.size());
      analytic.insert(analytic.end(), l.b.data(), l.b.data() + l.b.size());
    }
    const auto numeric = oracle::numeric_gradient(net, x, d_out, 1e-5);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      num += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      den += analytic[i] * analytic[i] + numeric[i] * numeric[i];
    }
    worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-12));
  }
  const double secs = seconds_since(t0);
  report(2, worst < 1e-4 && secs < 30.0, "worst relative error " + fmt(worst) + " over 20 networks, " + fmt(secs, 3) + " s");
}

/// One-hot chain states; the absorbing state has its own slot so every s' is encodable.
std::vector<double> one_hot(int s, int n) {
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  v[static_cast<std::size_t>(s)] = 1.0;
  return v;
}

void chain_fixed_point() {
  const oracle::Chain chain;
  valuenet::TrainConfig tc;
  tc.hidden = {32, 32};
  tc.alpha = 0.01;
  const auto truth = oracle::chain_fixed_point(chain, tc.gamma);
  replay::ReplayConfig rc;
  rc.capacity = 256;
  replay::PrioritizedBuffer buf(rc, tc.n_e);
  Rng rng(303);
  for (int copy = 0; copy < 16; ++copy)
    for (int s = 0; s + 1 < chain.n; ++s)
      for (int a = 0; a < 2; ++a) {
        replay::Experience e;
        e.s = one_hot(s, chain.n);
        e.a = a;
        e.r = chain.reward(s, a);
        e.s_next = one_hot(chain.next(s, a), chain.n);
        e.terminal = chain.absorbing(s, a);
        e.baseline_next_action = 1;
        buf.add(std::move(e), rng);
      }
  auto net = valuenet::init(tc.widths(chain.n, 2), tc.n_e, 304);
  auto worst_error = [&] {
    double worst = 0.0;
    for (const auto& head : net.heads)
      for (int s = 0; s + 1 < chain.n; ++s) {
        const auto q = head.forward(one_hot(s, chain.n));
        for (int a = 0; a < 2; ++a) worst = std::max(worst, std::abs(q(a) - truth[static_cast<std::size_t>(s)][a]));
      }
    return worst;
  };
  const auto t0 = Clock::now();
  constexpr int kUpdates = 50000;
  double err = 0.0;
  for (int k = 1; k <= kUpdates; ++k) {
    const auto batch = buf.sample(static_cast<std::size_t>(tc.batch_size), rng, rc.beta_at(double(k) / kUpdates));
    const auto r = valuenet::td_update(net, batch.items, batch.weights, tc);
    buf.update_priorities(batch.handles, r.td_abs);
  }
  err = worst_error();
  const double secs = seconds_since(t0);
  report(3, err < 0.01 && secs < 120.0,
         "max |Q_head - Q*| " + fmt(err) + " after " + std::to_string(kUpdates) + " updates, " + fmt(secs, 3) + " s");
}

void mask_share() {
  replay::ReplayConfig rc;
  rc.capacity = 1024;
  const int n_e = 10;
  replay::PrioritizedBuffer buf(rc, n_e);
  Rng rng(808);
  std::uint64_t ones = 0;
  constexpr int kInserts = 100000;
  for (int i = 0; i < kInserts; ++i) {
    replay::Experience e;
    e.s = {0.0};
    e.s_next = {0.0};
    const auto h = buf.add(std::move(e), rng);
    ones += static_cast<std::uint64_t>(std::popcount(buf.at(h.slot).mask));
  }
  const double share = static_cast<double>(ones) / (double(kInserts) * n_e);

  auto net = valuenet::init({3, 8, 2}, n_e, 809);
  const auto before = net;
  replay::Experience x;
  x.s = {0.3, -0.2, 0.9};
  x.s_next = {0.0, 0.0, 0.0};
  x.a = 1;
  x.r = 1.0;
  x.terminal = true;
  x.mask = (std::uint64_t{1} << n_e) - 1;
  x.mask &= ~(std::uint64_t{1} << 4);
  const std::vector<const replay::Experience*> batch{&x};
  const std::vector<double> w{1.0};
  valuenet::td_update(net, batch, w, valuenet::TrainConfig{});
  bool untouched = net.heads[4] == before.heads[4];
  bool others_moved = true;
  for (int i = 0; i < n_e; ++i)
    if (i != 4) others_moved = others_moved && !(net.heads[static_cast<std::size_t>(i)] == before.heads[static_cast<std::size_t>(i)]);
  report(8, share >= 0.79 && share <= 0.81 && untouched && others_moved,
         "mask share " + fmt(share, 5) + " over 1e5 insertions; masked-out head " +
             (untouched ? "bitwise unchanged" : "CHANGED") + (others_moved ? "" : "; some in-subset head did not move"));
}

void prioritized_sampling() {
  replay::ReplayConfig rc;
  rc.capacity = 8;
  replay::PrioritizedBuffer buf(rc, 1);
  std::vector<replay::Handle> hs;
  for (int i = 0; i < 8; ++i) {
    replay::Experience e;
    e.s = {double(i)};
    e.s_next = {0.0};
    hs.push_back(buf.insert(std::move(e)));
  }
  const std::vector<double> td{0.1, 0.5, 1.0, 2.0, 0.05, 3.0, 0.7, 1.5};
  buf.update_priorities(hs, td);
  Rng rng(909);
  std::vector<double> freq(8, 0.0);
  constexpr int kDraws = 100000, kBatch = 8;
  for (int k = 0; k < kDraws / kBatch; ++k)
    for (const auto& h : buf.sample(kBatch, rng, 0.4).handles) freq[h.slot] += 1.0;
  double worst_z = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    const double p = std::pow(td[i] + rc.eps, rc.alpha) / buf.tree().total();
    const double sd = std::sqrt(kDraws * p * (1 - p));
    worst_z = std::max(worst_z, std::abs(freq[i] - kDraws * p) / sd);
  }

  std::mt19937_64 gen(910);
  std::uniform_int_distribution<std::size_t> pick(0, 4095);
  std::uniform_real_distribution<double> val(0.0, 10.0);
  replay::SumTree tree(4096);
  double worst_gap = 0.0;
  for (int k = 0; k < 200000; ++k) {
    tree.set(pick(gen), val(gen));
    if (k % 997 == 0) worst_gap = std::max(worst_gap, std::abs(tree.total() - tree.leaf_sum()));
  }
  worst_gap = std::max(worst_gap, std::abs(tree.total() - tree.leaf_sum()));
  report(9, worst_z < 3.0 && worst_gap < 1e-9,
         "worst frequency deviation " + fmt(worst_z, 3) + " sigma over 1e5 draws; max |root - leaf sum| " + fmt(worst_gap));
}

void arithmetic() {
  const double ps = harness::EvalReport::success_rate(3, 2, 1000);
  Matrix q(10, 2);
  for (int i = 0; i < 10; ++i) {
    q(i, 0) = 0.5;
    q(i, 1) = i < 7 ? 0.6 : 0.4;
  }
  const double po = agent::vote(q, 1, 0).fraction;
  std::mt19937_64 gen(1111);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> lvl(0, 3), heads(2, 12), acts(2, 8);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Matrix m(heads(gen), acts(gen));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = trial % 2 ? u(gen) : 0.25 * lvl(gen);
    const int a_rb = static_cast<int>(gen() % static_cast<std::uint64_t>(m.cols()));
    mismatches += agent::drl_action(m, a_rb) == oracle::vote_winner(m, a_rb) ? 0 : 1;
  }
  report(11, ps == 0.995 && po == 0.7 && mismatches == 0,
         "P_s(3,2,1000) = " + fmt(ps, 15) + ", P_o(7/10) = " + fmt(po, 15) + ", vote mismatches " +
             std::to_string(mismatches) + "/1000");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct DeskRun {
  harness::RunManifest manifest;
  std::string dir;
  double train_seconds = 0.0;
};

DeskRun desk_run(const agent::RunConfig& cfg, const std::string& dir) {
  fs::remove_all(dir);
  const auto t0 = Clock::now();
  DeskRun r;
  r.dir = dir;
  r.manifest = harness::train_run(cfg, dir, &std::cout);
  r.train_seconds = seconds_since(t0);
  return r;
}

void desk_scale(const agent::RunConfig& cfg, const std::string& work, std::uint64_t episodes, std::uint64_t eval_seed) {
  std::cout << "desk run A: " << cfg.run.total_steps << " steps, checkpoint every " << cfg.run.checkpoint_every
            << std::endl;
  const auto a = desk_run(cfg, (fs::path(work) / "run_a").string());
  std::cout << "trained in " << fmt(a.train_seconds, 4) << " s; evaluating " << a.manifest.checkpoints.size()
            << " checkpoints" << std::endl;
  const auto curve = harness::eval_curve(a.manifest, a.dir, episodes, eval_seed);
  {
    std::ofstream csv(fs::path(work) / "curve.csv");
    harness::write_curve_csv(csv, curve);
  }
  const auto& base = curve.baseline;
  std::cout << "baseline P_s " << fmt(base.p_s()) << std::endl;
  for (const auto& p : curve.points)
    std::cout << "  step " << p.step << ": UBRL P_s " << fmt(p.ubrl.p_s()) << ", activation "
              << fmt(p.ubrl.activation()) << " (collisions " << p.ubrl.collisions << ", stucks " << p.ubrl.stucks
              << ", timeouts " << p.ubrl.timeouts << ")" << std::endl;

  // 4: lower bound at every checkpoint.
  const std::size_t intermediate = curve.points.size() >= 2 ? curve.points.size() - 2 : 0;
  const double floor = base.p_s() - 2.0 * harness::binomial_se(base.p_s(), base.episodes);
  bool bound_ok = intermediate >= 6;
  double worst_margin = 1.0;
  for (const auto& p : curve.points) {
    bound_ok = bound_ok && p.ubrl.p_s() >= floor;
    worst_margin = std::min(worst_margin, p.ubrl.p_s() - floor);
  }
  report(4, bound_ok && a.train_seconds < 7200.0,
         std::to_string(intermediate) + " intermediate checkpoints; floor " + fmt(floor) + ", worst margin " +
             fmt(worst_margin) + "; training " + fmt(a.train_seconds, 4) + " s");

  // 5: learning.
  const auto& first = curve.points.front().ubrl;
  const auto& last = curve.points.back().ubrl;
  const auto ci_first = harness::wilson_interval(first.p_s(), first.episodes);
  const auto ci_last = harness::wilson_interval(last.p_s(), last.episodes);
  const bool learned = ci_last.first > ci_first.second;
  const bool more_active = last.activation() > first.activation();
  report(5, learned && more_active,
         "first P_s " + fmt(first.p_s()) + " [" + fmt(ci_first.first) + ", " + fmt(ci_first.second) + "], final P_s " +
             fmt(last.p_s()) + " [" + fmt(ci_last.first) + ", " + fmt(ci_last.second) + "]; activation " +
             fmt(first.activation()) + " -> " + fmt(last.activation()));

  // 6: degeneracy on the final checkpoint.
  const auto final_path = (fs::path(a.dir) / a.manifest.checkpoints.back().path).string();
  const auto ck = agent::read_policy_checkpoint(final_path);
  const env::Simulator sim(ck.config.scenario, ck.config.planner);
  harness::EvalOptions opt;
  opt.episodes = episodes;
  opt.seed = eval_seed;
  opt.keep_actions = true;
  opt.timeout_counts_as_stuck = ck.config.run.timeout_counts_as_stuck;
  std::ostringstream base_trace, strict_trace;
  opt.trace = &base_trace;
  const auto base_rep = harness::evaluate(harness::Policy::baseline_only, sim, {}, opt);
  auto strict_gate = ck.config.gate();
  strict_gate.p_thres = 1.0;
  opt.trace = &strict_trace;
  const auto strict = harness::evaluate(harness::Policy::ubrl, sim, {&ck.net, &ck.counts, strict_gate}, opt);
  const bool trace_same = base_trace.str() == strict_trace.str();
  auto open_gate = ck.config.gate();
  open_gate.n_thres = 0;
  std::stringstream log;
  opt.trace = nullptr;
  opt.decision_log = &log;
  harness::evaluate(harness::Policy::ubrl, sim, {&ck.net, &ck.counts, open_gate}, opt);
  std::uint64_t decisions = 0, rejected = 0;
  for (std::string line; std::getline(log, line); ++decisions)
    rejected += nlohmann::json::parse(line).at("count_ok").get<bool>() ? 0 : 1;
  report(6, strict.activation() == 0.0 && trace_same && strict.p_s() == base_rep.p_s() && rejected == 0 && decisions > 0,
         "p_thres=1: activation " + fmt(strict.activation()) + ", trace " + (trace_same ? "identical" : "DIFFERS") +
             "; n_thres=0: " + std::to_string(rejected) + " count-gate rejections in " + std::to_string(decisions) +
             " logged decisions");

  // 7: uncertainty ordering on terminal state-actions met while driving the final policy.
  harness::EvalOptions probe_opt;
  probe_opt.episodes = 2 * episodes;
  probe_opt.seed = eval_seed + 1;
  const auto driven = harness::driving_terminal_probes(harness::Policy::ubrl, sim, {&ck.net, &ck.counts, ck.config.gate()},
                                                       probe_opt);
  std::vector<double> sig_zero, sig_high;
  for (const auto& r : harness::inspect_uncertainty(ck.net, ck.counts, driven)) {
    if (r.count == 0) sig_zero.push_back(r.sigma);
    if (r.count >= 100) sig_high.push_back(r.sigma);
  }
  const std::size_t n_pairs = std::min(sig_zero.size(), sig_high.size());
  double mean_lo = 0.0, mean_hi = 0.0;
  std::uint64_t wins = 0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    mean_lo += sig_zero[i];
    mean_hi += sig_high[i];
    wins += sig_zero[i] > sig_high[i] ? 1 : 0;
  }
  if (n_pairs > 0) {
    mean_lo /= double(n_pairs);
    mean_hi /= double(n_pairs);
  }
  const double p_sign = harness::sign_test_p(wins, n_pairs);
  report(7, n_pairs >= 50 && mean_lo > mean_hi && p_sign < 0.01,
         std::to_string(driven.size()) + " terminal probes, " + std::to_string(n_pairs) +
             " pairs; mean sigma zero-count " + fmt(mean_lo) + " vs count>=100 " + fmt(mean_hi) + "; " +
             std::to_string(wins) + " wins, sign-test p " + fmt(p_sign));

  // 10: determinism across two full runs.
  std::cout << "desk run B (same seed)" << std::endl;
  const auto b = desk_run(cfg, (fs::path(work) / "run_b").string());
  bool same_series = a.manifest.checkpoints.size() == b.manifest.checkpoints.size();
  std::size_t differing = 0;
  for (std::size_t i = 0; same_series && i < a.manifest.checkpoints.size(); ++i) {
    const auto& ca = a.manifest.checkpoints[i];
    const auto& cb = b.manifest.checkpoints[i];
    if (ca.step != cb.step || slurp(fs::path(a.dir) / ca.path) != slurp(fs::path(b.dir) / cb.path)) ++differing;
  }
  const auto curve_b = harness::eval_curve(b.manifest, b.dir, episodes, eval_seed);
  bool same_reports = curve_b.baseline == curve.baseline && curve_b.points.size() == curve.points.size();
  for (std::size_t i = 0; same_reports && i < curve.points.size(); ++i)
    same_reports = curve.points[i].step == curve_b.points[i].step && curve.points[i].ubrl == curve_b.points[i].ubrl;
  report(10, same_series && differing == 0 && same_reports,
         std::to_string(a.manifest.checkpoints.size()) + " checkpoints, " + std::to_string(differing) +
             " differing; eval reports " + (same_reports ? "identical" : "DIFFER"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string config_path = UBRL_DESK_CONFIG;
  std::string work = "acceptance_work";
  std::uint64_t episodes = 200;
  std::uint64_t eval_seed = 20240601;
  bool skip_desk = false;
  app.add_option("--config", config_path, "desk-scale run config")->check(CLI::ExistingFile);
  app.add_option("--work", work, "directory for run outputs");
  app.add_option("--episodes", episodes, "evaluation episodes per checkpoint");
  app.add_option("--eval-seed", eval_seed, "seed of the shared evaluation episodes");
  app.add_flag("--skip-desk", skip_desk, "only run the fast checks (1, 2, 3, 8, 9, 11)");
  CLI11_PARSE(app, argc, argv);

  try {
    quintic();
    gradient_check();
    chain_fixed_point();
    mask_share();
    prioritized_sampling();
    arithmetic();
    if (!skip_desk) {
      fs::create_directories(work);
      desk_scale(agent::load_config(config_path), work, episodes, eval_seed);
    }
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 2;
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& x, const Verdict& y) { return x.id < y.id; });
  std::cout << "\nsummary\n";
  bool all = true;
  for (const auto& v : verdicts) {
    std::cout << "  " << std::setw(2) << v.id << " " << (v.pass ? "PASS" : "FAIL") << '\n';
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
