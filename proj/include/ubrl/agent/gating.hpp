#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "ubrl/common/error.hpp"
#include "ubrl/common/rng.hpp"
#include "ubrl/valuenet/ensemble.hpp"

namespace ubrl::agent {

using valuenet::Matrix;

struct GateConfig {
  double p_thres = 0.4;
  std::uint64_t n_thres = 40;
  double sigma_thres = 0.05;
  double k_e = 0.01;

  void validate() const {
    if (p_thres < 0.0 || p_thres > 1.0) throw ConfigError("gate: p_thres must lie in [0, 1]");
    if (sigma_thres < 0.0) throw ConfigError("gate: sigma_thres must be non-negative");
    if (k_e < 0.0 || k_e > 1.0) throw ConfigError("gate: k_e must lie in [0, 1]");
  }
};

struct Vote {
  std::vector<std::uint8_t> bits;  ///< per head: 1 iff Q_n(s, a) > Q_n(s, a_rb)
  int favorable = 0;
  double fraction = 0.0;
};

/// `q` is the n_e x |A| ensemble matrix at one state.
inline Vote vote(const Matrix& q, int a, int a_rb) {
  Vote v;
  v.bits.resize(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index n = 0; n < q.rows(); ++n) {
    const bool up = q(n, a) > q(n, a_rb);
    v.bits[static_cast<std::size_t>(n)] = up ? 1 : 0;
    v.favorable += up ? 1 : 0;
  }
  v.fraction = static_cast<double>(v.favorable) / static_cast<double>(q.rows());
  return v;
}

/// Most favorable votes against a_rb; ties go to the higher mean Q, then the lower index.
inline int drl_action(const Matrix& q, int a_rb) {
  int best = 0;
  int best_votes = -1;
  double best_mean = 0.0;
  for (int a = 0; a < q.cols(); ++a) {
    const int votes = vote(q, a, a_rb).favorable;
    const double mean = q.col(a).mean();
    if (votes > best_votes || (votes == best_votes && mean > best_mean)) {
      best = a;
      best_votes = votes;
      best_mean = mean;
    }
  }
  return best;
}

struct Activation {
  bool accept = false;
  bool mean_ok = false;
  bool vote_ok = false;
  bool count_ok = false;
  double mean_gap = 0.0;  ///< mean Q(a_rl) - mean Q(a_rb)
  Vote votes;
};

inline Activation activation_check(const Matrix& q, int a_rl, int a_rb, std::uint64_t n_rl, std::uint64_t n_rb,
                                   const GateConfig& cfg) {
  Activation out;
  out.votes = vote(q, a_rl, a_rb);
  out.mean_gap = q.col(a_rl).mean() - q.col(a_rb).mean();
  out.mean_ok = out.mean_gap >= 0.0;
  out.vote_ok = out.votes.fraction > cfg.p_thres;
  out.count_ok = n_rl >= cfg.n_thres && n_rb >= cfg.n_thres;
  out.accept = out.mean_ok && out.vote_ok && out.count_ok;
  return out;
}

enum class Source { drl, baseline };

inline std::string_view to_string(Source s) { return s == Source::drl ? "drl" : "baseline"; }

struct Decision {
  int action = 0;
  Source source = Source::baseline;
  int a_rl = 0;
  int a_rb = 0;
  double p_o = 0.0;
  std::vector<std::uint8_t> votes;
  double mean_gap = 0.0;
  std::uint64_t n_rl = 0;
  std::uint64_t n_rb = 0;
  double sigma_rl = 0.0;
  double sigma_rb = 0.0;
  bool mean_ok = false;
  bool vote_ok = false;
  bool count_ok = false;
};

/// Gated decision at one state. `count_of(a)` returns N_t(s, a).
template <class CountFn>
Decision act(const Matrix& q, int a_rb, CountFn&& count_of, const GateConfig& cfg) {
  Decision d;
  d.a_rb = a_rb;
  d.a_rl = drl_action(q, a_rb);
  d.n_rl = count_of(d.a_rl);
  d.n_rb = d.a_rl == a_rb ? d.n_rl : count_of(a_rb);
  const Activation act = activation_check(q, d.a_rl, a_rb, d.n_rl, d.n_rb, cfg);
  d.p_o = act.votes.fraction;
  d.votes = act.votes.bits;
  d.mean_gap = act.mean_gap;
  d.mean_ok = act.mean_ok;
  d.vote_ok = act.vote_ok;
  d.count_ok = act.count_ok;
  d.sigma_rl = valuenet::column_stats(q, d.a_rl).sigma;
  d.sigma_rb = valuenet::column_stats(q, a_rb).sigma;
  if (act.accept) {
    d.action = d.a_rl;
    d.source = Source::drl;
  } else {
    d.action = a_rb;
    d.source = Source::baseline;
  }
  return d;
}

/// Greedy action of one head; ties go to the lower index.
inline int greedy(const Matrix& q, int head) {
  int best = 0;
  for (int a = 1; a < q.cols(); ++a)
    if (q(head, a) > q(head, best)) best = a;
  return best;
}

struct Exploration {
  int action = 0;
  bool followed_head = false;  ///< ensemble agreed, so head k (or the epsilon draw) chose
  bool random = false;
};

/**
 * Behaviour policy while training. Once the ensemble agrees on the baseline
 * action (small spread, enough training) the episode's head k acts
 * epsilon-greedily with epsilon = k_e; otherwise the baseline acts.
 */
inline Exploration explore_action(const Matrix& q, int head, int a_rb, std::uint64_t n_rb, const GateConfig& cfg,
                                  Rng& rng) {
  Exploration out;
  const double sigma = valuenet::column_stats(q, a_rb).sigma;
  if (!(sigma < cfg.sigma_thres && n_rb > cfg.n_thres)) {
    out.action = a_rb;
    return out;
  }
  out.followed_head = true;
  if (bernoulli(rng, cfg.k_e)) {
    out.random = true;
    out.action = uniform_int(rng, 0, static_cast<int>(q.cols()) - 1);
  } else {
    out.action = greedy(q, head);
  }
  return out;
}

}  // namespace ubrl::agent
