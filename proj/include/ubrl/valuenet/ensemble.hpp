#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ubrl/common/error.hpp"
#include "ubrl/common/rng.hpp"
#include "ubrl/replay/experience.hpp"
#include "ubrl/valuenet/mlp.hpp"

namespace ubrl::valuenet {

struct TrainConfig {
  double alpha = 5e-4;
  double gamma = 0.995;
  int batch_size = 64;
  int tau_sync = 1000;
  double k_e = 0.01;
  double sigma_thres = 0.05;
  int n_e = 10;
  std::vector<int> hidden{128, 128, 64};

  void validate() const {
    if (!(alpha > 0.0)) throw ConfigError("train: alpha must be positive");
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("train: gamma must lie in [0, 1]");
    if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
    if (tau_sync < 1) throw ConfigError("train: tau_sync must be positive");
    if (k_e < 0.0 || k_e > 1.0) throw ConfigError("train: k_e must lie in [0, 1]");
    if (sigma_thres < 0.0) throw ConfigError("train: sigma_thres must be non-negative");
    if (n_e < 1 || n_e > 64) throw ConfigError("train: n_e must lie in [1, 64]");
    for (int h : hidden)
      if (h < 1) throw ConfigError("train: hidden widths must be positive");
  }

  std::vector<int> widths(int inputs, int actions) const {
    std::vector<int> w{inputs};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(actions);
    return w;
  }
};

struct EnsembleNet {
  std::vector<Mlp> heads;
  std::vector<Mlp> targets;
  std::uint64_t train_steps = 0;

  int size() const { return static_cast<int>(heads.size()); }
  int action_count() const { return heads.front().output_size(); }
  int input_size() const { return heads.front().input_size(); }

  friend bool operator==(const EnsembleNet&, const EnsembleNet&) = default;
};

/// Heads drawn independently from per-head child seeds; targets start as copies.
inline EnsembleNet init(const std::vector<int>& widths, int n_e, std::uint64_t seed) {
  EnsembleNet e;
  for (int i = 0; i < n_e; ++i) {
    Rng rng(derive_seed(seed, streams::kNetworkInit, static_cast<std::uint64_t>(i)));
    e.heads.push_back(Mlp::random(widths, rng));
  }
  e.targets = e.heads;
  return e;
}

inline void sync_targets(EnsembleNet& e) { e.targets = e.heads; }

/// Row i holds head i's action values at s.
inline Matrix ensemble_forward(const EnsembleNet& e, std::span<const double> s) {
  Matrix q(e.size(), e.action_count());
  for (int i = 0; i < e.size(); ++i) q.row(i) = e.heads[static_cast<std::size_t>(i)].forward(s).transpose();
  return q;
}

struct HeadStats {
  double mean = 0.0;
  double sigma = 0.0;  ///< population standard deviation across heads
};

inline HeadStats column_stats(const Matrix& q, int a) {
  const auto col = q.col(a);
  HeadStats h;
  h.mean = col.mean();
  h.sigma = std::sqrt((col.array() - h.mean).square().mean());
  return h;
}

inline HeadStats head_stats(const EnsembleNet& e, std::span<const double> s, int a) {
  return column_stats(ensemble_forward(e, s), a);
}

struct TdResult {
  std::vector<double> td_abs;       ///< per sample, mean |delta| over the heads that trained on it
  std::vector<double> head_loss;    ///< per head, weighted mean squared error before the step
  std::vector<int> head_samples;    ///< per head, effective batch size
  double max_abs_q = 0.0;           ///< largest |Q| seen in the online forward pass
};

namespace detail {

inline Matrix stack_states(std::span<const replay::Experience* const> batch, bool next) {
  const auto rows = static_cast<Eigen::Index>(batch.front()->s.size());
  Matrix x(rows, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& v = next ? batch[j]->s_next : batch[j]->s;
    if (static_cast<Eigen::Index>(v.size()) != rows) throw ContractViolation("inconsistent state length in batch");
    x.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Vector>(v.data(), rows);
  }
  return x;
}

}  // namespace detail

/// Target y = r for absorbing transitions, else r + gamma * Q_target(s', a_b).
inline std::vector<double> td_targets(const Mlp& target, std::span<const replay::Experience* const> batch,
                                      const Matrix& next_states, double gamma) {
  const Matrix qn = target.forward(next_states);
  std::vector<double> y(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& x = *batch[j];
    y[j] = x.terminal ? x.r : x.r + gamma * qn(x.baseline_next_action, static_cast<Eigen::Index>(j));
  }
  return y;
}

/**
 * One SGD step per head on its bootstrap subset of the batch, minimizing the
 * importance-weighted mean of (y - Q)^2 / 2. Heads with no selected samples are
 * left untouched. Targets are synced every `tau_sync` calls.
 */
inline TdResult td_update(EnsembleNet& e, std::span<const replay::Experience* const> batch,
                          std::span<const double> weights, const TrainConfig& cfg) {
  if (batch.empty()) throw ContractViolation("td_update needs a non-empty batch");
  if (weights.size() != batch.size()) throw ContractViolation("one importance weight per sample required");
  const int n_e = e.size();
  const auto cols = static_cast<Eigen::Index>(batch.size());
  for (const auto* x : batch)
    if (x->a < 0 || x->a >= e.action_count() || x->baseline_next_action < 0 ||
        x->baseline_next_action >= e.action_count())
      throw ContractViolation("action index out of range in batch");

  const Matrix states = detail::stack_states(batch, false);
  const Matrix next_states = detail::stack_states(batch, true);

  TdResult out;
  out.td_abs.assign(batch.size(), 0.0);
  out.head_loss.assign(static_cast<std::size_t>(n_e), 0.0);
  out.head_samples.assign(static_cast<std::size_t>(n_e), 0);
  std::vector<double> all_heads(batch.size(), 0.0);
  std::vector<int> used_by(batch.size(), 0);

  for (int i = 0; i < n_e; ++i) {
    const auto hi = static_cast<std::size_t>(i);
    Mlp& head = e.heads[hi];
    const std::vector<double> y = td_targets(e.targets[hi], batch, next_states, cfg.gamma);
    Mlp::Tape tape;
    const Matrix q = head.forward(states, tape);
    out.max_abs_q = std::max(out.max_abs_q, q.cwiseAbs().maxCoeff());

    int m = 0;
    for (const auto* x : batch) m += x->in_subset(i) ? 1 : 0;
    out.head_samples[hi] = m;

    Matrix d_out = Matrix::Zero(q.rows(), cols);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      const auto& x = *batch[ju];
      const double delta = y[ju] - q(x.a, j);
      all_heads[ju] += std::abs(delta);
      if (!x.in_subset(i)) continue;
      out.td_abs[ju] += std::abs(delta);
      ++used_by[ju];
      loss += 0.5 * weights[ju] * delta * delta;
      d_out(x.a, j) = -weights[ju] * delta / m;
    }
    if (m == 0) continue;
    out.head_loss[hi] = loss / m;
    head.descend(head.backward(tape, d_out), cfg.alpha);
  }
  for (std::size_t j = 0; j < batch.size(); ++j)
    out.td_abs[j] = used_by[j] > 0 ? out.td_abs[j] / used_by[j] : all_heads[j] / n_e;

  ++e.train_steps;
  if (cfg.tau_sync > 0 && e.train_steps % static_cast<std::uint64_t>(cfg.tau_sync) == 0) sync_targets(e);
  return out;
}

}  // namespace ubrl::valuenet
