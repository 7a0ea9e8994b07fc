#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "ubrl/common/binary_io.hpp"
#include "ubrl/common/error.hpp"
#include "ubrl/common/rng.hpp"
#include "ubrl/replay/experience.hpp"

namespace ubrl::replay {

/// Binary tree of partial sums over a fixed number of leaves.
class SumTree {
 public:
  SumTree() = default;
  explicit SumTree(std::size_t leaves) : leaves_(leaves) {
    if (leaves == 0) throw ConfigError("sum tree needs at least one leaf");
    base_ = 1;
    while (base_ < leaves) base_ <<= 1;
    node_.assign(2 * base_, 0.0);
  }

  std::size_t leaves() const { return leaves_; }
  double total() const { return node_[1]; }
  double leaf(std::size_t i) const { return node_[base_ + i]; }

  /// Parents are recomputed from their children, never patched by deltas.
  void set(std::size_t i, double value) {
    if (i >= leaves_) throw ContractViolation("sum tree leaf out of range");
    if (!(value >= 0.0) || !std::isfinite(value)) throw ContractViolation("sum tree values must be finite and >= 0");
    std::size_t k = base_ + i;
    node_[k] = value;
    for (k >>= 1; k >= 1; k >>= 1) node_[k] = node_[2 * k] + node_[2 * k + 1];
  }

  /// Leaf whose cumulative interval contains u, for u in [0, total()).
  std::size_t find(double u) const {
    std::size_t k = 1;
    while (k < base_) {
      const double left = node_[2 * k];
      if (u < left || node_[2 * k + 1] <= 0.0) {
        k = 2 * k;
      } else {
        u -= left;
        k = 2 * k + 1;
      }
    }
    std::size_t i = k - base_;
    // Round-off can land on an empty leaf at the right edge; step back to a live one.
    while (i > 0 && node_[base_ + i] <= 0.0) --i;
    return i;
  }

  double leaf_sum() const {
    double s = 0.0;
    for (std::size_t i = 0; i < leaves_; ++i) s += node_[base_ + i];
    return s;
  }

  const std::vector<double>& raw() const { return node_; }
  void restore(std::vector<double> nodes) {
    if (nodes.size() != 2 * base_) throw CheckpointError("sum tree shape mismatch");
    node_ = std::move(nodes);
  }

 private:
  std::size_t leaves_ = 0;
  std::size_t base_ = 0;
  std::vector<double> node_;
};

struct ReplayConfig {
  std::size_t capacity = 100000;
  double alpha = 0.6;        ///< priority exponent
  double beta_start = 0.4;   ///< importance-sampling exponent, annealed to beta_end
  double beta_end = 1.0;
  double eps = 1e-3;
  double p_share = 0.8;      ///< Bernoulli parameter of each mask bit

  void validate() const {
    if (capacity == 0) throw ConfigError("replay: capacity must be positive");
    if (alpha < 0.0) throw ConfigError("replay: alpha must be non-negative");
    if (beta_start < 0.0 || beta_end < 0.0) throw ConfigError("replay: beta must be non-negative");
    if (!(eps > 0.0)) throw ConfigError("replay: eps must be positive");
    if (p_share < 0.0 || p_share > 1.0) throw ConfigError("replay: p_share must lie in [0, 1]");
  }

  double beta_at(double progress) const {
    const double u = std::clamp(progress, 0.0, 1.0);
    return beta_start + (beta_end - beta_start) * u;
  }
};

/// Identifies one stored item; goes stale once its slot is overwritten.
struct Handle {
  std::size_t slot = 0;
  std::uint64_t serial = 0;

  friend bool operator==(const Handle&, const Handle&) = default;
};

struct SampledBatch {
  std::vector<const Experience*> items;
  std::vector<double> weights;  ///< importance weights, batch maximum = 1
  std::vector<Handle> handles;
};

/**
 * Ring buffer with proportional prioritization. Leaves hold priority^alpha;
 * sampling draws i.i.d. with replacement from the leaf distribution.
 */
class PrioritizedBuffer {
 public:
  PrioritizedBuffer() = default;
  PrioritizedBuffer(ReplayConfig cfg, int n_e) : cfg_(cfg), n_e_(n_e), tree_(cfg.capacity) {
    cfg_.validate();
    if (n_e < 1 || n_e > 64) throw ConfigError("replay: mask width must lie in [1, 64]");
    items_.resize(cfg_.capacity);
    serials_.assign(cfg_.capacity, 0);
  }

  const ReplayConfig& config() const { return cfg_; }
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return cfg_.capacity; }
  std::uint64_t stale_updates() const { return stale_; }
  const SumTree& tree() const { return tree_; }
  double max_priority() const { return max_priority_; }

  std::uint64_t draw_mask(Rng& rng) const {
    std::uint64_t m = 0;
    for (int i = 0; i < n_e_; ++i)
      if (bernoulli(rng, cfg_.p_share)) m |= 1ULL << i;
    return m;
  }

  /// Draws the bootstrap mask, then stores at maximum priority.
  Handle add(Experience e, Rng& rng) {
    e.mask = draw_mask(rng);
    return insert(std::move(e));
  }

  /// Stores with the mask already set on `e`.
  Handle insert(Experience e) {
    const std::size_t slot = cursor_;
    items_[slot] = std::move(e);
    serials_[slot] = ++serial_counter_;
    tree_.set(slot, std::pow(max_priority_, cfg_.alpha));
    cursor_ = (cursor_ + 1) % cfg_.capacity;
    size_ = std::min(size_ + 1, cfg_.capacity);
    return {slot, serials_[slot]};
  }

  const Experience& at(std::size_t slot) const { return items_.at(slot); }
  bool valid(const Handle& h) const { return h.slot < size_ && serials_[h.slot] == h.serial; }

  double probability(std::size_t slot) const { return tree_.leaf(slot) / tree_.total(); }

  SampledBatch sample(std::size_t batch_size, Rng& rng, double beta) const {
    if (batch_size == 0 || size_ < batch_size)
      throw NotReady("replay buffer holds " + std::to_string(size_) + " items, " + std::to_string(batch_size) +
                     " requested");
    SampledBatch b;
    b.items.reserve(batch_size);
    b.weights.reserve(batch_size);
    b.handles.reserve(batch_size);
    const double total = tree_.total();
    double w_max = 0.0;
    for (std::size_t k = 0; k < batch_size; ++k) {
      const std::size_t slot = tree_.find(uniform(rng, 0.0, total));
      const double p = tree_.leaf(slot) / total;
      const double w = std::pow(static_cast<double>(size_) * p, -beta);
      w_max = std::max(w_max, w);
      b.items.push_back(&items_[slot]);
      b.weights.push_back(w);
      b.handles.push_back({slot, serials_[slot]});
    }
    for (double& w : b.weights) w /= w_max;
    return b;
  }

  /// priority = |td| + eps; handles whose slot was overwritten are skipped and counted.
  void update_priorities(std::span<const Handle> handles, std::span<const double> td_errors) {
    if (handles.size() != td_errors.size()) throw ContractViolation("one td error per handle required");
    for (std::size_t k = 0; k < handles.size(); ++k) {
      if (!valid(handles[k])) {
        ++stale_;
        continue;
      }
      const double p = std::abs(td_errors[k]) + cfg_.eps;
      max_priority_ = std::max(max_priority_, p);
      tree_.set(handles[k].slot, std::pow(p, cfg_.alpha));
    }
  }

  void save(std::ostream& os) const {
    io::put<std::uint64_t>(os, cfg_.capacity);
    io::put<std::int32_t>(os, n_e_);
    io::put<std::uint64_t>(os, size_);
    io::put<std::uint64_t>(os, cursor_);
    io::put<std::uint64_t>(os, serial_counter_);
    io::put<std::uint64_t>(os, stale_);
    io::put<double>(os, max_priority_);
    io::put_vector(os, tree_.raw());
    io::put_vector(os, serials_);
    for (std::size_t i = 0; i < size_; ++i) {
      const auto& e = items_[i];
      io::put_vector(os, e.s);
      io::put<std::int32_t>(os, e.a);
      io::put<double>(os, e.r);
      io::put_vector(os, e.s_next);
      io::put<std::uint8_t>(os, e.terminal ? 1 : 0);
      io::put<std::uint64_t>(os, e.mask);
      io::put<std::int32_t>(os, e.baseline_next_action);
    }
  }

  void load(std::istream& is) {
    if (io::get<std::uint64_t>(is) != cfg_.capacity) throw CheckpointError("replay capacity mismatch");
    if (io::get<std::int32_t>(is) != n_e_) throw CheckpointError("replay mask width mismatch");
    size_ = io::get<std::uint64_t>(is);
    cursor_ = io::get<std::uint64_t>(is);
    if (size_ > cfg_.capacity || cursor_ >= cfg_.capacity) throw CheckpointError("replay cursor out of range");
    serial_counter_ = io::get<std::uint64_t>(is);
    stale_ = io::get<std::uint64_t>(is);
    max_priority_ = io::get<double>(is);
    tree_.restore(io::get_vector<double>(is));
    serials_ = io::get_vector<std::uint64_t>(is);
    if (serials_.size() != cfg_.capacity) throw CheckpointError("replay serial table mismatch");
    items_.assign(cfg_.capacity, Experience{});
    for (std::size_t i = 0; i < size_; ++i) {
      auto& e = items_[i];
      e.s = io::get_vector<double>(is);
      e.a = io::get<std::int32_t>(is);
      e.r = io::get<double>(is);
      e.s_next = io::get_vector<double>(is);
      e.terminal = io::get<std::uint8_t>(is) != 0;
      e.mask = io::get<std::uint64_t>(is);
      e.baseline_next_action = io::get<std::int32_t>(is);
    }
  }

 private:
  ReplayConfig cfg_;
  int n_e_ = 10;
  SumTree tree_;
  std::vector<Experience> items_;
  std::vector<std::uint64_t> serials_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  std::uint64_t serial_counter_ = 0;
  std::uint64_t stale_ = 0;
  double max_priority_ = 1.0;
};

}  // namespace ubrl::replay
