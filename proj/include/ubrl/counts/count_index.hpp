#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "ubrl/common/binary_io.hpp"
#include "ubrl/common/error.hpp"

namespace ubrl::counts {

inline constexpr int kBins = 10;

/// Per-dimension bins followed by the action index as the last element.
using Key = std::vector<std::uint8_t>;

struct Discretizer {
  std::vector<double> lo;
  std::vector<double> hi;

  /// Every dimension spans [-1, 1], the normalized observation range.
  static Discretizer normalized(std::size_t dims) { return {std::vector<double>(dims, -1.0), std::vector<double>(dims, 1.0)}; }

  std::size_t dims() const { return lo.size(); }

  static int bin(double v, double lo, double hi) {
    const double width = 0.1 * (hi - lo);
    const double raw = std::floor((v - lo) / width);
    if (!(raw >= 0.0)) return 0;  // also catches NaN
    return raw >= kBins - 1 ? kBins - 1 : static_cast<int>(raw);
  }

  Key operator()(std::span<const double> s, int a) const {
    if (s.size() != dims()) throw ContractViolation("state length does not match discretizer");
    if (a < 0 || a > 255) throw ContractViolation("action index out of key range");
    Key k(s.size() + 1);
    for (std::size_t i = 0; i < s.size(); ++i) k[i] = static_cast<std::uint8_t>(bin(s[i], lo[i], hi[i]));
    k.back() = static_cast<std::uint8_t>(a);
    return k;
  }
};

/// Inclusive bin range per key dimension; used by `range_count`.
struct Box {
  std::vector<std::uint8_t> lo;
  std::vector<std::uint8_t> hi;
};

/**
 * Sparse trie over discretized keys: one level per dimension, only occupied
 * boxes are materialized. Leaves carry the counters.
 */
class CountIndex {
 public:
  CountIndex() = default;
  explicit CountIndex(std::size_t key_length) : key_length_(key_length) { nodes_.emplace_back(); }

  std::size_t key_length() const { return key_length_; }
  std::size_t occupied() const { return occupied_; }
  std::uint64_t total() const { return total_; }

  void increment(const Key& k, std::uint64_t by = 1) {
    check(k);
    std::uint32_t node = 0;
    for (std::size_t depth = 0; depth < key_length_; ++depth) node = child_or_create(node, k[depth]);
    if (nodes_[node].count == 0 && by > 0) ++occupied_;
    nodes_[node].count += by;
    total_ += by;
  }

  std::uint64_t query(const Key& k) const {
    check(k);
    std::uint32_t node = 0;
    for (std::size_t depth = 0; depth < key_length_; ++depth) {
      const auto next = child(node, k[depth]);
      if (!next) return 0;
      node = *next;
    }
    return nodes_[node].count;
  }

  /// Sum of counters over every occupied key inside the box.
  std::uint64_t range_count(const Box& box) const {
    if (box.lo.size() != key_length_ || box.hi.size() != key_length_) throw ContractViolation("box dimension mismatch");
    std::uint64_t sum = 0;
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      const auto [node, depth] = stack.back();
      stack.pop_back();
      if (depth == key_length_) {
        sum += nodes_[node].count;
        continue;
      }
      for (const auto& [bin, next] : nodes_[node].kids)
        if (bin >= box.lo[depth] && bin <= box.hi[depth]) stack.push_back({next, depth + 1});
    }
    return sum;
  }

  /// Visits (key, count) for every occupied key in lexicographic key order.
  template <class F>
  void for_each(F&& f) const {
    Key key(key_length_);
    walk(0, 0, key, f);
  }

  std::vector<std::pair<Key, std::uint64_t>> entries() const {
    std::vector<std::pair<Key, std::uint64_t>> out;
    out.reserve(occupied_);
    for_each([&](const Key& k, std::uint64_t c) { out.emplace_back(k, c); });
    return out;
  }

  /// The k most visited (descending) or least visited (ascending) keys; ties by key order.
  std::vector<std::pair<Key, std::uint64_t>> extremes(std::size_t k, bool most) const {
    auto all = entries();
    std::stable_sort(all.begin(), all.end(), [most](const auto& a, const auto& b) {
      return most ? a.second > b.second : a.second < b.second;
    });
    if (all.size() > k) all.resize(k);
    return all;
  }

  /// Sorted key/count list, so the bytes do not depend on insertion history.
  void save(std::ostream& os) const {
    io::put<std::uint64_t>(os, key_length_);
    io::put<std::uint64_t>(os, occupied_);
    for_each([&](const Key& k, std::uint64_t c) {
      os.write(reinterpret_cast<const char*>(k.data()), static_cast<std::streamsize>(k.size()));
      io::put<std::uint64_t>(os, c);
    });
  }

  void load(std::istream& is) {
    const auto len = io::get<std::uint64_t>(is);
    if (len != key_length_) throw CheckpointError("count index key length mismatch");
    *this = CountIndex(key_length_);
    const auto n = io::get<std::uint64_t>(is);
    Key k(key_length_);
    for (std::uint64_t i = 0; i < n; ++i) {
      is.read(reinterpret_cast<char*>(k.data()), static_cast<std::streamsize>(k.size()));
      increment(k, io::get<std::uint64_t>(is));
    }
  }

  friend bool operator==(const CountIndex& a, const CountIndex& b) {
    return a.key_length_ == b.key_length_ && a.entries() == b.entries();
  }

 private:
  struct Node {
    std::vector<std::pair<std::uint8_t, std::uint32_t>> kids;  ///< sorted by bin
    std::uint64_t count = 0;
  };

  void check(const Key& k) const {
    if (k.size() != key_length_) throw ContractViolation("key length does not match count index");
  }

  std::optional<std::uint32_t> child(std::uint32_t node, std::uint8_t bin) const {
    const auto& kids = nodes_[node].kids;
    auto it = std::lower_bound(kids.begin(), kids.end(), bin, [](const auto& e, std::uint8_t b) { return e.first < b; });
    if (it == kids.end() || it->first != bin) return std::nullopt;
    return it->second;
  }

  std::uint32_t child_or_create(std::uint32_t node, std::uint8_t bin) {
    auto& kids = nodes_[node].kids;
    auto it = std::lower_bound(kids.begin(), kids.end(), bin, [](const auto& e, std::uint8_t b) { return e.first < b; });
    if (it != kids.end() && it->first == bin) return it->second;
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    kids.insert(it, {bin, id});
    nodes_.emplace_back();
    return id;
  }

  template <class F>
  void walk(std::uint32_t node, std::size_t depth, Key& key, F& f) const {
    if (depth == key_length_) {
      if (nodes_[node].count > 0) f(static_cast<const Key&>(key), nodes_[node].count);
      return;
    }
    for (const auto& [bin, next] : nodes_[node].kids) {
      key[depth] = bin;
      walk(next, depth + 1, key, f);
    }
  }

  std::size_t key_length_ = 0;
  std::vector<Node> nodes_;
  std::size_t occupied_ = 0;
  std::uint64_t total_ = 0;
};

}  // namespace ubrl::counts
