#pragma once

#include <cstdint>
#include <vector>

namespace ubrl::replay {

/// One stored transition. `terminal` marks absorbing outcomes only; a timeout
/// is stored with terminal = false so its target still bootstraps.
struct Experience {
  std::vector<double> s;
  int a = 0;
  double r = 0.0;
  std::vector<double> s_next;
  bool terminal = false;
  std::uint64_t mask = 0;        ///< bit i set: head i trains on this item
  int baseline_next_action = 0;  ///< baseline action at s_next, cached at insertion

  bool in_subset(int head) const { return (mask >> head) & 1U; }

  friend bool operator==(const Experience&, const Experience&) = default;
};

}  // namespace ubrl::replay
