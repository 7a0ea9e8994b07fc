#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "ubrl/common/error.hpp"

namespace ubrl {

/// All randomness in the project flows through this engine type. Distributions
/// are constructed at the call site so no hidden state lives outside the engine.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent child seed for (stream, index) under a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(master) ^ stream) + index);
}

namespace streams {
inline constexpr std::uint64_t kNetworkInit = 0x6e6574;
inline constexpr std::uint64_t kTraining = 0x747261696e;
inline constexpr std::uint64_t kTrainEpisode = 0x657069;
inline constexpr std::uint64_t kEvalEpisode = 0x6576616c;
}  // namespace streams

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline bool bernoulli(Rng& rng, double p) {
  if (p >= 1.0) {
    rng.discard(1);
    return true;
  }
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

inline int uniform_int(Rng& rng, int lo, int hi_inclusive) {
  return std::uniform_int_distribution<int>(lo, hi_inclusive)(rng);
}

inline std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng deserialize_rng(const std::string& text) {
  Rng rng;
  std::istringstream is(text);
  is >> rng;
  if (!is) throw CheckpointError("corrupt RNG state");
  return rng;
}

}  // namespace ubrl
