#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "ubrl/common/error.hpp"

namespace ubrl::io {

// Little-endian host assumed; checkpoints are not meant to cross architectures.

template <class T>
void put(std::ostream& os, const T& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  static_assert(std::is_trivially_copyable_v<T>);
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("unexpected end of checkpoint data");
  return v;
}

template <class T>
void put_vector(std::ostream& os, const std::vector<T>& v) {
  put<std::uint64_t>(os, v.size());
  if (!v.empty()) os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
std::vector<T> get_vector(std::istream& is, std::uint64_t limit = 1ULL << 32) {
  const auto n = get<std::uint64_t>(is);
  if (n > limit) throw CheckpointError("implausible array length in checkpoint");
  std::vector<T> v(n);
  if (n) is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw CheckpointError("unexpected end of checkpoint data");
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1ULL << 32)) throw CheckpointError("implausible string length in checkpoint");
  std::string s(n, '\0');
  if (n) is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw CheckpointError("unexpected end of checkpoint data");
  return s;
}

}  // namespace ubrl::io
