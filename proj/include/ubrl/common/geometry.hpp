#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace ubrl {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
  friend Vec2 operator*(Vec2 a, double k) { return {k * a.x, k * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 unit(double heading) { return {std::cos(heading), std::sin(heading)}; }
/// Left-hand normal of a heading.
inline Vec2 left_normal(double heading) { return {-std::sin(heading), std::cos(heading)}; }

/// Wraps to [-pi, pi).
inline double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  r -= std::numbers::pi;
  if (r >= std::numbers::pi) r -= kTwoPi;
  return r;
}

/// Vehicle footprint: rectangle centred on the reference point.
struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double length = 4.5;
  double width = 2.0;

  std::array<Vec2, 4> corners() const {
    const Vec2 f = unit(heading) * (0.5 * length);
    const Vec2 l = left_normal(heading) * (0.5 * width);
    return {center + f + l, center + f - l, center - f - l, center - f + l};
  }
  double circumradius() const { return 0.5 * std::hypot(length, width); }
};

namespace detail {
inline bool separated_along(const OrientedBox& a, const OrientedBox& b, Vec2 axis) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  double amin = dot(ca[0], axis), amax = amin;
  double bmin = dot(cb[0], axis), bmax = bmin;
  for (int i = 1; i < 4; ++i) {
    const double pa = dot(ca[i], axis);
    const double pb = dot(cb[i], axis);
    amin = std::min(amin, pa);
    amax = std::max(amax, pa);
    bmin = std::min(bmin, pb);
    bmax = std::max(bmax, pb);
  }
  return amax < bmin || bmax < amin;
}
}  // namespace detail

/// Separating-axis test. Touching boxes count as overlapping.
inline bool overlaps(const OrientedBox& a, const OrientedBox& b) {
  const double r = a.circumradius() + b.circumradius();
  const Vec2 d = a.center - b.center;
  if (dot(d, d) > r * r) return false;
  for (const Vec2 axis : {unit(a.heading), left_normal(a.heading), unit(b.heading), left_normal(b.heading)}) {
    if (detail::separated_along(a, b, axis)) return false;
  }
  return true;
}

}  // namespace ubrl
