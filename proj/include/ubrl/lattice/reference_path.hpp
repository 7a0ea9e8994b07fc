#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "ubrl/common/error.hpp"
#include "ubrl/common/geometry.hpp"

namespace ubrl::lattice {

/// Maximum spacing between adjacent polyline samples.
inline constexpr double kMaxSampleSpacing = 0.5;
/// Projections further than this from the path are rejected.
inline constexpr double kCorridorHalfWidth = 10.0;

struct PathPoint {
  Vec2 position;
  double heading = 0.0;
  double curvature = 0.0;
};

/**
 * Dense polyline with cumulative arc length.
 *
 * Headings are stored per vertex and interpolated linearly along each segment,
 * so the frame (position, tangent, normal) is continuous in arc length. That
 * makes the offset map (s, d) -> P(s) + d N(s) smooth and invertible inside the
 * corridor, which is what gives exact Frenet round trips away from the path.
 */
class ReferencePath {
 public:
  ReferencePath() = default;

  /// `headings` may be empty, in which case vertex headings bisect the adjacent segments.
  explicit ReferencePath(std::vector<Vec2> points, std::vector<double> headings = {})
      : points_(std::move(points)), headings_(std::move(headings)) {
    if (points_.size() < 2) throw ConfigError("reference path needs at least two points");
    arc_.assign(points_.size(), 0.0);
    for (std::size_t i = 1; i < points_.size(); ++i) {
      const double seg = norm(points_[i] - points_[i - 1]);
      if (!(seg > 0.0)) throw ConfigError("reference path arc length must be strictly increasing");
      if (seg >= kMaxSampleSpacing + 1e-9)
        throw ConfigError("reference path samples must be closer than 0.5 m; densify first");
      arc_[i] = arc_[i - 1] + seg;
    }
    if (headings_.empty()) {
      headings_.resize(points_.size());
      for (std::size_t i = 0; i < points_.size(); ++i) {
        if (i == 0 || i + 1 == points_.size()) {
          const Vec2 d = i == 0 ? points_[1] - points_[0] : points_[i] - points_[i - 1];
          headings_[i] = std::atan2(d.y, d.x);
        } else {
          const Vec2 d0 = points_[i] - points_[i - 1];
          const Vec2 d1 = points_[i + 1] - points_[i];
          const double h0 = std::atan2(d0.y, d0.x);
          headings_[i] = wrap_angle(h0 + 0.5 * wrap_angle(std::atan2(d1.y, d1.x) - h0));
        }
      }
    } else if (headings_.size() != points_.size()) {
      throw ConfigError("reference path heading count must match point count");
    }
    lo_ = hi_ = points_.front();
    for (const Vec2 v : points_) {
      lo_ = {std::min(lo_.x, v.x), std::min(lo_.y, v.y)};
      hi_ = {std::max(hi_.x, v.x), std::max(hi_.y, v.y)};
    }
  }

  /// Resamples an arbitrary polyline so that spacing stays below `spacing`.
  static ReferencePath densified(const std::vector<Vec2>& coarse, double spacing = 0.25) {
    if (coarse.size() < 2) throw ConfigError("reference path needs at least two points");
    std::vector<Vec2> out{coarse.front()};
    for (std::size_t i = 1; i < coarse.size(); ++i) {
      const Vec2 a = coarse[i - 1];
      const Vec2 b = coarse[i];
      const double len = norm(b - a);
      if (!(len > 0.0)) continue;
      const int pieces = std::max(1, static_cast<int>(std::ceil(len / spacing)));
      for (int k = 1; k <= pieces; ++k) out.push_back(a + (static_cast<double>(k) / pieces) * (b - a));
    }
    return ReferencePath(std::move(out));
  }

  const std::vector<Vec2>& points() const { return points_; }
  const std::vector<double>& arc_lengths() const { return arc_; }
  const std::vector<double>& headings() const { return headings_; }
  double length() const { return arc_.back(); }

  /// Frame at arc length `s`; linear extrapolation (zero curvature) beyond either end.
  PathPoint at(double s) const {
    if (s <= 0.0) {
      const double h = headings_.front();
      return {points_.front() + s * unit(h), h, 0.0};
    }
    if (s >= length()) {
      const double h = headings_.back();
      return {points_.back() + (s - length()) * unit(h), h, 0.0};
    }
    const std::size_t k = segment_of(s);
    const double len = arc_[k + 1] - arc_[k];
    const double u = (s - arc_[k]) / len;
    const double dh = wrap_angle(headings_[k + 1] - headings_[k]);
    return {points_[k] + u * (points_[k + 1] - points_[k]), wrap_angle(headings_[k] + u * dh), dh / len};
  }

  struct Projection {
    double s = 0.0;
    double d = 0.0;
  };

  /// Inverse of the offset map. Throws OutOfCorridor beyond `max_offset`.
  Projection project(Vec2 p, double max_offset = kCorridorHalfWidth) const {
    auto best = try_project(p, max_offset);
    if (!best)
      throw OutOfCorridor("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                          ") is outside the reference path corridor");
    return *best;
  }

  std::optional<Projection> try_project(Vec2 p, double max_offset = kCorridorHalfWidth) const {
    if (p.x < lo_.x - max_offset || p.x > hi_.x + max_offset || p.y < lo_.y - max_offset ||
        p.y > hi_.y + max_offset)
      return std::nullopt;
    std::optional<Projection> best;
    auto consider = [&](Projection cand) {
      if (!best || std::abs(cand.d) < std::abs(best->d)) best = cand;
    };

    const std::size_t segments = points_.size() - 1;
    for (std::size_t k = 0; k < segments; ++k) {
      const double f0 = tangential_residual(p, k, 0.0);
      const double f1 = tangential_residual(p, k, 1.0);
      if (k == 0 && f0 < 0.0) {
        const double h = headings_.front();
        consider({f0, dot(p - points_.front(), left_normal(h))});
      }
      if (k + 1 == segments && f1 > 0.0) {
        const double h = headings_.back();
        consider({length() + f1, dot(p - points_.back(), left_normal(h))});
      }
      if (f0 < 0.0 || f1 > 0.0) continue;
      // f decreases monotonically in u inside the corridor: bisect.
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (tangential_residual(p, k, mid) > 0.0)
          lo = mid;
        else
          hi = mid;
      }
      const double u = 0.5 * (lo + hi);
      const double len = arc_[k + 1] - arc_[k];
      const double h = headings_[k] + u * wrap_angle(headings_[k + 1] - headings_[k]);
      const Vec2 base = points_[k] + u * (points_[k + 1] - points_[k]);
      consider({arc_[k] + u * len, dot(p - base, left_normal(h))});
    }
    if (!best || std::abs(best->d) > max_offset) return std::nullopt;
    return best;
  }

 private:
  std::size_t segment_of(double s) const {
    auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
    const auto idx = static_cast<std::size_t>(std::distance(arc_.begin(), it));
    return std::min(idx == 0 ? 0 : idx - 1, points_.size() - 2);
  }

  double tangential_residual(Vec2 p, std::size_t k, double u) const {
    const double h = headings_[k] + u * wrap_angle(headings_[k + 1] - headings_[k]);
    const Vec2 base = points_[k] + u * (points_[k + 1] - points_[k]);
    return dot(p - base, unit(h));
  }

  std::vector<Vec2> points_;
  std::vector<double> headings_;
  std::vector<double> arc_;
  Vec2 lo_, hi_;
};

/// Builds straight/arc paths with exact vertex headings.
class PathBuilder {
 public:
  PathBuilder(Vec2 start, double heading, double spacing = 0.25)
      : spacing_(spacing), heading_(heading), points_{start}, headings_{heading} {}

  PathBuilder& straight(double length) {
    if (length <= 0.0) return *this;
    const int pieces = std::max(1, static_cast<int>(std::ceil(length / spacing_)));
    const Vec2 start = points_.back();
    for (int k = 1; k <= pieces; ++k) {
      points_.push_back(start + (length * k / pieces) * unit(heading_));
      headings_.push_back(heading_);
    }
    return *this;
  }

  /// Circular arc; positive sweep turns left.
  PathBuilder& arc(double radius, double sweep) {
    if (radius <= 0.0) throw ConfigError("arc radius must be positive");
    const double len = radius * std::abs(sweep);
    const int pieces = std::max(1, static_cast<int>(std::ceil(len / spacing_)));
    const double side = sweep >= 0.0 ? 1.0 : -1.0;
    const Vec2 center = points_.back() + (side * radius) * left_normal(heading_);
    const double h0 = heading_;
    for (int k = 1; k <= pieces; ++k) {
      const double h = h0 + sweep * k / pieces;
      points_.push_back(center - (side * radius) * left_normal(h));
      headings_.push_back(wrap_angle(h));
    }
    heading_ = wrap_angle(h0 + sweep);
    return *this;
  }

  ReferencePath build() const { return ReferencePath(points_, headings_); }

 private:
  double spacing_;
  double heading_;
  std::vector<Vec2> points_;
  std::vector<double> headings_;
};

}  // namespace ubrl::lattice
