#pragma once

#include <array>
#include <cmath>

#include "ubrl/common/error.hpp"

namespace ubrl::lattice {

/// Coefficients c0..c5 of p(t) = sum c_k t^k.
using Poly5 = std::array<double, 6>;

/// Position, velocity and acceleration at one end of a segment.
struct BoundaryState {
  double p = 0.0;
  double v = 0.0;
  double a = 0.0;
};

/// d^order/dt^order p(t), order in [0, 3].
inline double evaluate(const Poly5& c, double t, int order = 0) {
  switch (order) {
    case 0:
      return c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
    case 1:
      return c[1] + t * (2 * c[2] + t * (3 * c[3] + t * (4 * c[4] + t * 5 * c[5])));
    case 2:
      return 2 * c[2] + t * (6 * c[3] + t * (12 * c[4] + t * 20 * c[5]));
    case 3:
      return 6 * c[3] + t * (24 * c[4] + t * 60 * c[5]);
    default:
      throw ContractViolation("polynomial derivative order must be in [0, 3]");
  }
}

inline BoundaryState state_of(const Poly5& c, double t) {
  return {evaluate(c, t, 0), evaluate(c, t, 1), evaluate(c, t, 2)};
}

/// Unique quintic meeting position/velocity/acceleration at t = 0 and t = T.
inline Poly5 quintic_coeffs(BoundaryState start, BoundaryState end, double T) {
  if (!(T > 0.0)) throw DomainError("quintic horizon must be positive");
  const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
  const double h = end.p - start.p - start.v * T - 0.5 * start.a * T2;
  const double dv = end.v - start.v - start.a * T;
  const double da = end.a - start.a;
  return {start.p,
          start.v,
          0.5 * start.a,
          (10.0 * h - 4.0 * dv * T + 0.5 * da * T2) / T3,
          (-15.0 * h + 7.0 * dv * T - da * T2) / T4,
          (6.0 * h - 3.0 * dv * T + 0.5 * da * T2) / T5};
}

/**
 * Velocity-keeping profile: quartic with free end position, matching start
 * position/velocity/acceleration and end velocity/acceleration. This is the
 * jerk-optimal longitudinal motion when only a target speed is sampled.
 */
inline Poly5 velocity_keeping_coeffs(BoundaryState start, double end_v, double end_a, double T) {
  if (!(T > 0.0)) throw DomainError("velocity-keeping horizon must be positive");
  const double dv = end_v - start.v - start.a * T;
  const double da = end_a - start.a;
  return {start.p,
          start.v,
          0.5 * start.a,
          (3.0 * dv - da * T) / (3.0 * T * T),
          (da * T - 2.0 * dv) / (4.0 * T * T * T),
          0.0};
}

/// Closed form of the integral of (p''')^2 over [0, T].
inline double jerk_squared_integral(const Poly5& c, double T) {
  const double a = 6.0 * c[3], b = 24.0 * c[4], q = 60.0 * c[5];
  const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
  return a * a * T + a * b * T2 + (b * b + 2.0 * a * q) * T3 / 3.0 + b * q * T4 / 2.0 + q * q * T5 / 5.0;
}

}  // namespace ubrl::lattice
