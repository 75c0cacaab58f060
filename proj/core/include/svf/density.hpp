#pragma once

#include <cmath>

namespace svf {

// CDF-style Laplace falloff, implemented as printed: high density inside
// (s large negative), decaying outside. Strictly decreasing, psi(s)+psi(-s)=1.
inline double laplace_psi(double s) {
  return s > 0.0 ? 0.5 * std::exp(-s) : 1.0 - 0.5 * std::exp(s);
}

inline double laplace_psi_deriv(double s) { return -0.5 * std::exp(-std::fabs(s)); }

// sigma = beta * psi(f * beta): density beta deep inside, beta/2 at f=0,
// 0 far outside. beta controls how surface-like the falloff is.
inline double sdf_to_density(double f, double beta) {
  return beta * laplace_psi(f * beta);
}

inline double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace svf
