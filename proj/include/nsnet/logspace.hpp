#pragma once

#include <algorithm>
#include <cmath>
#include <span>

namespace nsnet::logspace {

/// Finite stand-in for ln 0. Sums of several of these stay finite.
inline constexpr double kLogZero = -1e30;
/// Log values below this are treated as exact zero probability.
inline constexpr double kSaturation = -700.0;

inline bool is_zero(double x) { return x < kSaturation; }
inline double saturate(double x) { return x < kSaturation ? kLogZero : x; }
/// exp that maps saturated values to exactly 0.
inline double safe_exp(double x) { return x < kSaturation ? 0.0 : std::exp(x); }

/// ln(e^a + e^b), symmetric in its arguments.
inline double lse2(double a, double b) {
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

inline double lse(std::span<const double> xs) {
  if (xs.empty()) return kLogZero;
  const double hi = *std::max_element(xs.begin(), xs.end());
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - hi);
  return hi + std::log(sum);
}

/// ln(1 - e^s) for s < 0; accurate near both ends.
inline double log1mexp(double s) {
  return s > -0.6931471805599453 ? std::log(-std::expm1(s)) : std::log1p(-std::exp(s));
}

/// Normalizes a log pair so that e^a + e^b = 1. Saturated pairs become
/// uniform; entries far below the other saturate to kLogZero.
inline void normalize_pair(double& a, double& b) {
  const double hi = std::max(a, b);
  const double ra = a - hi;
  const double rb = b - hi;
  const double z = std::log(std::exp(ra) + std::exp(rb));
  a = saturate(ra - z);
  b = saturate(rb - z);
}

/// 0 * ln 0 = 0 convention for a log-probability.
inline double plogp(double logp) { return is_zero(logp) ? 0.0 : std::exp(logp) * logp; }

}  // namespace nsnet::logspace
