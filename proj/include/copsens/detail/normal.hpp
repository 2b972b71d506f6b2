#ifndef COPSENS_DETAIL_NORMAL_HPP
#define COPSENS_DETAIL_NORMAL_HPP

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <limits>
#include <numbers>

namespace copsens::detail {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

/// Standard normal CDF, accurate in both tails.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

/// log Phi(x); uses the asymptotic series once erfc underflows.
inline double log_norm_cdf(double x) {
  if (x > -30.0) return std::log(norm_cdf(x));
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

/// phi(x) / Phi(x) (inverse Mills ratio), stable for large negative x.
inline double mills_ratio(double x) {
  if (x > -30.0) return norm_pdf(x) / norm_cdf(x);
  return std::exp(std::log(norm_pdf(x)) - log_norm_cdf(x));
}

/// Standard normal quantile. p must lie in (0, 1).
inline double norm_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

}  // namespace copsens::detail

#endif  // COPSENS_DETAIL_NORMAL_HPP
