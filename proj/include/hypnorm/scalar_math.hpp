#pragma once

#include <algorithm>
#include <cmath>
#include <span>

namespace hypnorm::math {

/// artanh arguments are clamped to +-(1 - kArtanhMargin).
inline constexpr double kArtanhMargin = 1e-15;
/// Ball points satisfy sqrt(c)|p| < 1 - kBallMargin.
inline constexpr double kBallMargin = 1e-12;

inline double artanh_clamped(double x) {
  const double lim = 1.0 - kArtanhMargin;
  return std::atanh(std::clamp(x, -lim, lim));
}

/// tanh(t)/t, continuous at t = 0.
inline double tanh_ratio(double t) {
  t = std::fabs(t);
  // libm tanh is not monotone to the last ulp near 0
  if (t < 1e-4) {
    const double t2 = t * t;
    return 1.0 - t2 * (1.0 / 3.0 - t2 * 2.0 / 15.0);
  }
  return std::tanh(t) / t;
}

/// (d/dt tanh_ratio(t)) / t = (t sech^2 t - tanh t) / t^3.
inline double tanh_ratio_slope(double t) {
  const double t2 = t * t;
  if (t < 1e-2) return -2.0 / 3.0 + t2 * (8.0 / 15.0 - t2 * 34.0 / 105.0);
  const double th = std::tanh(t);
  const double sech2 = 1.0 - th * th;
  return (t * sech2 - th) / (t2 * t);
}

/// artanh(t)/t for 0 <= t < 1 (t clamped), continuous at t = 0.
inline double artanh_ratio(double t) {
  const double t2 = t * t;
  if (t < 1e-4) return 1.0 + t2 * (1.0 / 3.0 + t2 / 5.0);
  const double tc = std::min(t, 1.0 - kArtanhMargin);
  return std::atanh(tc) / tc;
}

/// (d/dt artanh_ratio(t)) / t = (t/(1-t^2) - artanh t) / t^3.
inline double artanh_ratio_slope(double t) {
  const double t2 = t * t;
  if (t < 1e-2) return 2.0 / 3.0 + t2 * (4.0 / 5.0 + t2 * 6.0 / 7.0);
  const double tc = std::min(t, 1.0 - kArtanhMargin);
  const double tc2 = tc * tc;
  return (tc / (1.0 - tc2) - std::atanh(tc)) / (tc2 * tc);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace hypnorm::math
