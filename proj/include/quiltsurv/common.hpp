#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace quiltsurv {

/// Malformed or inconsistent input data (bad shapes, out-of-range codes).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown that clamping could not repair.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
inline constexpr double kPi = 3.14159265358979323846264338327950288;

inline double log1pexp(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double softplus(double x) { return log1pexp(x); }

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) {
  if (y > 35.0) return y;
  return std::log(std::expm1(y));
}

inline double normal_log_density(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -std::log(sd) - 0.5 * kLogTwoPi - 0.5 * z * z;
}

/// Half-Cauchy(0, scale) log density for x >= 0.
inline double half_cauchy_log_density(double x, double scale = 1.0) {
  const double z = x / scale;
  return std::log(2.0 / kPi) - std::log(scale) - std::log1p(z * z);
}

}  // namespace quiltsurv
