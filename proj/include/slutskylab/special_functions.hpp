#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include "slutskylab/errors.hpp"

namespace slutsky {

namespace detail {

inline void require_positive_argument(double z, const char* name) {
  if (!(z > 0.0)) {
    throw DomainError(std::string(name) + ": argument must be > 0");
  }
}

}  // namespace detail

// Lanczos approximation, g = 7, n = 9 (Godfrey coefficients).
inline double log_gamma(double z) {
  detail::require_positive_argument(z, "log_gamma");
  static constexpr std::array<double, 9> coef = {
      0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
      771.32342877765313,      -176.61502916214059,   12.507343278686905,
      -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};
  if (z < 0.5) {
    // reflection keeps the series in its accurate range
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * z)) - log_gamma(1.0 - z);
  }
  if (z > 20.0) {
    // Stirling series; the Lanczos sum loses digits through cancellation at large z
    const double zi = 1.0 / z;
    const double zi2 = zi * zi;
    const double series =
        zi * (1.0 / 12.0 - zi2 * (1.0 / 360.0 - zi2 * (1.0 / 1260.0 - zi2 * (1.0 / 1680.0 - zi2 / 1188.0))));
    return (z - 0.5) * std::log(z) - z + 0.5 * std::log(2.0 * std::numbers::pi) + series;
  }
  const double x = z - 1.0;
  double sum = coef[0];
  for (int i = 1; i < 9; ++i) sum += coef[i] / (x + i);
  const double t = x + 7.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (x + 0.5) * std::log(t) - t + std::log(sum);
}

inline double digamma(double z) {
  detail::require_positive_argument(z, "digamma");
  double acc = 0.0;
  while (z < 10.0) {
    acc -= 1.0 / z;
    z += 1.0;
  }
  const double zi2 = 1.0 / (z * z);
  const double tail =
      zi2 * (1.0 / 12.0 -
             zi2 * (1.0 / 120.0 - zi2 * (1.0 / 252.0 - zi2 * (1.0 / 240.0 - zi2 * (1.0 / 132.0 - zi2 * 691.0 / 32760.0)))));
  return acc + std::log(z) - 0.5 / z - tail;
}

inline double trigamma(double z) {
  detail::require_positive_argument(z, "trigamma");
  double acc = 0.0;
  while (z < 10.0) {
    acc += 1.0 / (z * z);
    z += 1.0;
  }
  const double zi = 1.0 / z;
  const double zi2 = zi * zi;
  const double tail =
      zi * zi2 * (1.0 / 6.0 - zi2 * (1.0 / 30.0 - zi2 * (1.0 / 42.0 - zi2 * (1.0 / 30.0 - zi2 * (5.0 / 66.0 - zi2 * 691.0 / 2730.0)))));
  return acc + zi + 0.5 * zi2 + tail;
}

}  // namespace slutsky
