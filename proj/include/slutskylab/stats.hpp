#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace slutsky {

struct MeanError {
  double mean = 0.0;
  double se = 0.0;
};

// Standard error of the mean from equally sized batch means.
inline MeanError batch_mean_error(std::span<const double> batch_means) {
  const std::size_t B = batch_means.size();
  MeanError r;
  if (B == 0) return r;
  for (double v : batch_means) r.mean += v;
  r.mean /= B;
  if (B < 2) return r;
  double ss = 0.0;
  for (double v : batch_means) ss += (v - r.mean) * (v - r.mean);
  r.se = std::sqrt(ss / (B - 1) / B);
  return r;
}

// Leave-one-batch-out jackknife for a vector-valued estimator of batch-averaged inputs.
// batches[b] holds the per-batch average of every input; estimator maps averaged inputs to outputs.
struct JackknifeResult {
  std::vector<double> value;
  std::vector<double> se;
};

inline JackknifeResult jackknife(const std::vector<std::vector<double>>& batches,
                                 const std::function<std::vector<double>(const std::vector<double>&)>& estimator) {
  JackknifeResult r;
  const std::size_t B = batches.size();
  if (B == 0) return r;
  const std::size_t L = batches[0].size();
  std::vector<double> total(L, 0.0);
  for (const auto& b : batches) {
    for (std::size_t i = 0; i < L; ++i) total[i] += b[i];
  }
  std::vector<double> full(L);
  for (std::size_t i = 0; i < L; ++i) full[i] = total[i] / B;
  r.value = estimator(full);
  r.se.assign(r.value.size(), 0.0);
  if (B < 2) return r;
  std::vector<std::vector<double>> loo(B);
  std::vector<double> avg(r.value.size(), 0.0);
  std::vector<double> part(L);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < L; ++i) part[i] = (total[i] - batches[b][i]) / (B - 1);
    loo[b] = estimator(part);
    for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += loo[b][k] / B;
  }
  for (std::size_t k = 0; k < avg.size(); ++k) {
    double ss = 0.0;
    for (std::size_t b = 0; b < B; ++b) ss += (loo[b][k] - avg[k]) * (loo[b][k] - avg[k]);
    r.se[k] = std::sqrt(ss * (B - 1) / B);
  }
  return r;
}

// Mean-drift z score: first 10% against last 50% of a series of block means.
inline double geweke_z(std::span<const double> blocks) {
  const std::size_t n = blocks.size();
  if (n < 20) return 0.0;
  const std::size_t na = std::max<std::size_t>(2, n / 10);
  const std::size_t nb = n / 2;
  auto seg = [&](std::size_t lo, std::size_t len) {
    MeanError r;
    for (std::size_t i = lo; i < lo + len; ++i) r.mean += blocks[i];
    r.mean /= len;
    double ss = 0.0;
    for (std::size_t i = lo; i < lo + len; ++i) ss += (blocks[i] - r.mean) * (blocks[i] - r.mean);
    r.se = ss / (len - 1) / len;  // variance of the segment mean
    return r;
  };
  const MeanError a = seg(0, na), b = seg(n - nb, nb);
  const double den = std::sqrt(a.se + b.se);
  const double diff = a.mean - b.mean;
  if (den <= 1e-300) return diff == 0.0 ? 0.0 : (diff > 0 ? 1e300 : -1e300);
  return diff / den;
}

// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
template <class Cdf>
double ks_distance(std::vector<double> sample, Cdf cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double F = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - F, F - i / n});
  }
  return d;
}

// Least-squares slope of log|y| against log x.
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]), ly = std::log(std::abs(y[i]));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace slutsky
