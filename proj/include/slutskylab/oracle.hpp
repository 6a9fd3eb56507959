#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "slutskylab/errors.hpp"
#include "slutskylab/model.hpp"
#include "slutskylab/moments.hpp"

namespace slutsky {

struct QuadratureConfig {
  int nodes = 256;          // Gauss-Legendre nodes per dimension
  double clip = 1e-12;      // simplex-boundary clip
  double endpoint_power = 4.0;  // sigmoidal endpoint transform exponent (1 disables)
  std::vector<int> reference_goods{0};
  bool check_convergence = true;  // node-doubling gate

  void validate() const {
    if (nodes < 64) throw ConfigError("quadrature needs at least 64 nodes per dimension");
    if (!(clip > 0.0 && clip < 1e-3)) throw ConfigError("quadrature clip must lie in (0, 1e-3)");
    if (!(endpoint_power >= 1.0)) throw ConfigError("endpoint_power must be >= 1");
  }
};

struct QuadratureResult {
  double Z = 0.0;
  double gamma = 0.0;        // ∂_w log Z (all budgets together), central difference
  std::vector<double> gamma_agent;  // ∂ log Z / ∂w^α
  MomentSet moments;
  Matrix means;              // N×M
  Matrix cov_same;           // pooled same-agent covariance
  double convergence = 0.0;  // max relative change under node doubling
  bool converged = true;
};

namespace detail {

// Gauss-Legendre nodes and weights on [0, 1].
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1);
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) < 1e-16) break;
    }
    x[i] = 0.5 * (1.0 - z);
    x[n - 1 - i] = 0.5 * (1.0 + z);
    w[i] = w[n - 1 - i] = 1.0 / ((1.0 - z * z) * pp * pp);
  }
}

// Nodes on (0,1) with the endpoint-clustering map t = s^q / (s^q + (1-s)^q).
inline void unit_rule(int n, double q, double clip, std::vector<double>& t, std::vector<double>& wt) {
  std::vector<double> s, ws;
  gauss_legendre(n, s, ws);
  t.resize(n);
  wt.resize(n);
  for (int i = 0; i < n; ++i) {
    const double a = std::pow(s[i], q), b = std::pow(1.0 - s[i], q);
    const double den = a + b;
    double ti = a / den;
    const double dt = q * std::pow(s[i], q - 1.0) * std::pow(1.0 - s[i], q - 1.0) / (den * den);
    ti = std::min(std::max(ti, clip), 1.0 - clip);
    t[i] = ti;
    wt[i] = ws[i] * dt;
  }
}

struct Node {
  std::vector<double> x;  // N×M state
  double log_weight;      // log(quadrature weight × Jacobian)
};

// Nodes covering every agent's budget simplex; log_weight includes the constraint Jacobian.
inline std::vector<Node> simplex_nodes(const ModelSpec& spec, const QuadratureConfig& cfg) {
  const int N = spec.num_agents, M = spec.num_goods;
  std::vector<double> t, wt;
  unit_rule(cfg.nodes, cfg.endpoint_power, cfg.clip, t, wt);
  const int n = cfg.nodes;
  // per-agent point sets (basket, log weight)
  std::vector<std::vector<std::pair<std::vector<double>, double>>> per(N);
  for (int a = 0; a < N; ++a) {
    const double w = spec.budgets[a];
    double lj = (M - 1) * std::log(w);
    for (int i = 0; i < M; ++i) lj -= std::log(spec.prices[i]);
    if (M == 2) {
      for (int i = 0; i < n; ++i) {
        per[a].push_back({{w / spec.prices[0] * t[i], w / spec.prices[1] * (1.0 - t[i])}, lj + std::log(wt[i])});
      }
    } else if (M == 3) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const double t1 = t[i], t2 = (1.0 - t1) * t[j];
          const double t3 = std::max((1.0 - t1) * (1.0 - t[j]), cfg.clip);
          per[a].push_back({{w / spec.prices[0] * t1, w / spec.prices[1] * t2, w / spec.prices[2] * t3},
                            lj + std::log(wt[i] * wt[j] * (1.0 - t1))});
        }
      }
    }
  }
  std::vector<Node> nodes;
  if (N == 1) {
    for (auto& [x, lw] : per[0]) nodes.push_back({x, lw});
  } else {
    for (auto& [x1, l1] : per[0]) {
      for (auto& [x2, l2] : per[1]) {
        std::vector<double> x = x1;
        x.insert(x.end(), x2.begin(), x2.end());
        nodes.push_back({std::move(x), l1 + l2});
      }
    }
  }
  return nodes;
}

inline void check_supported(const ModelSpec& spec) {
  const int N = spec.num_agents, M = spec.num_goods;
  if (!((N == 1 && (M == 2 || M == 3)) || (N == 2 && M == 2))) {
    throw UnsupportedSize("quadrature supports N=1 with M in {2,3} and N=2 with M=2");
  }
  if (!spec.finite_beta()) throw ConfigError("quadrature requires finite beta");
}

struct RawQuadrature {
  double logZ = 0.0;
  MomentSet moments;
};

inline RawQuadrature integrate(const ModelSpec& spec, const QuadratureConfig& cfg) {
  const int N = spec.num_agents, M = spec.num_goods;
  const auto nodes = simplex_nodes(spec, cfg);
  std::vector<double> logd(nodes.size());
  std::vector<Allocation> allocs;
  allocs.reserve(nodes.size());
  double lmax = -Infinity;
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    allocs.emplace_back(spec, nodes[n].x);
    logd[n] = nodes[n].log_weight + (spec.beta == 0.0 ? 0.0 : spec.beta * global_utility(spec, allocs.back()));
    lmax = std::max(lmax, logd[n]);
  }
  MomentLayout layout{N, M, cfg.reference_goods, false};
  std::vector<double> acc(layout.size(), 0.0);
  std::vector<std::vector<double>> grads(cfg.reference_goods.size(), std::vector<double>(N));
  double zs = 0.0;
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const double wgt = std::exp(logd[n] - lmax);
    zs += wgt;
    const auto& al = allocs[n];
    for (std::size_t r = 0; r < cfg.reference_goods.size(); ++r) {
      for (int a = 0; a < N; ++a) grads[r][a] = gradient_entry(spec, al, a, cfg.reference_goods[r]);
    }
    accumulate_moments(layout, acc, al.data(), al.mean_basket(), spec.prices,
                       herfindahl(spec.prices, al.mean_basket()), grads, wgt);
  }
  for (auto& v : acc) v /= zs;
  return {lmax + std::log(zs), MomentSet(layout, std::move(acc))};
}

}  // namespace detail

inline QuadratureResult quadrature_moments(const ModelSpec& spec, const QuadratureConfig& cfg = {}) {
  spec.validate();
  cfg.validate();
  detail::check_supported(spec);
  const int N = spec.num_agents, M = spec.num_goods;
  auto raw = detail::integrate(spec, cfg);
  QuadratureResult res;
  res.Z = std::exp(raw.logZ);
  res.moments = raw.moments;
  res.means.resize(N, M);
  res.cov_same = Matrix::Zero(M, M);
  for (int a = 0; a < N; ++a) {
    for (int i = 0; i < M; ++i) {
      res.means(a, i) = raw.moments.mean(a, i);
      for (int j = 0; j < M; ++j) {
        res.cov_same(i, j) += (raw.moments.second(a, i, j) - raw.moments.mean(a, i) * raw.moments.mean(a, j)) / N;
      }
    }
  }
  QuadratureConfig light = cfg;
  light.check_convergence = false;
  auto logz_at = [&](const std::vector<double>& budgets) {
    ModelSpec s = spec;
    s.budgets = budgets;
    return detail::integrate(s, light).logZ;
  };
  const double h = 1e-4;
  {
    std::vector<double> up = spec.budgets, dn = spec.budgets;
    for (auto& w : up) w *= 1.0 + h;
    for (auto& w : dn) w *= 1.0 - h;
    res.gamma = (logz_at(up) - logz_at(dn)) / (2.0 * h * spec.mean_budget()) / N;
  }
  for (int a = 0; a < N; ++a) {
    std::vector<double> up = spec.budgets, dn = spec.budgets;
    up[a] *= 1.0 + h;
    dn[a] *= 1.0 - h;
    res.gamma_agent.push_back((logz_at(up) - logz_at(dn)) / (2.0 * h * spec.budgets[a]));
  }
  if (cfg.check_convergence) {
    QuadratureConfig dbl = light;
    dbl.nodes = cfg.nodes * 2;
    const auto fine = detail::integrate(spec, dbl);
    double change = std::abs(fine.logZ - raw.logZ);
    const auto& a = raw.moments.values();
    const auto& b = fine.moments.values();
    for (std::size_t n = 0; n < a.size(); ++n) {
      change = std::max(change, std::abs(a[n] - b[n]) / std::max(1e-300, std::max(std::abs(a[n]), 1e-3 * std::abs(b[n]) + 1e-14)));
    }
    res.convergence = change;
    res.converged = change < 1e-8;
  }
  return res;
}

// Definitional Slutsky matrices from central differences of quadrature means (one per agent).
inline std::vector<Matrix> oracle_slutsky_fd(const ModelSpec& spec, const QuadratureConfig& cfg = {},
                                             double step = 1e-4) {
  spec.validate();
  cfg.validate();
  detail::check_supported(spec);
  const int N = spec.num_agents, M = spec.num_goods;
  QuadratureConfig light = cfg;
  light.check_convergence = false;
  light.reference_goods.clear();
  auto means_at = [&](const ModelSpec& s) {
    const auto raw = detail::integrate(s, light);
    Matrix m(N, M);
    for (int a = 0; a < N; ++a) {
      for (int i = 0; i < M; ++i) m(a, i) = raw.moments.mean(a, i);
    }
    return m;
  };
  const Matrix base = means_at(spec);
  std::vector<Matrix> dp(M), dw(N);
  for (int j = 0; j < M; ++j) {
    ModelSpec up = spec, dn = spec;
    up.prices[j] *= 1.0 + step;
    dn.prices[j] *= 1.0 - step;
    dp[j] = (means_at(up) - means_at(dn)) / (2.0 * step * spec.prices[j]);
  }
  for (int a = 0; a < N; ++a) {
    ModelSpec up = spec, dn = spec;
    up.budgets[a] *= 1.0 + step;
    dn.budgets[a] *= 1.0 - step;
    dw[a] = (means_at(up) - means_at(dn)) / (2.0 * step * spec.budgets[a]);
  }
  std::vector<Matrix> S(N, Matrix(M, M));
  for (int a = 0; a < N; ++a) {
    for (int i = 0; i < M; ++i) {
      for (int j = 0; j < M; ++j) S[a](i, j) = dp[j](a, i) + base(a, j) * dw[a](a, i);
    }
  }
  return S;
}

}  // namespace slutsky
