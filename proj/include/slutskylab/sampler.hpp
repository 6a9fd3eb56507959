#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slutskylab/errors.hpp"
#include "slutskylab/model.hpp"
#include "slutskylab/moments.hpp"
#include "slutskylab/parallel.hpp"
#include "slutskylab/rng.hpp"
#include "slutskylab/stats.hpp"

namespace slutsky {

struct ChainConfig {
  std::uint64_t seed = 1;
  long burn_in_sweeps = -1;  // negative: measure_sweeps / 10
  long measure_sweeps = 100000;
  long thinning = 1;
  double proposal_sigma = 1.0;
  bool auto_proposal = false;  // use suggested_proposal_sigma(spec) instead
  int batch_count = 16;
  std::vector<int> reference_goods;  // non-empty enables the utility moments
  bool record_marginal = false;      // keep x_0 of agent 0 at every measurement
  long trace_every = 0;              // sweeps between trace rows, 0 disables
  std::vector<double> initial_basket;  // common start basket rescaled to each budget; empty: random

  long burn_in() const { return burn_in_sweeps >= 0 ? burn_in_sweeps : measure_sweeps / 10; }

  void validate(int num_goods = -1) const {
    if (measure_sweeps < 1 || thinning < 1) throw ConfigError("measure_sweeps and thinning must be positive");
    if (batch_count < 8) throw ConfigError("batch_count must be >= 8");
    if (measure_sweeps < thinning * batch_count) throw ConfigError("measure_sweeps must be >= thinning * batch_count");
    if (!(proposal_sigma > 0.0) || !std::isfinite(proposal_sigma)) throw ConfigError("proposal_sigma must be > 0");
    if (trace_every < 0) throw ConfigError("trace_every must be >= 0");
    for (int k : reference_goods) {
      if (k < 0 || (num_goods > 0 && k >= num_goods)) throw ConfigError("reference good out of range");
    }
    if (!initial_basket.empty()) {
      if (num_goods > 0 && static_cast<int>(initial_basket.size()) != num_goods) {
        throw ConfigError("initial_basket must have one entry per good");
      }
      for (double v : initial_basket) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("initial_basket entries must be > 0");
      }
    }
  }
};

// Log-space proposal scale giving roughly 30-50% acceptance: min(1, 2/sqrt(M(1+βā))).
inline double suggested_proposal_sigma(const ModelSpec& spec) {
  if (!spec.finite_beta()) throw ConfigError("samplers require finite beta");
  double a = 0.0;
  for (double v : spec.preferences) a += v;
  a /= static_cast<double>(spec.preferences.size());
  return std::min(1.0, 2.0 / std::sqrt(spec.num_goods * (1.0 + spec.beta * a)));
}

struct TraceRow {
  long sweep = 0;
  std::vector<double> mean_basket;
  double herfindahl = 0.0;
  double acceptance = 0.0;
};

struct ObservableSet {
  int N = 0, M = 0;
  Matrix mean, mean_se;              // N×M ⟨x_i^α⟩
  Vector mean_basket, mean_basket_se;  // ⟨x̄_i⟩
  Matrix cov_same, cov_same_se;      // (1/N) Σ_α ⟨x_i^α x_j^α⟩_c
  Matrix cov_cross, cov_cross_se;    // average over α≠γ of ⟨x_i^α x_j^γ⟩_c
  double herfindahl = 0.0, herfindahl_se = 0.0;  // time average of instantaneous H̃
  double herfindahl_of_mean = 0.0;
  double acceptance_rate = 0.0;
  double budget_mean = 0.0, budget_mean_se = 0.0;  // grand canonical only
  double budget_var = 0.0, budget_var_se = 0.0;
  double mu = 0.0;  // chemical potential (grand canonical)
  int calibration_rounds = 0;
  long samples = 0;
  double geweke_z = 0.0;
  bool equilibrated = true;
  MomentSet moments;                              // full-run averages
  std::vector<std::vector<double>> moment_batches;  // per-batch averages, same layout
  std::vector<double> marginal;
  std::vector<TraceRow> trace;
};

// y' = x e^ξ rescaled onto the budget hyperplane.
inline std::vector<double> propose_move(std::span<const double> basket, std::span<const double> noise,
                                        std::span<const double> prices, double budget) {
  const std::size_t M = basket.size();
  std::vector<double> y(M);
  double spend = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    y[i] = basket[i] * std::exp(noise[i]);
    spend += prices[i] * y[i];
  }
  const double s = budget / spend;
  for (auto& v : y) v *= s;
  return y;
}

inline double acceptance_log_ratio(const ModelSpec& spec, const Allocation& alloc, int agent,
                                   std::span<const double> proposed) {
  require_positive(proposed, "acceptance_log_ratio");
  const int M = spec.num_goods;
  std::vector<double> dlog(M);
  double jac = 0.0;
  for (int i = 0; i < M; ++i) {
    dlog[i] = std::log(proposed[i]) - std::log(alloc(agent, i));
    jac += dlog[i];
  }
  const double dU = detail::delta_utility_logs(spec, alloc, agent, proposed, dlog);
  return (spec.beta == 0.0 ? 0.0 : spec.beta * dU) + jac;
}

enum class Ensemble { Canonical, GrandCanonical };

namespace detail {

class Chain {
 public:
  Chain(const ModelSpec& spec, const ChainConfig& cfg, Ensemble ens, double mu)
      : spec_(spec), cfg_(cfg), ens_(ens), mu_(mu),
        sigma_(cfg.auto_proposal ? suggested_proposal_sigma(spec) : cfg.proposal_sigma), rng_(cfg.seed), pick_(0, spec.num_agents - 1),
        y_(spec.num_goods), dlog_(spec.num_goods), xi_(spec.num_goods) {
    const int N = spec.num_agents, M = spec.num_goods;
    std::vector<double> x(static_cast<std::size_t>(N) * M);
    for (int a = 0; a < N; ++a) {
      double spend = 0.0;
      for (int i = 0; i < M; ++i) {
        const double u = cfg.initial_basket.empty() ? 1.0 - unif_(rng_) : cfg.initial_basket[i];
        x[std::size_t(a) * M + i] = u;
        spend += spec.prices[i] * u;
      }
      const double s = spec.budgets[a] / spend;
      for (int i = 0; i < M; ++i) x[std::size_t(a) * M + i] *= s;
    }
    alloc_ = Allocation(spec, std::move(x));
  }

  const Allocation& allocation() const { return alloc_; }
  long accepted() const { return accepted_; }
  long proposed() const { return proposed_; }
  bool diverged() const { return diverged_; }

  void step() {
    const int M = spec_.num_goods;
    const int agent = pick_(rng_);
    for (int i = 0; i < M; ++i) xi_[i] = sigma_ * normal_(rng_);
    const double u = unif_(rng_);
    ++proposed_;
    double jac = 0.0;
    double dspend = 0.0;
    if (ens_ == Ensemble::Canonical) {
      double spend = 0.0;
      for (int i = 0; i < M; ++i) {
        y_[i] = alloc_(agent, i) * std::exp(xi_[i]);
        spend += spec_.prices[i] * y_[i];
      }
      const double s = spec_.budgets[agent] / spend;
      const double ls = std::log(s);
      for (int i = 0; i < M; ++i) {
        y_[i] *= s;
        dlog_[i] = xi_[i] + ls;
        jac += dlog_[i];
      }
    } else {
      for (int i = 0; i < M; ++i) {
        const double x = alloc_(agent, i);
        y_[i] = x * std::exp(xi_[i]);
        dlog_[i] = xi_[i];
        jac += xi_[i];
        dspend += spec_.prices[i] * (y_[i] - x);
      }
    }
    double L = jac;
    if (spec_.beta != 0.0) {
      double dU = delta_utility_logs(spec_, alloc_, agent, y_, dlog_);
      if (ens_ == Ensemble::GrandCanonical) dU -= mu_ * dspend;
      L += spec_.beta * dU;
    }
    if (L >= 0.0 || std::log(u) < L) {
      for (int i = 0; i < M; ++i) {
        if (!(y_[i] > 0.0) || !std::isfinite(y_[i])) {
          diverged_ = true;
          return;
        }
      }
      alloc_.set_basket(agent, y_, dlog_);
      ++accepted_;
      if (ens_ == Ensemble::GrandCanonical) {
        double b = 0.0;
        for (int i = 0; i < M; ++i) b += spec_.prices[i] * y_[i];
        if (b > 1e4 * spec_.budgets[agent]) diverged_ = true;
      }
    }
  }

  void sweep() {
    for (int n = 0; n < spec_.num_agents && !diverged_; ++n) step();
  }

 private:
  const ModelSpec& spec_;
  const ChainConfig& cfg_;
  Ensemble ens_;
  double mu_;
  double sigma_;
  Engine rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::uniform_int_distribution<int> pick_;
  Allocation alloc_;
  std::vector<double> y_, dlog_, xi_;
  long accepted_ = 0, proposed_ = 0;
  bool diverged_ = false;
};

// Derived observables from averaged moments, flattened:
// mean (NM), mean_basket (M), cov_same (M²), cov_cross (M²), H̃, H̃(mean), budget mean, budget var.
// exchangeable: budget variance about the pooled mean instead of per-agent means.
inline std::vector<double> derive_observables(const MomentLayout& L, const std::vector<double>& v,
                                              std::span<const double> prices, bool exchangeable = false) {
  const MomentSet m(L, v);
  const int N = L.N, M = L.M;
  std::vector<double> out;
  out.reserve(std::size_t(N) * M + M + 2 * M * M + 4);
  for (int a = 0; a < N; ++a) {
    for (int i = 0; i < M; ++i) out.push_back(m.mean(a, i));
  }
  std::vector<double> mb(M);
  for (int i = 0; i < M; ++i) {
    mb[i] = m.mean_bar(i);
    out.push_back(mb[i]);
  }
  std::vector<double> same(std::size_t(M) * M, 0.0);
  for (int a = 0; a < N; ++a) {
    for (int i = 0; i < M; ++i) {
      for (int j = 0; j < M; ++j) same[i * M + j] += (m.second(a, i, j) - m.mean(a, i) * m.mean(a, j)) / N;
    }
  }
  out.insert(out.end(), same.begin(), same.end());
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < M; ++j) {
      if (N < 2) {
        out.push_back(0.0);
        continue;
      }
      const double total = double(N) * N * m.bar2(i, j) - double(N) * N * mb[i] * mb[j];  // Σ_{αγ} Cov
      double same_sum = 0.0;
      for (int a = 0; a < N; ++a) same_sum += m.second(a, i, j) - m.mean(a, i) * m.mean(a, j);
      out.push_back((total - same_sum) / (double(N) * (N - 1)));
    }
  }
  out.push_back(m.herfindahl());
  out.push_back(herfindahl(prices, mb));
  double bmean = 0.0, bsq = 0.0;
  for (int a = 0; a < N; ++a) {
    double b = 0.0;
    for (int i = 0; i < M; ++i) b += prices[i] * m.mean(a, i);
    bmean += b / N;
    bsq += b * b / N;
  }
  out.push_back(bmean);
  out.push_back(L.budget ? m.budget2() - (exchangeable ? bmean * bmean : bsq) : 0.0);
  return out;
}

inline ObservableSet run_kernel(const ModelSpec& spec, const ChainConfig& cfg, Ensemble ens, double mu) {
  spec.validate();
  cfg.validate(spec.num_goods);
  if (!spec.finite_beta()) throw ConfigError("samplers require finite beta");
  const int N = spec.num_agents, M = spec.num_goods;
  MomentLayout layout{N, M, cfg.reference_goods, ens == Ensemble::GrandCanonical};
  Chain chain(spec, cfg, ens, mu);
  ObservableSet obs;
  obs.N = N;
  obs.M = M;
  obs.mu = mu;

  const long burn = cfg.burn_in();
  const long total = burn + cfg.measure_sweeps;
  const long n_samples = cfg.measure_sweeps / cfg.thinning;
  const int B = cfg.batch_count;
  std::vector<std::vector<double>> batch_sums(B, std::vector<double>(layout.size(), 0.0));
  std::vector<long> batch_n(B, 0);
  constexpr int n_blocks = 100;
  std::vector<std::vector<double>> block_sum(M + 1, std::vector<double>(n_blocks, 0.0));
  std::vector<long> block_n(n_blocks, 0);
  std::vector<std::vector<double>> grads(cfg.reference_goods.size(), std::vector<double>(N));
  if (cfg.record_marginal) obs.marginal.reserve(n_samples);

  long acc0 = 0, prop0 = 0;
  long sample = 0;
  for (long s = 1; s <= total; ++s) {
    chain.sweep();
    if (chain.diverged()) throw NoConvergence("chain diverged: realized budgets grew without bound");
    const auto& alloc = chain.allocation();
    if (cfg.trace_every > 0 && s % cfg.trace_every == 0) {
      TraceRow row{s, alloc.mean_basket(), herfindahl(spec.prices, alloc.mean_basket()),
                   chain.proposed() ? double(chain.accepted()) / chain.proposed() : 0.0};
      obs.trace.push_back(std::move(row));
    }
    if (s == burn) {
      acc0 = chain.accepted();
      prop0 = chain.proposed();
    }
    if (s <= burn || (s - burn) % cfg.thinning != 0 || sample >= n_samples) continue;
    for (std::size_t r = 0; r < cfg.reference_goods.size(); ++r) {
      for (int a = 0; a < N; ++a) grads[r][a] = gradient_entry(spec, alloc, a, cfg.reference_goods[r]);
    }
    const double h = herfindahl(spec.prices, alloc.mean_basket());
    const int b = static_cast<int>(sample * B / n_samples);
    accumulate_moments(layout, batch_sums[b], alloc.data(), alloc.mean_basket(), spec.prices, h, grads);
    ++batch_n[b];
    const int blk = static_cast<int>(sample * n_blocks / n_samples);
    for (int i = 0; i < M; ++i) block_sum[i][blk] += alloc.mean_basket()[i];
    block_sum[M][blk] += h;
    ++block_n[blk];
    if (cfg.record_marginal) obs.marginal.push_back(alloc(0, 0));
    ++sample;
  }
  obs.samples = sample;
  obs.acceptance_rate = double(chain.accepted() - acc0) / std::max<long>(1, chain.proposed() - prop0);

  const bool exchangeable = !spec.per_agent_preferences();
  std::vector<double> total_sum(layout.size(), 0.0);
  for (int b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < layout.size(); ++i) total_sum[i] += batch_sums[b][i];
    for (auto& v : batch_sums[b]) v /= std::max<long>(1, batch_n[b]);
  }
  for (auto& v : total_sum) v /= std::max<long>(1, sample);
  obs.moments = MomentSet(layout, total_sum);

  const auto jk = jackknife(batch_sums, [&](const std::vector<double>& v) {
    return derive_observables(layout, v, spec.prices, exchangeable);
  });
  std::size_t o = 0;
  obs.mean.resize(N, M);
  obs.mean_se.resize(N, M);
  for (int a = 0; a < N; ++a) {
    for (int i = 0; i < M; ++i, ++o) {
      obs.mean(a, i) = obs.moments.mean(a, i);
      obs.mean_se(a, i) = jk.se[o];
    }
  }
  // point estimates use the exact full-run averages; errors use the jackknife
  const auto full = derive_observables(layout, total_sum, spec.prices, exchangeable);
  obs.mean_basket.resize(M);
  obs.mean_basket_se.resize(M);
  for (int i = 0; i < M; ++i, ++o) {
    obs.mean_basket[i] = full[o];
    obs.mean_basket_se[i] = jk.se[o];
  }
  auto fill = [&](Matrix& val, Matrix& se) {
    val.resize(M, M);
    se.resize(M, M);
    for (int i = 0; i < M; ++i) {
      for (int j = 0; j < M; ++j, ++o) {
        val(i, j) = full[o];
        se(i, j) = jk.se[o];
      }
    }
  };
  fill(obs.cov_same, obs.cov_same_se);
  fill(obs.cov_cross, obs.cov_cross_se);
  obs.herfindahl = full[o];
  obs.herfindahl_se = jk.se[o++];
  obs.herfindahl_of_mean = full[o++];
  obs.budget_mean = full[o];
  obs.budget_mean_se = jk.se[o++];
  obs.budget_var = full[o];
  obs.budget_var_se = jk.se[o++];
  obs.moment_batches = std::move(batch_sums);

  double zmax = 0.0;
  for (int k = 0; k <= M; ++k) {
    std::vector<double> series;
    for (int blk = 0; blk < n_blocks; ++blk) {
      if (block_n[blk] > 0) series.push_back(block_sum[k][blk] / block_n[blk]);
    }
    zmax = std::max(zmax, std::abs(geweke_z(series)));
  }
  obs.geweke_z = zmax;
  obs.equilibrated = zmax < 3.0;
  return obs;
}

}  // namespace detail

inline ObservableSet run_chain(const ModelSpec& spec, const ChainConfig& cfg) {
  return detail::run_kernel(spec, cfg, Ensemble::Canonical, 0.0);
}

// Grand-canonical chain at a fixed chemical potential.
inline ObservableSet run_grand_canonical_fixed_mu(const ModelSpec& spec, const ChainConfig& cfg, double mu) {
  return detail::run_kernel(spec, cfg, Ensemble::GrandCanonical, mu);
}

inline double grand_canonical_mu0(const ModelSpec& spec) {
  double s = 0.0;
  for (int i = 0; i < spec.num_goods; ++i) s += 1.0 + spec.beta * spec.preference(0, i);
  return s / (spec.beta * spec.mean_budget());
}

// Calibrates μ so that the mean realized budget matches w̄ within the relative tolerance, secant in log μ.
inline ObservableSet run_grand_canonical_chain(const ModelSpec& spec, const ChainConfig& cfg,
                                               double tolerance = 2e-3, int max_rounds = 50) {
  if (!spec.finite_beta() || !(spec.beta > 0.0)) throw ConfigError("grand-canonical chain requires 0 < beta < inf");
  const double w = spec.mean_budget();
  auto eval = [&](double log_mu) -> std::optional<ObservableSet> {
    try {
      return run_grand_canonical_fixed_mu(spec, cfg, std::exp(log_mu));
    } catch (const NoConvergence&) {
      return std::nullopt;
    }
  };
  // residual r(log μ) = log(budget/w), decreasing in μ
  double x0 = std::log(grand_canonical_mu0(spec));
  auto o0 = eval(x0);
  int rounds = 1;
  double lo = -1e300, hi = 1e300;  // bracket in log μ: r(lo) > 0 > r(hi)
  auto residual = [&](const ObservableSet& o) { return std::log(o.budget_mean / w); };
  while (!o0 && rounds < max_rounds) {  // runaway means μ too small
    lo = x0;
    x0 += 0.25;
    o0 = eval(x0);
    ++rounds;
  }
  if (!o0) throw CalibrationFailure("grand-canonical chain diverged for every trial chemical potential");
  double r0 = residual(*o0);
  if (std::abs(std::exp(r0) - 1.0) <= tolerance) {
    o0->calibration_rounds = rounds;
    return *o0;
  }
  (r0 > 0 ? lo : hi) = x0;
  double x1 = x0 + r0;  // local slope of log budget in log μ is about -1
  std::optional<ObservableSet> best = o0;
  double best_r = r0;
  double xp = x0, rp = r0;
  while (rounds < max_rounds) {
    if (!(x1 > lo && x1 < hi)) {
      x1 = (lo > -1e299 && hi < 1e299) ? 0.5 * (lo + hi) : (lo > -1e299 ? lo + 0.5 : hi - 0.5);
    }
    auto o1 = eval(x1);
    ++rounds;
    if (!o1) {
      lo = std::max(lo, x1);
      x1 = hi < 1e299 ? 0.5 * (lo + hi) : x1 + 0.5;
      continue;
    }
    const double r1 = residual(*o1);
    if (std::abs(r1) < std::abs(best_r)) {
      best = o1;
      best_r = r1;
    }
    if (std::abs(std::exp(r1) - 1.0) <= tolerance) {
      o1->calibration_rounds = rounds;
      return *o1;
    }
    (r1 > 0 ? lo : hi) = x1;
    const double denom = r1 - rp;
    double xn = denom != 0.0 ? x1 - r1 * (x1 - xp) / denom : x1 + r1;
    xp = x1;
    rp = r1;
    x1 = xn;
  }
  throw CalibrationFailure("chemical potential calibration did not reach tolerance in " +
                           std::to_string(max_rounds) + " rounds (best relative budget error " +
                           std::to_string(std::exp(best_r) - 1.0) + ")");
}

enum class BudgetChains { Auto, Collective, PerAgent };

struct PathwiseResult {
  std::vector<Matrix> per_agent, per_agent_se;
  Matrix mean_individual, mean_individual_se;
  Matrix aggregate, aggregate_se;  // ∂⟨x̄_i⟩/∂p_j + ⟨x̄_j⟩ ∂⟨x̄_i⟩/∂w̄ with all budgets scaled together
  ObservableSet base;
  int chains = 0;
  bool per_agent_budget_chains = false;
};

// Forward-difference derivatives with common random numbers across all perturbed chains.
inline PathwiseResult pathwise_slutsky(const ModelSpec& spec, const ChainConfig& cfg, double rel_step = 1e-2,
                                       BudgetChains mode = BudgetChains::Auto, int threads = 1) {
  if (!(rel_step > 0.0) || !(rel_step < 0.1)) throw ConfigError("rel_step must lie in (0, 0.1)");
  spec.validate();
  cfg.validate(spec.num_goods);
  const int N = spec.num_agents, M = spec.num_goods;
  bool per_agent = mode == BudgetChains::PerAgent || (mode == BudgetChains::Auto && !interaction_free(spec));
  if (N == 1) per_agent = false;

  // chain list: base, M price chains, collective budget chain, then optional per-agent budget chains
  std::vector<ModelSpec> specs;
  specs.push_back(spec);
  for (int j = 0; j < M; ++j) {
    ModelSpec s = spec;
    s.prices[j] *= 1.0 + rel_step;
    specs.push_back(s);
  }
  {
    ModelSpec s = spec;
    for (auto& w : s.budgets) w *= 1.0 + rel_step;
    specs.push_back(s);
  }
  if (per_agent) {
    for (int a = 0; a < N; ++a) {
      ModelSpec s = spec;
      s.budgets[a] *= 1.0 + rel_step;
      specs.push_back(s);
    }
  }
  ChainConfig c = cfg;
  c.reference_goods.clear();
  c.record_marginal = false;
  auto runs = parallel_map<ObservableSet>(specs.size(), threads, [&](std::size_t i) {
    ChainConfig ci = i == 0 ? cfg : c;
    return run_chain(specs[i], ci);
  });

  const int B = cfg.batch_count;
  const std::size_t NM = std::size_t(N) * M;
  const std::size_t n_runs = runs.size();
  // input per batch: concatenated per-agent means of every chain
  std::vector<std::vector<double>> batches(B, std::vector<double>(n_runs * NM));
  for (int b = 0; b < B; ++b) {
    for (std::size_t r = 0; r < n_runs; ++r) {
      const auto& v = runs[r].moment_batches[b];
      std::copy(v.begin(), v.begin() + NM, batches[b].begin() + r * NM);
    }
  }
  const std::size_t coll = 1 + M;
  auto estimator = [&](const std::vector<double>& v) {
    auto mean = [&](std::size_t run, int a, int i) { return v[run * NM + std::size_t(a) * M + i]; };
    std::vector<double> out;
    out.reserve((N + 2) * M * M);
    std::vector<double> sbar(std::size_t(M) * M, 0.0);
    for (int a = 0; a < N; ++a) {
      const std::size_t brun = per_agent ? coll + 1 + a : coll;
      const double dw = spec.budgets[a] * rel_step;
      for (int i = 0; i < M; ++i) {
        const double dxdw = (mean(brun, a, i) - mean(0, a, i)) / dw;
        for (int j = 0; j < M; ++j) {
          const double dxdp = (mean(1 + j, a, i) - mean(0, a, i)) / (spec.prices[j] * rel_step);
          const double s = dxdp + mean(0, a, j) * dxdw;
          out.push_back(s);
          sbar[i * M + j] += s / N;
        }
      }
    }
    out.insert(out.end(), sbar.begin(), sbar.end());
    auto mbar = [&](std::size_t run, int i) {
      double s = 0.0;
      for (int a = 0; a < N; ++a) s += mean(run, a, i);
      return s / N;
    };
    const double dwbar = spec.mean_budget() * rel_step;
    for (int i = 0; i < M; ++i) {
      const double dxdw = (mbar(coll, i) - mbar(0, i)) / dwbar;
      for (int j = 0; j < M; ++j) {
        const double dxdp = (mbar(1 + j, i) - mbar(0, i)) / (spec.prices[j] * rel_step);
        out.push_back(dxdp + mbar(0, j) * dxdw);
      }
    }
    return out;
  };
  const auto jk = jackknife(batches, estimator);
  // point estimates from full-run means
  std::vector<double> full_in(n_runs * NM);
  for (std::size_t r = 0; r < n_runs; ++r) {
    for (int a = 0; a < N; ++a) {
      for (int i = 0; i < M; ++i) full_in[r * NM + std::size_t(a) * M + i] = runs[r].mean(a, i);
    }
  }
  const auto val = estimator(full_in);

  PathwiseResult res;
  res.chains = static_cast<int>(n_runs);
  res.per_agent_budget_chains = per_agent;
  std::size_t o = 0;
  auto take = [&](Matrix& m, Matrix& se) {
    m.resize(M, M);
    se.resize(M, M);
    for (int i = 0; i < M; ++i) {
      for (int j = 0; j < M; ++j, ++o) {
        m(i, j) = val[o];
        se(i, j) = jk.se[o];
      }
    }
  };
  res.per_agent.resize(N);
  res.per_agent_se.resize(N);
  for (int a = 0; a < N; ++a) take(res.per_agent[a], res.per_agent_se[a]);
  take(res.mean_individual, res.mean_individual_se);
  take(res.aggregate, res.aggregate_se);
  res.base = std::move(runs[0]);
  return res;
}

}  // namespace slutsky
