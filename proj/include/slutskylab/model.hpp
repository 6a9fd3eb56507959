#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "slutskylab/errors.hpp"

namespace slutsky {

inline constexpr double Infinity = std::numeric_limits<double>::infinity();

struct NonInteracting {};

struct MeanFieldPreference {
  double c = 0.0;
  double k = 2.0;
};

// Mean-field coupling J_i^{αγ} = a_i J / N only.
struct PairwiseHamiltonian {
  double J = 0.0;
  double rho = 1.0;
};

using Interaction = std::variant<NonInteracting, MeanFieldPreference, PairwiseHamiltonian>;

enum class DecisionMode { GlobalUtility, SelfishConstantC };

struct ModelSpec {
  int num_goods = 0;
  int num_agents = 0;
  std::vector<double> prices;       // M
  std::vector<double> preferences;  // M, or N*M row-major (agent, good)
  std::vector<double> budgets;      // N
  double beta = 1.0;                // Infinity allowed for analytics only
  Interaction interaction = NonInteracting{};
  DecisionMode mode = DecisionMode::GlobalUtility;

  bool per_agent_preferences() const {
    return preferences.size() == static_cast<std::size_t>(num_goods) * num_agents && num_agents > 1;
  }
  double preference(int agent, int good) const {
    return per_agent_preferences() ? preferences[static_cast<std::size_t>(agent) * num_goods + good]
                                   : preferences[good];
  }
  double price(int good) const { return prices[good]; }
  double budget(int agent) const { return budgets[agent]; }
  double mean_budget() const {
    double s = 0.0;
    for (double w : budgets) s += w;
    return s / static_cast<double>(budgets.size());
  }
  bool finite_beta() const { return std::isfinite(beta); }

  void validate() const {
    if (num_goods < 1 || num_agents < 1) throw ConfigError("num_goods and num_agents must be positive");
    if (prices.size() != static_cast<std::size_t>(num_goods)) throw DimensionMismatch("prices must have M entries");
    if (budgets.size() != static_cast<std::size_t>(num_agents)) throw DimensionMismatch("budgets must have N entries");
    if (preferences.size() != static_cast<std::size_t>(num_goods) &&
        preferences.size() != static_cast<std::size_t>(num_goods) * num_agents) {
      throw DimensionMismatch("preferences must have M or N*M entries");
    }
    for (double v : prices) if (!(v > 0.0) || !std::isfinite(v)) throw NonPositiveQuantity("prices must be > 0");
    for (double v : preferences) if (!(v > 0.0) || !std::isfinite(v)) throw NonPositiveQuantity("preferences must be > 0");
    for (double v : budgets) if (!(v > 0.0) || !std::isfinite(v)) throw NonPositiveQuantity("budgets must be > 0");
    if (!(beta >= 0.0)) throw ConfigError("beta must be nonnegative");
    if (const auto* mf = std::get_if<MeanFieldPreference>(&interaction)) {
      if (!(mf->c >= 0.0) || !(mf->k >= 0.0)) throw ConfigError("mean-field c and k must be nonnegative");
    }
    if (const auto* h = std::get_if<PairwiseHamiltonian>(&interaction)) {
      if (!(h->rho > 0.0)) throw ConfigError("rho must be > 0");
      if (per_agent_preferences()) throw VariantError("PairwiseHamiltonian requires agent-independent preferences");
    }
    if (mode == DecisionMode::SelfishConstantC && !std::holds_alternative<MeanFieldPreference>(interaction)) {
      throw VariantError("SelfishConstantC requires MeanFieldPreference");
    }
  }
};

// Convenience constructor for the common homogeneous economy.
inline ModelSpec make_spec(int M, int N, double price, double pref, double budget, double beta,
                           Interaction inter = NonInteracting{}) {
  ModelSpec s;
  s.num_goods = M;
  s.num_agents = N;
  s.prices.assign(M, price);
  s.preferences.assign(M, pref);
  s.budgets.assign(N, budget);
  s.beta = beta;
  s.interaction = inter;
  return s;
}

namespace detail {

inline double powk(double x, double k) {
  if (k == 2.0) return x * x;
  if (k == 1.0) return x;
  return std::pow(x, k);
}

}  // namespace detail

inline const MeanFieldPreference* mean_field(const ModelSpec& s) {
  return std::get_if<MeanFieldPreference>(&s.interaction);
}

inline bool interaction_free(const ModelSpec& s) {
  if (std::holds_alternative<NonInteracting>(s.interaction)) return true;
  if (const auto* mf = mean_field(s)) return mf->c == 0.0;
  if (const auto* h = std::get_if<PairwiseHamiltonian>(&s.interaction)) return h->J == 0.0;
  return false;
}

// N×M consumption state with incrementally maintained aggregates.
class Allocation {
 public:
  static constexpr long resync_interval = 10000;

  Allocation() = default;
  Allocation(const ModelSpec& spec, std::vector<double> x)
      : N_(spec.num_agents), M_(spec.num_goods), x_(std::move(x)) {
    if (x_.size() != static_cast<std::size_t>(N_) * M_) throw DimensionMismatch("allocation must be N*M");
    if (const auto* h = std::get_if<PairwiseHamiltonian>(&spec.interaction)) rho_ = h->rho;
    pref_weighted_ = spec.per_agent_preferences();
    prefs_ = spec.preferences;
    resync();
  }

  int num_agents() const { return N_; }
  int num_goods() const { return M_; }
  double operator()(int agent, int good) const { return x_[idx(agent, good)]; }
  std::span<const double> basket(int agent) const {
    return {x_.data() + static_cast<std::size_t>(agent) * M_, static_cast<std::size_t>(M_)};
  }
  const std::vector<double>& data() const { return x_; }
  const std::vector<double>& mean_basket() const { return mean_; }
  const std::vector<double>& mean_log() const { return mean_log_; }
  // Σ_α a_i^α log x_i^α (equals N a_i · mean_log when preferences are shared)
  const std::vector<double>& weighted_log_sum() const { return wlog_; }
  const std::vector<double>& power_sum() const { return pow_sum_; }     // Σ_α (x_i^α)^ρ
  const std::vector<double>& power_sq_sum() const { return pow_sq_; }  // Σ_α (x_i^α)^{2ρ}

  // Replace one basket; dlog may carry precomputed log(y_i/x_i).
  void set_basket(int agent, std::span<const double> y, std::span<const double> dlog = {}) {
    const double invN = 1.0 / N_;
    for (int i = 0; i < M_; ++i) {
      const double old = x_[idx(agent, i)];
      const double d = dlog.empty() ? std::log(y[i]) - std::log(old) : dlog[i];
      mean_[i] += (y[i] - old) * invN;
      mean_log_[i] += d * invN;
      wlog_[i] += pref(agent, i) * d;
      if (rho_ > 0.0) {
        const double po = std::pow(old, rho_), pn = std::pow(y[i], rho_);
        pow_sum_[i] += pn - po;
        pow_sq_[i] += pn * pn - po * po;
      }
      x_[idx(agent, i)] = y[i];
    }
    if (++updates_ >= resync_interval) resync();
  }

  void resync() {
    mean_.assign(M_, 0.0);
    mean_log_.assign(M_, 0.0);
    wlog_.assign(M_, 0.0);
    pow_sum_.assign(M_, 0.0);
    pow_sq_.assign(M_, 0.0);
    for (int a = 0; a < N_; ++a) {
      for (int i = 0; i < M_; ++i) {
        const double v = x_[idx(a, i)];
        if (!(v > 0.0)) throw NonPositiveQuantity("allocation entries must be > 0");
        mean_[i] += v;
        const double lv = std::log(v);
        mean_log_[i] += lv;
        wlog_[i] += pref(a, i) * lv;
        if (rho_ > 0.0) {
          const double pv = std::pow(v, rho_);
          pow_sum_[i] += pv;
          pow_sq_[i] += pv * pv;
        }
      }
    }
    for (int i = 0; i < M_; ++i) {
      mean_[i] /= N_;
      mean_log_[i] /= N_;
    }
    updates_ = 0;
  }

 private:
  std::size_t idx(int a, int i) const { return static_cast<std::size_t>(a) * M_ + i; }
  double pref(int a, int i) const { return pref_weighted_ ? prefs_[idx(a, i)] : prefs_[i]; }

  int N_ = 0, M_ = 0;
  std::vector<double> x_;
  std::vector<double> mean_, mean_log_, wlog_, pow_sum_, pow_sq_;
  std::vector<double> prefs_;
  bool pref_weighted_ = false;
  double rho_ = 0.0;
  long updates_ = 0;
};

inline void require_positive(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!(x > 0.0)) throw NonPositiveQuantity(std::string(what) + ": quantities must be > 0");
  }
}

inline double global_utility(const ModelSpec& spec, const Allocation& alloc) {
  require_positive(alloc.data(), "global_utility");
  const int M = spec.num_goods, N = spec.num_agents;
  const auto& wl = alloc.weighted_log_sum();
  double U = 0.0;
  if (const auto* mf = mean_field(spec)) {
    const auto& xb = alloc.mean_basket();
    for (int i = 0; i < M; ++i) U += wl[i] * (1.0 + mf->c * detail::powk(xb[i], mf->k));
    return U;
  }
  for (int i = 0; i < M; ++i) U += wl[i];
  if (const auto* h = std::get_if<PairwiseHamiltonian>(&spec.interaction)) {
    const auto& S = alloc.power_sum();
    const auto& T = alloc.power_sq_sum();
    for (int i = 0; i < M; ++i) U += h->J / (2.0 * N) * spec.preferences[i] * (S[i] * S[i] - T[i]);
  }
  return U;
}

namespace detail {

// ΔU given log ratios dlog_i = log(y_i/x_i) of the moving agent.
inline double delta_utility_logs(const ModelSpec& spec, const Allocation& alloc, int agent,
                                 std::span<const double> y, std::span<const double> dlog) {
  const int M = spec.num_goods, N = spec.num_agents;
  double dU = 0.0;
  if (const auto* mf = mean_field(spec)) {
    const auto& xb = alloc.mean_basket();
    if (spec.mode == DecisionMode::SelfishConstantC) {
      for (int i = 0; i < M; ++i) {
        dU += spec.preference(agent, i) * (1.0 + mf->c * detail::powk(xb[i], mf->k)) * dlog[i];
      }
      return dU;
    }
    const auto& wl = alloc.weighted_log_sum();
    for (int i = 0; i < M; ++i) {
      const double x_old = alloc(agent, i);
      const double xb_new = xb[i] + (y[i] - x_old) / N;
      const double pw_old = detail::powk(xb[i], mf->k);
      const double pw_new = detail::powk(xb_new, mf->k);
      dU += (1.0 + mf->c * pw_new) * spec.preference(agent, i) * dlog[i] + mf->c * (pw_new - pw_old) * wl[i];
    }
    return dU;
  }
  for (int i = 0; i < M; ++i) dU += spec.preference(agent, i) * dlog[i];
  if (const auto* h = std::get_if<PairwiseHamiltonian>(&spec.interaction)) {
    const auto& S = alloc.power_sum();
    for (int i = 0; i < M; ++i) {
      const double po = std::pow(alloc(agent, i), h->rho), pn = std::pow(y[i], h->rho);
      const double ds = pn - po;
      const double dT = pn * pn - po * po;
      dU += h->J / (2.0 * N) * spec.preferences[i] * (2.0 * S[i] * ds + ds * ds - dT);
    }
  }
  return dU;
}

}  // namespace detail

inline double delta_utility(const ModelSpec& spec, const Allocation& alloc, int agent,
                            std::span<const double> new_basket) {
  if (agent < 0 || agent >= spec.num_agents) throw ConfigError("delta_utility: agent index out of range");
  if (new_basket.size() != static_cast<std::size_t>(spec.num_goods)) throw DimensionMismatch("basket size");
  require_positive(new_basket, "delta_utility");
  std::vector<double> dlog(spec.num_goods);
  for (int i = 0; i < spec.num_goods; ++i) dlog[i] = std::log(new_basket[i]) - std::log(alloc(agent, i));
  return detail::delta_utility_logs(spec, alloc, agent, new_basket, dlog);
}

namespace detail {

// ∂U/∂x_j^γ for one (agent, good).
inline double gradient_entry(const ModelSpec& spec, const Allocation& alloc, int agent, int j) {
  const int N = spec.num_agents;
  const double x = alloc(agent, j);
  const double a = spec.preference(agent, j);
  if (const auto* mf = mean_field(spec)) {
    const double xb = alloc.mean_basket()[j];
    double g = a * (1.0 + mf->c * detail::powk(xb, mf->k)) / x;
    if (mf->k != 0.0) g += mf->k * mf->c * std::pow(xb, mf->k - 1.0) * alloc.weighted_log_sum()[j] / N;
    return g;
  }
  double g = a / x;
  if (const auto* h = std::get_if<PairwiseHamiltonian>(&spec.interaction)) {
    const double px = std::pow(x, h->rho);
    g += h->J / N * spec.preferences[j] * h->rho * px / x * (alloc.power_sum()[j] - px);
  }
  return g;
}

}  // namespace detail

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix utility_gradient(const ModelSpec& spec, const Allocation& alloc) {
  require_positive(alloc.data(), "utility_gradient");
  Matrix G(spec.num_agents, spec.num_goods);
  for (int a = 0; a < spec.num_agents; ++a) {
    for (int j = 0; j < spec.num_goods; ++j) G(a, j) = detail::gradient_entry(spec, alloc, a, j);
  }
  return G;
}

struct HessianBlocks {
  Vector A;  // diagonal of the same-agent block, minus B
  Vector B;  // diagonal of every agent-pair block
};

// Exact blocks at a symmetric allocation x^α = x̄ for all α:
// the (MN)×(MN) Hessian equals blockdiag(A) + all-blocks(B).
inline HessianBlocks hessian_blocks(const ModelSpec& spec, std::span<const double> xbar) {
  const auto* mf = mean_field(spec);
  if (!mf) throw VariantError("hessian_blocks requires MeanFieldPreference");
  require_positive(xbar, "hessian_blocks");
  const int M = spec.num_goods, N = spec.num_agents;
  HessianBlocks h{Vector(M), Vector(M)};
  for (int i = 0; i < M; ++i) {
    const double x = xbar[i], a = spec.preference(0, i);
    const double b = mf->k == 0.0 ? 0.0
                                  : mf->k * mf->c / N * a * std::pow(x, mf->k - 2.0) *
                                        (2.0 + (mf->k - 1.0) * std::log(x));
    h.A[i] = -a * (1.0 + mf->c * std::pow(x, mf->k)) / (x * x);
    h.B[i] = b;
  }
  return h;
}

// Rescaled Herfindahl index of budget shares p_i x_i / Σ_j p_j x_j: 0 for uniform, 1 for one good.
inline double herfindahl(std::span<const double> prices, std::span<const double> basket) {
  const std::size_t M = prices.size();
  if (M < 2) return 0.0;
  double tot = 0.0;
  for (std::size_t i = 0; i < M; ++i) tot += prices[i] * basket[i];
  double h = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    const double s = prices[i] * basket[i] / tot;
    h += s * s;
  }
  const double inv = 1.0 / static_cast<double>(M);
  return (h - inv) / (1.0 - inv);
}

inline Allocation symmetric_allocation(const ModelSpec& spec, std::span<const double> basket) {
  std::vector<double> x;
  x.reserve(static_cast<std::size_t>(spec.num_agents) * spec.num_goods);
  for (int a = 0; a < spec.num_agents; ++a) x.insert(x.end(), basket.begin(), basket.end());
  return Allocation(spec, std::move(x));
}

}  // namespace slutsky
