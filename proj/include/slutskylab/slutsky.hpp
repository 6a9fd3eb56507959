#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include "slutskylab/analytics.hpp"
#include "slutskylab/eigen_qr.hpp"
#include "slutskylab/errors.hpp"
#include "slutskylab/model.hpp"
#include "slutskylab/moments.hpp"
#include "slutskylab/sampler.hpp"
#include "slutskylab/stats.hpp"

namespace slutsky {

enum class Method { Pathwise, FluctuationResponse, ClosedFormBetaInf };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Pathwise: return "pathwise";
    case Method::FluctuationResponse: return "fluctuation_response";
    case Method::ClosedFormBetaInf: return "closed_form_beta_inf";
  }
  return "unknown";
}

struct SlutskyMetrics {
  std::vector<std::complex<double>> eigenvalues;
  double max_real = 0.0;
  double trace = 0.0;
  double chi = 0.0;
  bool chi_underflow = false;  // χ reported as +∞ sentinel
  double homogeneity_residual = 0.0;  // ‖S·p‖∞
};

// Spectrum, trace, asymmetry χ (over an optional agent stack) and ‖S·p‖∞.
inline SlutskyMetrics slutsky_metrics(const Matrix& S, std::span<const double> prices = {},
                                      const std::vector<Matrix>* stack = nullptr) {
  if (S.rows() != S.cols()) throw DimensionMismatch("slutsky_metrics requires a square matrix");
  if (S.rows() > 64) throw DimensionMismatch("slutsky_metrics supports M <= 64");
  const int M = static_cast<int>(S.rows());
  SlutskyMetrics m;
  m.eigenvalues = eigenvalues(S);
  m.max_real = -Infinity;
  for (const auto& z : m.eigenvalues) m.max_real = std::max(m.max_real, z.real());
  m.trace = S.trace();
  double num = 0.0, den = 0.0, scale = 0.0;
  auto add = [&](const Matrix& A) {
    for (int i = 0; i < M; ++i) {
      for (int j = 0; j < i; ++j) {
        num += A(i, j) - A(j, i);
        den += A(i, j) + A(j, i);
      }
    }
    scale = std::max(scale, A.cwiseAbs().maxCoeff());
  };
  if (stack && !stack->empty()) {
    for (const auto& A : *stack) add(A);
  } else {
    add(S);
  }
  if (std::abs(den) < 1e-12 * scale || scale == 0.0) {
    m.chi_underflow = true;
    m.chi = Infinity;
  } else {
    m.chi = std::abs(num / den);
  }
  if (prices.size() == static_cast<std::size_t>(M)) {
    const Eigen::Map<const Vector> p(prices.data(), M);
    m.homogeneity_residual = (S * p).cwiseAbs().maxCoeff();
  }
  return m;
}

struct WealthMap {
  enum class Kind { Proportional, Power };
  Kind kind = Kind::Proportional;
  double q = 1.0;
  double w0 = 1.0;
  std::vector<double> kappa;  // per-agent parameters

  static WealthMap proportional(const ModelSpec& spec) {
    WealthMap m;
    const double wb = spec.mean_budget();
    for (double w : spec.budgets) m.kappa.push_back(w / wb);
    return m;
  }
  // w^α = w0 (κ^α w̄ / w0)^q
  static WealthMap power(double q, double w0, std::vector<double> kappa) {
    WealthMap m;
    m.kind = Kind::Power;
    m.q = q;
    m.w0 = w0;
    m.kappa = std::move(kappa);
    m.validate();
    return m;
  }
  void validate() const {
    for (double k : kappa) if (!(k > 0.0)) throw ConfigError("wealth-map multipliers must be > 0");
    if (!(w0 > 0.0)) throw ConfigError("wealth-map reference scale must be > 0");
  }
  std::vector<double> budgets(double wbar) const {
    std::vector<double> w;
    for (double k : kappa) w.push_back(kind == Kind::Proportional ? k * wbar : w0 * std::pow(k * wbar / w0, q));
    return w;
  }
  // ∂w^γ/∂w̄
  std::vector<double> multipliers(double wbar) const {
    std::vector<double> d;
    for (double k : kappa) d.push_back(kind == Kind::Proportional ? k : q * k * std::pow(k * wbar / w0, q - 1.0));
    return d;
  }
};

struct SlutskyEstimate {
  Method method = Method::FluctuationResponse;
  std::vector<Matrix> per_agent, per_agent_se;
  bool per_agent_exact = true;
  Matrix mean_individual, mean_individual_se;
  Matrix aggregate, aggregate_se;
  double gamma = 0.0, gamma_se = 0.0;  // agent-averaged Γ
  SlutskyMetrics metrics;               // of S̄, χ over the per-agent stack
  SlutskyMetrics aggregate_metrics;
};

namespace detail {

// Flattened FR assembly: [per-agent S (N·M², exact mode only), S̄ (M²), 𝒮 (M²), Γ̄, aggregate correction (M²)].
inline std::vector<double> fr_assemble(const ModelSpec& spec, const MomentSet& m, int slot, int k,
                                       const std::vector<double>& kappa, bool per_agent_exact) {
  const int N = m.N(), M = m.M();
  const double beta = spec.beta;
  const double pk = spec.prices[k];
  const double bp = beta / pk;
  std::vector<double> out;
  std::vector<double> mb(M);
  for (int i = 0; i < M; ++i) mb[i] = m.mean_bar(i);
  std::vector<double> G(N), Gam(N);
  double gbar = 0.0;
  for (int a = 0; a < N; ++a) {
    G[a] = m.g(slot, a);
    Gam[a] = bp * G[a];
    gbar += Gam[a] / N;
  }
  // same-agent contributions: Γ^α C^{αα} + ∂_{w^α} C^{αα}
  auto diag_term = [&](int a, int i, int j) {
    const double C = m.second(a, i, j) - m.mean(a, i) * m.mean(a, j);
    const double dC = bp * (m.xxg(slot, a, i, j) - m.second(a, i, j) * G[a] - m.mean(a, j) * m.xg(slot, a, i) -
                            m.mean(a, i) * m.xg(slot, a, j) + 2.0 * m.mean(a, i) * m.mean(a, j) * G[a]);
    return Gam[a] * C + dC;
  };
  Matrix sbar = Matrix::Zero(M, M), agg(M, M), corr(M, M);
  if (per_agent_exact) {
    for (int a = 0; a < N; ++a) {
      for (int i = 0; i < M; ++i) {
        for (int j = 0; j < M; ++j) {
          const double s = -diag_term(a, i, j);
          out.push_back(s);
          sbar(i, j) += s / N;
        }
      }
    }
  }
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < M; ++j) {
      double T1 = 0.0, T2 = 0.0, T3 = 0.0, T4 = 0.0;
      if (N == 1) {
        T1 = diag_term(0, i, j);
      } else {
        double s_mg = 0.0, s_bcG = 0.0, s_xg = 0.0, s_mbg = 0.0;
        for (int c = 0; c < N; ++c) {
          T1 += Gam[c] * (m.barcross(c, i, j) - mb[i] * m.mean(c, j));
          s_mg += m.mean(c, j) * G[c];
          s_bcG += m.barcross(c, i, j) * G[c];
          s_xg += m.xg(slot, c, j);
          s_mbg += m.mean(c, j) * m.barg(slot, c, i);
          const double dmi = bp * (m.barg(slot, c, i) - mb[i] * G[c]);  // (1/N) Σ_α β/p_k Cov(x_i^α, g^γ)
          T3 += m.mean(c, j) * dmi;
          T4 += (m.mean(c, j) - kappa[c] * mb[j]) * ((i == k ? 1.0 / (N * pk) : 0.0) + dmi);
        }
        T2 = bp * (m.barv(slot, i, j) + 2.0 * mb[i] * s_mg - s_bcG - mb[i] * s_xg - s_mbg);
        double self = 0.0;  // γ = α part of T3
        for (int a = 0; a < N; ++a) self += m.mean(a, j) * bp * (m.xg(slot, a, i) - m.mean(a, i) * G[a]) / N;
        T3 -= self;
      }
      if (!per_agent_exact) sbar(i, j) = -(T1 + T2 + T3);
      agg(i, j) = -(T1 + T2 + T4);
      corr(i, j) = -T4;
    }
  }
  if (!per_agent_exact) {
    for (int a = 0; a < N; ++a) {
      for (int i = 0; i < M; ++i) {
        for (int j = 0; j < M; ++j) out.push_back(sbar(i, j));
      }
    }
  }
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < M; ++j) out.push_back(sbar(i, j));
  }
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < M; ++j) out.push_back(agg(i, j));
  }
  out.push_back(gbar);
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < M; ++j) out.push_back(corr(i, j));
  }
  return out;
}

inline void unpack_fr(SlutskyEstimate& est, const std::vector<double>& v, const std::vector<double>& se, int N,
                      int M, Matrix* correction = nullptr) {
  std::size_t o = 0;
  auto take = [&](Matrix& val, Matrix& err) {
    val.resize(M, M);
    err.resize(M, M);
    for (int i = 0; i < M; ++i) {
      for (int j = 0; j < M; ++j, ++o) {
        val(i, j) = v[o];
        err(i, j) = se.empty() ? 0.0 : se[o];
      }
    }
  };
  est.per_agent.resize(N);
  est.per_agent_se.resize(N);
  for (int a = 0; a < N; ++a) take(est.per_agent[a], est.per_agent_se[a]);
  take(est.mean_individual, est.mean_individual_se);
  take(est.aggregate, est.aggregate_se);
  est.gamma = v[o];
  est.gamma_se = se.empty() ? 0.0 : se[o];
  ++o;
  if (correction) {
    Matrix dummy;
    take(*correction, dummy);
  }
}

}  // namespace detail

// Fluctuation-response Slutsky matrices from exact (quadrature) or averaged moments.
inline SlutskyEstimate fr_slutsky(const ModelSpec& spec, const MomentSet& m, int reference_good = 0,
                                  std::optional<WealthMap> map = std::nullopt) {
  if (!m.has_utility_moments()) throw MissingMoments("fr_slutsky requires utility-moment accumulation");
  if (m.N() != spec.num_agents || m.M() != spec.num_goods) throw DimensionMismatch("moments do not match spec");
  const int slot = m.layout().ref_slot(reference_good);
  const WealthMap wm = map ? *map : WealthMap::proportional(spec);
  const bool exact = interaction_free(spec) || spec.num_agents == 1;
  SlutskyEstimate est;
  est.method = Method::FluctuationResponse;
  est.per_agent_exact = exact;
  const auto v = detail::fr_assemble(spec, m, slot, reference_good, wm.multipliers(spec.mean_budget()), exact);
  detail::unpack_fr(est, v, {}, spec.num_agents, spec.num_goods);
  est.metrics = slutsky_metrics(est.mean_individual, spec.prices, &est.per_agent);
  est.aggregate_metrics = slutsky_metrics(est.aggregate, spec.prices);
  return est;
}

// Same assembly on chain output, with leave-one-batch-out jackknife error bars.
inline SlutskyEstimate fr_slutsky(const ModelSpec& spec, const ObservableSet& obs, int reference_good = 0,
                                  std::optional<WealthMap> map = std::nullopt) {
  const MomentSet& m = obs.moments;
  if (!m.has_utility_moments()) throw MissingMoments("chain was run without utility-moment accumulation");
  const int slot = m.layout().ref_slot(reference_good);
  const WealthMap wm = map ? *map : WealthMap::proportional(spec);
  const auto kappa = wm.multipliers(spec.mean_budget());
  const bool exact = interaction_free(spec) || spec.num_agents == 1;
  const auto layout = m.layout();
  const auto jk = jackknife(obs.moment_batches, [&](const std::vector<double>& v) {
    return detail::fr_assemble(spec, MomentSet(layout, v), slot, reference_good, kappa, exact);
  });
  const auto full = detail::fr_assemble(spec, m, slot, reference_good, kappa, exact);
  SlutskyEstimate est;
  est.method = Method::FluctuationResponse;
  est.per_agent_exact = exact;
  detail::unpack_fr(est, full, jk.se, spec.num_agents, spec.num_goods);
  est.metrics = slutsky_metrics(est.mean_individual, spec.prices, &est.per_agent);
  est.aggregate_metrics = slutsky_metrics(est.aggregate, spec.prices);
  return est;
}

// Aggregate 𝒮 under a wealth map; also returns the (⟨x_j^γ⟩ − κ^γ x̄_j) correction contribution.
struct AggregateSlutsky {
  Matrix value;
  Matrix correction;
};

inline AggregateSlutsky aggregate_slutsky(const ModelSpec& spec, const MomentSet& m, const WealthMap& map,
                                          int reference_good = 0) {
  if (map.kappa.size() != static_cast<std::size_t>(spec.num_agents)) {
    throw DimensionMismatch("wealth map must provide one multiplier per agent");
  }
  map.validate();
  if (!m.has_utility_moments()) throw MissingMoments("aggregate_slutsky requires utility moments");
  const int slot = m.layout().ref_slot(reference_good);
  const bool exact = interaction_free(spec) || spec.num_agents == 1;
  const auto v = detail::fr_assemble(spec, m, slot, reference_good, map.multipliers(spec.mean_budget()), exact);
  SlutskyEstimate est;
  AggregateSlutsky out;
  detail::unpack_fr(est, v, {}, spec.num_agents, spec.num_goods, &out.correction);
  out.value = est.aggregate;
  return out;
}

inline SlutskyEstimate closed_form_estimate(const ModelSpec& spec, std::span<const double> xbar) {
  SlutskyEstimate est;
  est.method = Method::ClosedFormBetaInf;
  const Matrix S = closed_form_slutsky(spec, xbar);
  const int M = spec.num_goods;
  est.per_agent = {S};
  est.per_agent_se = {Matrix::Zero(M, M)};
  est.mean_individual = S;
  est.mean_individual_se = Matrix::Zero(M, M);
  est.aggregate = closed_form_aggregate_slutsky(spec, xbar);
  est.aggregate_se = Matrix::Zero(M, M);
  est.metrics = slutsky_metrics(S, spec.prices);
  est.aggregate_metrics = slutsky_metrics(est.aggregate, spec.prices);
  return est;
}

inline SlutskyEstimate pathwise_estimate(const ModelSpec& spec, const PathwiseResult& r) {
  SlutskyEstimate est;
  est.method = Method::Pathwise;
  est.per_agent = r.per_agent;
  est.per_agent_se = r.per_agent_se;
  est.per_agent_exact = true;
  est.mean_individual = r.mean_individual;
  est.mean_individual_se = r.mean_individual_se;
  est.aggregate = r.aggregate;
  est.aggregate_se = r.aggregate_se;
  est.metrics = slutsky_metrics(est.mean_individual, spec.prices, &est.per_agent);
  est.aggregate_metrics = slutsky_metrics(est.aggregate, spec.prices);
  return est;
}

}  // namespace slutsky
