#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "slutskylab/errors.hpp"
#include "slutskylab/model.hpp"
#include "slutskylab/special_functions.hpp"

namespace slutsky {

// ---------------------------------------------------------------------------
// Interaction-free economy

struct NonInteractingSolution {
  Matrix means;                 // N×M
  std::vector<Matrix> slutsky;  // per agent
};

inline NonInteractingSolution noninteracting_solution(const ModelSpec& spec) {
  spec.validate();
  if (!interaction_free(spec)) throw VariantError("noninteracting_solution requires an interaction-free economy");
  const int N = spec.num_agents, M = spec.num_goods;
  NonInteractingSolution sol;
  sol.means.resize(N, M);
  sol.slutsky.assign(N, Matrix::Zero(M, M));
  std::vector<double> r(M);
  for (int a = 0; a < N; ++a) {
    double tot = 0.0;
    for (int i = 0; i < M; ++i) {
      r[i] = spec.finite_beta() ? 1.0 + spec.beta * spec.preference(a, i) : spec.preference(a, i);
      tot += r[i];
    }
    for (int i = 0; i < M; ++i) r[i] /= tot;
    const double w = spec.budgets[a];
    for (int i = 0; i < M; ++i) {
      sol.means(a, i) = w / spec.prices[i] * r[i];
      for (int j = 0; j < M; ++j) {
        sol.slutsky[a](i, j) = w / (spec.prices[i] * spec.prices[j]) * r[i] * (r[j] - (i == j ? 1.0 : 0.0));
      }
    }
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Free energy density (decoupled per good)

struct GoodParams {
  double a = 1.0, p = 1.0, c = 0.0, k = 2.0;
};

inline std::vector<GoodParams> good_params(const ModelSpec& spec) {
  if (spec.per_agent_preferences()) throw VariantError("analytic machinery requires agent-independent preferences");
  if (std::holds_alternative<PairwiseHamiltonian>(spec.interaction)) {
    throw VariantError("free-energy machinery applies to the mean-field preference model");
  }
  double c = 0.0, k = 2.0;
  if (const auto* mf = mean_field(spec)) {
    c = mf->c;
    k = mf->k;
  }
  std::vector<GoodParams> g(spec.num_goods);
  for (int i = 0; i < spec.num_goods; ++i) g[i] = {spec.preferences[i], spec.prices[i], c, k};
  return g;
}

struct GoodTerms {
  double value = 0.0, d1 = 0.0, d2 = 0.0;
};

namespace detail {

// μ-independent part of βf for one good and its derivatives; finite β.
inline GoodTerms good_terms_finite(const GoodParams& g, double beta, double x) {
  const double xk = powk(x, g.k);
  const double Q = 1.0 + beta * g.a * (1.0 + g.c * xk);
  const double Q1 = g.k == 0.0 ? 0.0 : beta * g.a * g.c * g.k * xk / x;
  const double Q2 = g.k == 0.0 ? 0.0 : Q1 * (g.k - 1.0) / x;
  const double lx = std::log(x), lQ = std::log(Q);
  const double bracket = lx - lQ + digamma(Q);
  GoodTerms t;
  t.value = -Q * (1.0 + lx - lQ) - log_gamma(Q);
  t.d1 = -Q / x - Q1 * bracket;
  t.d2 = -Q1 / x + Q / (x * x) - Q2 * bracket - Q1 * (1.0 / x - Q1 / Q + trigamma(Q) * Q1);
  return t;
}

// β→∞: f_i = μ p x − a(1 + c x^k) log x, μ-independent part and derivatives.
inline GoodTerms good_terms_infinite(const GoodParams& g, double x) {
  const double xk = powk(x, g.k), lx = std::log(x);
  GoodTerms t;
  t.value = -g.a * (1.0 + g.c * xk) * lx;
  t.d1 = -g.a * (g.c * g.k * xk / x * lx + (1.0 + g.c * xk) / x);
  t.d2 = g.a / (x * x) * (1.0 - g.c * xk * (2.0 * g.k - 1.0 + g.k * (g.k - 1.0) * lx));
  return t;
}

inline GoodTerms good_terms(const GoodParams& g, double beta, double x) {
  return std::isfinite(beta) ? good_terms_finite(g, beta, x) : good_terms_infinite(g, x);
}

// Scale of the μ term: βf carries βμp, f_∞ carries μp.
inline double mu_scale(double beta) { return std::isfinite(beta) ? beta : 1.0; }

}  // namespace detail

struct FreeEnergy {
  double f = 0.0;  // βf (finite β) or f_∞
  Vector grad;
  Vector diag_hess;
};

// βf(x̄, μ) with exact gradient and diagonal second derivatives.
inline FreeEnergy free_energy_density(const ModelSpec& spec, std::span<const double> xbar, double mu) {
  require_positive(xbar, "free_energy_density");
  if (!spec.finite_beta()) throw ConfigError("free_energy_density requires finite beta; use free_energy_infinite_beta");
  const auto gp = good_params(spec);
  const int M = spec.num_goods;
  FreeEnergy fe{0.0, Vector(M), Vector(M)};
  for (int i = 0; i < M; ++i) {
    const auto t = detail::good_terms_finite(gp[i], spec.beta, xbar[i]);
    fe.f += spec.beta * mu * gp[i].p * xbar[i] + t.value;
    fe.grad[i] = spec.beta * mu * gp[i].p + t.d1;
    fe.diag_hess[i] = t.d2;
  }
  return fe;
}

inline FreeEnergy free_energy_infinite_beta(const ModelSpec& spec, std::span<const double> xbar, double mu) {
  require_positive(xbar, "free_energy_infinite_beta");
  const auto gp = good_params(spec);
  const int M = spec.num_goods;
  FreeEnergy fe{0.0, Vector(M), Vector(M)};
  for (int i = 0; i < M; ++i) {
    const auto t = detail::good_terms_infinite(gp[i], xbar[i]);
    fe.f += mu * gp[i].p * xbar[i] + t.value;
    fe.grad[i] = mu * gp[i].p + t.d1;
    fe.diag_hess[i] = t.d2;
  }
  return fe;
}

// ---------------------------------------------------------------------------
// Saddle-point solver

enum class Branch { NonCondensed, Condensed };

struct SaddleSolution {
  Vector xbar;
  double mu = 0.0;
  double free_energy = 0.0;  // budget-constrained value Σ_i g_i(x̄_i) (βf − βμw, or f_∞ − μw)
  Branch branch = Branch::NonCondensed;
  int dominant_good = -1;
  double herfindahl = 0.0;
  bool converged = false;
  double budget_residual = 0.0;
  double stationarity_residual = 0.0;
  int iterations = 0;
  int candidates = 0;
  int degenerate_minima = 1;  // number of candidates tied with the minimum
};

namespace detail {

// Chemical potential at which x is stationary for good g.
inline double stationary_mu(const GoodParams& g, double beta, double x) {
  return -good_terms(g, beta, x).d1 / (mu_scale(beta) * g.p);
}

struct MonotoneSegment {
  int n0, n1;           // grid index range
  double mu_lo, mu_hi;  // μ at the two ends
};

struct GoodBranches {
  std::vector<double> lx, mu;  // log-x grid and stationary μ on it
  std::vector<MonotoneSegment> segments;
};

inline GoodBranches branch_segments(const GoodParams& g, double beta, double xmin, double xmax, int grid) {
  GoodBranches b;
  b.lx.resize(grid);
  b.mu.resize(grid);
  const double l0 = std::log(xmin), l1 = std::log(xmax);
  for (int n = 0; n < grid; ++n) {
    b.lx[n] = l0 + (l1 - l0) * n / (grid - 1);
    b.mu[n] = stationary_mu(g, beta, std::exp(b.lx[n]));
  }
  int start = 0;
  for (int n = 1; n < grid - 1; ++n) {
    const double d0 = b.mu[n] - b.mu[n - 1], d1 = b.mu[n + 1] - b.mu[n];
    if ((d0 > 0) != (d1 > 0) && d0 != 0.0 && d1 != 0.0) {
      b.segments.push_back({start, n, b.mu[start], b.mu[n]});
      start = n;
    }
  }
  b.segments.push_back({start, grid - 1, b.mu[start], b.mu[grid - 1]});
  return b;
}

// Inverse of the stationary map on a monotone segment; nullopt if μ is outside its range.
inline std::optional<double> invert_segment(const GoodParams& g, double beta, const GoodBranches& br,
                                            const MonotoneSegment& s, double mu) {
  const double lo_mu = std::min(s.mu_lo, s.mu_hi), hi_mu = std::max(s.mu_lo, s.mu_hi);
  if (mu < lo_mu || mu > hi_mu) return std::nullopt;
  const bool increasing = s.mu_hi > s.mu_lo;
  // grid cell containing the root
  int lo = s.n0, hi = s.n1;
  while (hi - lo > 1) {
    const int m = (lo + hi) / 2;
    if ((br.mu[m] < mu) == increasing) lo = m;
    else hi = m;
  }
  double a = br.lx[lo], b = br.lx[hi];
  for (int it = 0; it < 100 && b - a > 2e-16 * std::max(1.0, std::abs(a)); ++it) {
    const double m = 0.5 * (a + b);
    const double v = stationary_mu(g, beta, std::exp(m));
    if ((v < mu) == increasing) a = m;
    else b = m;
  }
  double x = std::exp(0.5 * (a + b));
  // Newton polish on the stationarity residual, kept inside the bracket
  for (int it = 0; it < 2; ++it) {
    const auto t = good_terms(g, beta, x);
    const double r = mu_scale(beta) * mu * g.p + t.d1;
    if (t.d2 == 0.0 || r == 0.0) break;
    const double xn = x - r / t.d2;
    if (!(xn > std::exp(a) * (1 - 1e-12) && xn < std::exp(b) * (1 + 1e-12))) break;
    x = xn;
  }
  return x;
}

}  // namespace detail

struct SaddleHint {
  int grid = 3000;       // per-good x grid for branch detection
  int mu_scan = 256;     // μ samples per branch pattern
};

inline SaddleSolution solve_saddle(const ModelSpec& spec, double w, SaddleHint hint = {}) {
  if (!(w > 0.0)) throw NonPositiveQuantity("solve_saddle: budget must be > 0");
  const auto gp = good_params(spec);
  const int M = spec.num_goods;
  const double beta = spec.beta;
  if (!(beta > 0.0)) throw ConfigError("solve_saddle requires beta > 0");
  std::vector<detail::GoodBranches> br(M);
  for (int i = 0; i < M; ++i) {
    br[i] = detail::branch_segments(gp[i], beta, 1e-8 * w / gp[i].p, w / gp[i].p, hint.grid);
  }
  std::vector<int> pattern(M, 0);
  struct Candidate {
    std::vector<double> x;
    double mu;
    double value;
  };
  std::vector<Candidate> cands;
  int iterations = 0;
  auto assemble = [&](double mu, std::vector<double>& x) -> bool {
    for (int i = 0; i < M; ++i) {
      auto xi = detail::invert_segment(gp[i], beta, br[i], br[i].segments[pattern[i]], mu);
      if (!xi) return false;
      x[i] = *xi;
    }
    return true;
  };
  auto budget_gap = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (int i = 0; i < M; ++i) s += gp[i].p * x[i];
    return s - w;
  };
  std::vector<double> x(M), xa(M), xb(M);
  for (;;) {
    double lo = -Infinity, hi = Infinity;
    for (int i = 0; i < M; ++i) {
      const auto& s = br[i].segments[pattern[i]];
      lo = std::max(lo, std::min(s.mu_lo, s.mu_hi));
      hi = std::min(hi, std::max(s.mu_lo, s.mu_hi));
    }
    if (lo < hi) {
      const bool logscale = lo > 0.0;
      const int K = hint.mu_scan;
      auto mu_at = [&](int n) {
        const double t = double(n) / (K - 1);
        return logscale ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t;
      };
      double prev_mu = 0.0, prev_gap = 0.0;
      bool have_prev = false;
      for (int n = 0; n < K; ++n) {
        const double mu = mu_at(n);
        if (!assemble(mu, x)) {
          have_prev = false;
          continue;
        }
        const double gap = budget_gap(x);
        if (have_prev && ((gap > 0) != (prev_gap > 0) || gap == 0.0)) {
          double a = prev_mu, b = mu, ga = prev_gap;
          for (int it = 0; it < 200; ++it) {
            ++iterations;
            const double m = logscale ? std::sqrt(a * b) : 0.5 * (a + b);
            if (!(m > std::min(a, b) && m < std::max(a, b))) break;
            if (!assemble(m, xa)) break;
            const double gm = budget_gap(xa);
            if ((gm > 0) == (ga > 0)) {
              a = m;
              ga = gm;
            } else {
              b = m;
            }
          }
          const double mu_star = logscale ? std::sqrt(a * b) : 0.5 * (a + b);
          if (assemble(mu_star, xb)) {
            double value = 0.0;
            for (int i = 0; i < M; ++i) value += detail::good_terms(gp[i], beta, xb[i]).value;
            cands.push_back({xb, mu_star, value});
          }
        }
        prev_mu = mu;
        prev_gap = gap;
        have_prev = true;
      }
    }
    int i = 0;
    while (i < M) {
      if (++pattern[i] < static_cast<int>(br[i].segments.size())) break;
      pattern[i] = 0;
      ++i;
    }
    if (i == M) break;
  }
  if (cands.empty()) throw NoConvergence("solve_saddle: no stationary point satisfies the budget");

  double best = Infinity;
  for (const auto& c : cands) best = std::min(best, c.value);
  const double tie = 1e-10 * std::max(1.0, std::abs(best));
  int chosen = -1, chosen_dom = M, ties = 0;
  std::vector<std::vector<double>> distinct;
  for (std::size_t n = 0; n < cands.size(); ++n) {
    if (cands[n].value > best + tie) continue;
    bool dup = false;
    for (const auto& d : distinct) {
      double diff = 0.0;
      for (int i = 0; i < M; ++i) diff = std::max(diff, std::abs(d[i] - cands[n].x[i]) / std::max(1.0, std::abs(d[i])));
      if (diff < 1e-6) dup = true;
    }
    if (!dup) {
      distinct.push_back(cands[n].x);
      ++ties;
    }
    int dom = 0;
    for (int i = 1; i < M; ++i) {
      if (gp[i].p * cands[n].x[i] > gp[dom].p * cands[n].x[dom] * (1 + 1e-9)) dom = i;
    }
    if (chosen < 0 || dom < chosen_dom) {
      chosen = static_cast<int>(n);
      chosen_dom = dom;
    }
  }
  const auto& c = cands[chosen];
  SaddleSolution sol;
  sol.xbar = Eigen::Map<const Vector>(c.x.data(), M);
  sol.mu = c.mu;
  sol.free_energy = c.value;
  sol.herfindahl = herfindahl(spec.prices, c.x);
  sol.branch = sol.herfindahl > 0.5 ? Branch::Condensed : Branch::NonCondensed;
  sol.dominant_good = chosen_dom;
  sol.budget_residual = std::abs(budget_gap(c.x)) / w;
  double res = 0.0;
  for (int i = 0; i < M; ++i) {
    const auto t = detail::good_terms(gp[i], beta, c.x[i]);
    res = std::max(res, std::abs(detail::mu_scale(beta) * c.mu * gp[i].p + t.d1));
  }
  sol.stationarity_residual = res;
  sol.converged = sol.budget_residual <= 1e-8 && res <= 1e-8;
  sol.iterations = iterations;
  sol.candidates = static_cast<int>(cands.size());
  sol.degenerate_minima = ties;
  if (!sol.converged) {
    throw NoConvergence("solve_saddle: residuals budget=" + std::to_string(sol.budget_residual) +
                        " stationarity=" + std::to_string(res));
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Critical interaction strength

struct CriticalC {
  std::optional<double> c_inf;   // nullopt: divergent (no condensation at β=∞)
  std::optional<double> c_crit;  // at the spec's β; nullopt: divergent
  int driving_good = -1;
};

// Uniform economy a=p=1: 1/c_∞ = (w/M)^k [2k−1+k(k−1) log(w/M)].
inline std::optional<double> c_inf_uniform(double w, int M, double k) {
  const double x = w / M;
  const double br = std::pow(x, k) * (2.0 * k - 1.0 + k * (k - 1.0) * std::log(x));
  if (!(br > 0.0)) return std::nullopt;
  return 1.0 / br;
}

inline CriticalC critical_c(const ModelSpec& spec, double w) {
  double k = 2.0;
  if (const auto* mf = mean_field(spec)) k = mf->k;
  if (k == 0.0) throw DomainError("critical_c requires k > 0");
  auto gp = good_params(spec);
  const int M = spec.num_goods;
  CriticalC cc;
  double sum_a = 0.0;
  for (const auto& g : gp) sum_a += g.a;
  double best = 0.0;
  for (int i = 0; i < M; ++i) {
    const double x = w * gp[i].a / (gp[i].p * sum_a);
    const double br = std::pow(x, k) * (2.0 * k - 1.0 + k * (k - 1.0) * std::log(x));
    if (br > best) {
      best = br;
      cc.driving_good = i;
    }
  }
  if (best > 0.0) cc.c_inf = 1.0 / best;
  if (!spec.finite_beta()) {
    cc.c_crit = cc.c_inf;
    return cc;
  }
  const double beta = spec.beta;
  double sum_q = 0.0;
  for (const auto& g : gp) sum_q += 1.0 + beta * g.a;
  std::vector<double> x0(M);
  for (int i = 0; i < M; ++i) x0[i] = w / gp[i].p * (1.0 + beta * gp[i].a) / sum_q;
  auto min_hess = [&](double c) {
    double h = Infinity;
    for (int i = 0; i < M; ++i) {
      GoodParams g = gp[i];
      g.c = c;
      g.k = k;
      h = std::min(h, detail::good_terms_finite(g, beta, x0[i]).d2);
    }
    return h;
  };
  const int K = 600;
  const double l0 = std::log(1e-10), l1 = std::log(1e10);
  double prev = std::exp(l0);
  for (int n = 1; n < K; ++n) {
    const double c = std::exp(l0 + (l1 - l0) * n / (K - 1));
    if (min_hess(c) <= 0.0) {
      double a = prev, b = c;
      for (int it = 0; it < 200 && b - a > 1e-15 * b; ++it) {
        const double m = 0.5 * (a + b);
        if (min_hess(m) <= 0.0) b = m;
        else a = m;
      }
      cc.c_crit = 0.5 * (a + b);
      return cc;
    }
    prev = c;
  }
  return cc;
}

// ---------------------------------------------------------------------------
// Ensemble-equivalence variance

inline double budget_variance_sigma2(const ModelSpec& spec, std::span<const double> xbar) {
  require_positive(xbar, "budget_variance_sigma2");
  if (!spec.finite_beta()) return 0.0;
  const auto gp = good_params(spec);
  double s = 0.0;
  for (int i = 0; i < spec.num_goods; ++i) {
    const double e = xbar[i] * gp[i].p;
    s += e * e / (1.0 + spec.beta * gp[i].a * (1.0 + gp[i].c * detail::powk(xbar[i], gp[i].k)));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Gaussian (β→∞) correlations

struct GaussianCorrelations {
  Matrix phi;    // same-agent block times β
  Matrix psi;    // cross-agent block times βN
  double a = 0.0, b = 0.0, d = 0.0;
  Matrix F, D;   // diagonal
};

inline GaussianCorrelations gaussian_correlations(const ModelSpec& spec, std::span<const double> xbar) {
  require_positive(xbar, "gaussian_correlations");
  ModelSpec s = spec;
  if (std::holds_alternative<NonInteracting>(s.interaction)) s.interaction = MeanFieldPreference{0.0, 2.0};
  const auto hb = hessian_blocks(s, xbar);
  const int M = spec.num_goods, N = spec.num_agents;
  Vector F(M), ND(M);
  for (int i = 0; i < M; ++i) {
    if (hb.A[i] == 0.0) throw SingularHessian("A has a zero diagonal entry");
    const double coll = hb.A[i] + N * hb.B[i];
    if (coll == 0.0) throw SingularHessian("A + N B has a zero diagonal entry");
    F[i] = 1.0 / hb.A[i];
    ND[i] = -(N * hb.B[i]) / (coll * hb.A[i]);
  }
  const Eigen::Map<const Vector> pv(spec.prices.data(), M);
  const double a = pv.cwiseProduct(pv).dot(F);
  const double nb = pv.cwiseProduct(pv).dot(ND);
  if (a == 0.0 || a + nb == 0.0) throw SingularHessian("constrained block is singular");
  const double nd = -nb / (a * (a + nb));
  GaussianCorrelations g;
  g.a = a;
  g.b = nb / N;
  g.d = nd / N;
  g.F = F.asDiagonal();
  g.D = (ND / N).asDiagonal();
  g.phi.resize(M, M);
  g.psi.resize(M, M);
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < M; ++j) {
      const double pp = pv[i] * pv[j];
      const double del = i == j ? 1.0 : 0.0;
      g.phi(i, j) = -F[i] * del + pp * F[i] * F[j] / a;
      g.psi(i, j) = -ND[i] * del +
                   pp * (nd * F[i] * F[j] + (1.0 / a + nd) * (F[i] * ND[j] + ND[i] * F[j] + ND[i] * ND[j]));
    }
  }
  return g;
}

// β→∞ stationary chemical potential, averaged over goods.
inline double stationary_mu_infinite(const ModelSpec& spec, std::span<const double> xbar) {
  const auto gp = good_params(spec);
  double mu = 0.0;
  for (int i = 0; i < spec.num_goods; ++i) mu += detail::stationary_mu(gp[i], Infinity, xbar[i]);
  return mu / spec.num_goods;
}

// Common per-agent β→∞ Slutsky matrix: linear response of the budget-constrained
// maximizer at the symmetric allocation, split into the collective mode (A + N B)
// and the N − 1 relative modes (A).
inline Matrix closed_form_slutsky(const ModelSpec& spec, std::span<const double> xbar) {
  require_positive(xbar, "closed_form_slutsky");
  ModelSpec s = spec;
  if (std::holds_alternative<NonInteracting>(s.interaction)) s.interaction = MeanFieldPreference{0.0, 2.0};
  const auto hb = hessian_blocks(s, xbar);
  const int M = spec.num_goods, N = spec.num_agents;
  const auto& p = spec.prices;
  Vector F(M), Fc(M);
  double aF = 0.0, ac = 0.0;
  for (int i = 0; i < M; ++i) {
    const double coll = hb.A[i] + N * hb.B[i];
    if (hb.A[i] == 0.0 || coll == 0.0) throw SingularHessian("symmetric-allocation Hessian is singular");
    F[i] = 1.0 / hb.A[i];
    Fc[i] = 1.0 / coll;
    aF += p[i] * p[i] * F[i];
    ac += p[i] * p[i] * Fc[i];
  }
  if (aF == 0.0 || ac == 0.0) throw SingularHessian("constrained block is singular");
  const double lam = stationary_mu_infinite(s, xbar);
  const double own = 1.0 - 1.0 / N;
  Matrix S(M, M);
  for (int i = 0; i < M; ++i) {
    const double dw = p[i] * (own * F[i] / aF + Fc[i] / (N * ac));
    for (int j = 0; j < M; ++j) {
      const double dp = Fc[i] * ((i == j ? lam : 0.0) - p[i] * (lam * p[j] * Fc[j] + xbar[j]) / ac);
      S(i, j) = dp + xbar[j] * dw;
    }
  }
  return S;
}

// Correlation-function form −(a_j/(p_j x̄_j))[kc(φ+ψ)_ij x̄_j^k log x̄_j + (1 + c x̄_j^k)φ_ij].
// Coincides with closed_form_slutsky at c = 0 only.
inline Matrix closed_form_slutsky_correlation_form(const ModelSpec& spec, std::span<const double> xbar) {
  const auto gc = gaussian_correlations(spec, xbar);
  const auto gp = good_params(spec);
  const int M = spec.num_goods;
  Matrix S(M, M);
  for (int j = 0; j < M; ++j) {
    const double x = xbar[j], xk = detail::powk(x, gp[j].k);
    const double pref = gp[j].a / (gp[j].p * x);
    for (int i = 0; i < M; ++i) {
      S(i, j) = -pref * (gp[j].k * gp[j].c * (gc.phi(i, j) + gc.psi(i, j)) * xk * std::log(x) +
                         (1.0 + gp[j].c * xk) * gc.phi(i, j));
    }
  }
  return S;
}

// Aggregate β→∞ Slutsky matrix for identical agents: −μ(φ+ψ).
inline Matrix closed_form_aggregate_slutsky(const ModelSpec& spec, std::span<const double> xbar) {
  const auto gc = gaussian_correlations(spec, xbar);
  const double mu = stationary_mu_infinite(spec, xbar);
  return -mu * (gc.phi + gc.psi);
}

// ---------------------------------------------------------------------------
// Hamiltonian mean-field variant

struct HamiltonianSolution {
  Vector x;
  std::vector<bool> stable;
  std::optional<double> J_crit;
  int iterations = 0;
};

namespace detail {

inline Vector hamiltonian_fixed_point(const ModelSpec& spec, double w, double J, double rho, int* iters) {
  const int M = spec.num_goods;
  Vector x(M);
  double tot = 0.0;
  for (int i = 0; i < M; ++i) tot += spec.preferences[i];
  for (int i = 0; i < M; ++i) x[i] = w / spec.prices[i] * spec.preferences[i] / tot;
  const double eta = 0.5;
  Vector t(M);
  for (int it = 1; it <= 200000; ++it) {
    double s = 0.0;
    for (int i = 0; i < M; ++i) {
      t[i] = spec.preferences[i] * (1.0 + J * rho * std::pow(x[i], 2.0 * rho));
      s += t[i];
    }
    for (int i = 0; i < M; ++i) t[i] = w / spec.prices[i] * t[i] / s;
    const double diff = (t - x).cwiseAbs().maxCoeff();
    x = (1.0 - eta) * x + eta * t;
    if (iters) *iters = it;
    if (diff <= 1e-14 * std::max(1.0, x.cwiseAbs().maxCoeff())) return x;
  }
  throw NoConvergence("hamiltonian fixed point iteration did not converge");
}

}  // namespace detail

inline HamiltonianSolution hamiltonian_meanfield(const ModelSpec& spec, double w) {
  const auto* h = std::get_if<PairwiseHamiltonian>(&spec.interaction);
  if (!h) throw VariantError("hamiltonian_meanfield requires PairwiseHamiltonian");
  if (!(h->rho > 0.0 && h->rho <= 1.0)) throw DomainError("rho must lie in (0, 1]");
  if (!(h->J >= 0.0)) throw DomainError("J must be >= 0");
  const int M = spec.num_goods;
  HamiltonianSolution sol;
  sol.x = detail::hamiltonian_fixed_point(spec, w, h->J, h->rho, &sol.iterations);
  auto margin = [&](double J, const Vector& x) {
    double m = Infinity;
    for (int i = 0; i < M; ++i) m = std::min(m, 1.0 - J * h->rho * (2.0 * h->rho - 1.0) * std::pow(x[i], 2.0 * h->rho));
    return m;
  };
  sol.stable.resize(M);
  for (int i = 0; i < M; ++i) {
    sol.stable[i] = 1.0 - h->J * h->rho * (2.0 * h->rho - 1.0) * std::pow(sol.x[i], 2.0 * h->rho) > 0.0;
  }
  if (h->rho <= 0.5) return sol;
  auto unstable_at = [&](double J) {
    try {
      return margin(J, detail::hamiltonian_fixed_point(spec, w, J, h->rho, nullptr)) <= 0.0;
    } catch (const NoConvergence&) {
      return true;
    }
  };
  const int K = 240;
  const double l0 = std::log(1e-6), l1 = std::log(1e6);
  double prev = 0.0;
  for (int n = 0; n < K; ++n) {
    const double J = std::exp(l0 + (l1 - l0) * n / (K - 1));
    if (unstable_at(J)) {
      double a = prev, b = J;
      for (int it = 0; it < 200 && b - a > 1e-14 * b; ++it) {
        const double m = 0.5 * (a + b);
        if (unstable_at(m)) b = m;
        else a = m;
      }
      sol.J_crit = 0.5 * (a + b);
      return sol;
    }
    prev = J;
  }
  return sol;
}

}  // namespace slutsky
