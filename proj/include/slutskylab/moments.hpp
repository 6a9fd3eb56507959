#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "slutskylab/errors.hpp"

namespace slutsky {

// Flat layout of the equilibrium expectations consumed by the estimators.
// Agent-indexed blocks are stored agent-major; g^α denotes ∂U/∂x_k^α for a reference good k.
struct MomentLayout {
  int N = 0, M = 0;
  std::vector<int> refs;  // reference goods; empty disables the utility moments
  bool budget = false;    // realized-budget moments (grand canonical)

  std::size_t n_mean() const { return std::size_t(N) * M; }
  std::size_t n_second() const { return std::size_t(N) * M * M; }
  std::size_t n_bar2() const { return std::size_t(M) * M; }
  std::size_t n_barcross() const { return refs.empty() ? 0 : std::size_t(N) * M * M; }
  std::size_t n_per_ref() const {
    return std::size_t(N) + std::size_t(N) * M + std::size_t(N) * M * M + std::size_t(N) * M + std::size_t(M) * M;
  }

  std::size_t off_mean() const { return 0; }
  std::size_t off_second() const { return n_mean(); }
  std::size_t off_bar2() const { return off_second() + n_second(); }
  std::size_t off_herf() const { return off_bar2() + n_bar2(); }
  std::size_t off_budget2() const { return off_herf() + 1; }
  std::size_t off_barcross() const { return off_budget2() + (budget ? 1 : 0); }
  std::size_t off_ref(std::size_t r) const { return off_barcross() + n_barcross() + r * n_per_ref(); }
  std::size_t size() const { return off_ref(refs.size()); }

  // per-reference sub-offsets
  std::size_t off_g(std::size_t r) const { return off_ref(r); }
  std::size_t off_xg(std::size_t r) const { return off_g(r) + N; }
  std::size_t off_xxg(std::size_t r) const { return off_xg(r) + std::size_t(N) * M; }
  std::size_t off_barg(std::size_t r) const { return off_xxg(r) + std::size_t(N) * M * M; }
  std::size_t off_barv(std::size_t r) const { return off_barg(r) + std::size_t(N) * M; }

  int ref_slot(int good) const {
    for (std::size_t r = 0; r < refs.size(); ++r) {
      if (refs[r] == good) return static_cast<int>(r);
    }
    throw MissingMoments("no utility moments accumulated for the requested reference good");
  }
};

// Expectation values over the stationary measure (Monte Carlo averages or quadrature).
class MomentSet {
 public:
  MomentSet() = default;
  explicit MomentSet(MomentLayout layout) : L_(std::move(layout)), v_(L_.size(), 0.0) {}
  MomentSet(MomentLayout layout, std::vector<double> values) : L_(std::move(layout)), v_(std::move(values)) {
    if (v_.size() != L_.size()) throw DimensionMismatch("moment vector does not match layout");
  }

  const MomentLayout& layout() const { return L_; }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }
  int N() const { return L_.N; }
  int M() const { return L_.M; }
  bool has_utility_moments() const { return !L_.refs.empty(); }

  // ⟨x_i^α⟩
  double mean(int a, int i) const { return v_[L_.off_mean() + std::size_t(a) * L_.M + i]; }
  // ⟨x_i^α x_j^α⟩
  double second(int a, int i, int j) const { return v_[L_.off_second() + (std::size_t(a) * L_.M + i) * L_.M + j]; }
  // ⟨x̄_i x̄_j⟩
  double bar2(int i, int j) const { return v_[L_.off_bar2() + std::size_t(i) * L_.M + j]; }
  // time average of the instantaneous Herfindahl index
  double herfindahl() const { return v_[L_.off_herf()]; }
  // (1/N) Σ_α ⟨(p·x^α)²⟩
  double budget2() const { return L_.budget ? v_[L_.off_budget2()] : 0.0; }
  // ⟨x̄_i x_j^α⟩
  double barcross(int a, int i, int j) const {
    return v_[L_.off_barcross() + (std::size_t(a) * L_.M + i) * L_.M + j];
  }
  double g(int r, int a) const { return v_[L_.off_g(r) + a]; }
  double xg(int r, int a, int i) const { return v_[L_.off_xg(r) + std::size_t(a) * L_.M + i]; }
  double xxg(int r, int a, int i, int j) const { return v_[L_.off_xxg(r) + (std::size_t(a) * L_.M + i) * L_.M + j]; }
  double barg(int r, int a, int i) const { return v_[L_.off_barg(r) + std::size_t(a) * L_.M + i]; }
  // ⟨x̄_i v_j⟩, v_j = Σ_γ x_j^γ g^γ
  double barv(int r, int i, int j) const { return v_[L_.off_barv(r) + std::size_t(i) * L_.M + j]; }

  double mean_bar(int i) const {
    double s = 0.0;
    for (int a = 0; a < L_.N; ++a) s += mean(a, i);
    return s / L_.N;
  }

 private:
  MomentLayout L_;
  std::vector<double> v_;
};

// Adds one configuration's contributions (weight w) into a flat moment accumulator.
// x is the N×M state, xbar its agent mean, grads[r][α] the reference-good gradients.
inline void accumulate_moments(const MomentLayout& L, std::span<double> acc, std::span<const double> x,
                               std::span<const double> xbar, std::span<const double> prices,
                               double herf, const std::vector<std::vector<double>>& grads, double w = 1.0) {
  const int N = L.N, M = L.M;
  for (int a = 0; a < N; ++a) {
    const double* xa = x.data() + std::size_t(a) * M;
    double* mean = acc.data() + L.off_mean() + std::size_t(a) * M;
    double* sec = acc.data() + L.off_second() + std::size_t(a) * M * M;
    for (int i = 0; i < M; ++i) {
      mean[i] += w * xa[i];
      const double wx = w * xa[i];
      for (int j = 0; j < M; ++j) sec[i * M + j] += wx * xa[j];
    }
  }
  double* b2 = acc.data() + L.off_bar2();
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < M; ++j) b2[i * M + j] += w * xbar[i] * xbar[j];
  }
  acc[L.off_herf()] += w * herf;
  if (L.budget) {
    double s = 0.0;
    for (int a = 0; a < N; ++a) {
      double b = 0.0;
      for (int i = 0; i < M; ++i) b += prices[i] * x[std::size_t(a) * M + i];
      s += b * b;
    }
    acc[L.off_budget2()] += w * s / N;
  }
  if (L.refs.empty()) return;
  for (int a = 0; a < N; ++a) {
    const double* xa = x.data() + std::size_t(a) * M;
    double* bc = acc.data() + L.off_barcross() + std::size_t(a) * M * M;
    for (int i = 0; i < M; ++i) {
      const double wb = w * xbar[i];
      for (int j = 0; j < M; ++j) bc[i * M + j] += wb * xa[j];
    }
  }
  std::vector<double> v(M);
  for (std::size_t r = 0; r < L.refs.size(); ++r) {
    std::fill(v.begin(), v.end(), 0.0);
    for (int a = 0; a < N; ++a) {
      const double* xa = x.data() + std::size_t(a) * M;
      const double g = grads[r][a];
      const double wg = w * g;
      acc[L.off_g(r) + a] += wg;
      double* xg = acc.data() + L.off_xg(r) + std::size_t(a) * M;
      double* xxg = acc.data() + L.off_xxg(r) + std::size_t(a) * M * M;
      double* bg = acc.data() + L.off_barg(r) + std::size_t(a) * M;
      for (int i = 0; i < M; ++i) {
        xg[i] += wg * xa[i];
        bg[i] += wg * xbar[i];
        const double wgx = wg * xa[i];
        for (int j = 0; j < M; ++j) xxg[i * M + j] += wgx * xa[j];
        v[i] += xa[i] * g;
      }
    }
    double* bv = acc.data() + L.off_barv(r);
    for (int i = 0; i < M; ++i) {
      for (int j = 0; j < M; ++j) bv[i * M + j] += w * xbar[i] * v[j];
    }
  }
}

}  // namespace slutsky
