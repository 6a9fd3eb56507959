#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "slutskylab/model.hpp"

using namespace slutsky;

namespace {

std::vector<double> random_state(int N, int M, std::uint64_t seed, double lo = 0.2, double hi = 3.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> x(static_cast<std::size_t>(N) * M);
  for (auto& v : x) v = u(rng);
  return x;
}

}  // namespace

TEST(GlobalUtility, SingleAgentLogUtility) {
  auto s = make_spec(2, 1, 1.0, 1.0, 1.0, 1.0);
  s.preferences = {1.0, 2.0};
  const Allocation x(s, {std::numbers::e, std::exp(2.0)});
  EXPECT_NEAR(global_utility(s, x), 5.0, 1e-12);
}

TEST(GlobalUtility, MeanFieldTwoAgents) {
  const auto s = make_spec(2, 2, 1.0, 1.0, 1.0, 1.0, MeanFieldPreference{1.0, 2.0});
  const double e = std::numbers::e;
  const Allocation x(s, {e, e, e, e});
  EXPECT_NEAR(global_utility(s, x), 4.0 * (1.0 + e * e), 1e-10);
  EXPECT_NEAR(global_utility(s, x), 33.5562, 1e-4);
}

TEST(GlobalUtility, RejectsNonPositive) {
  const auto s = make_spec(2, 1, 1.0, 1.0, 1.0, 1.0);
  EXPECT_THROW(Allocation(s, {0.0, 1.0}), NonPositiveQuantity);
  EXPECT_THROW(Allocation(s, {1.0}), DimensionMismatch);
}

TEST(DeltaUtility, MatchesDifferenceOfGlobalUtilities) {
  for (auto inter : {Interaction{NonInteracting{}}, Interaction{MeanFieldPreference{0.3, 2.0}},
                     Interaction{MeanFieldPreference{0.1, 1.5}}, Interaction{PairwiseHamiltonian{0.7, 0.8}}}) {
    auto s = make_spec(3, 5, 1.0, 1.0, 1.0, 1.0, inter);
    s.preferences = {0.5, 1.0, 2.0};
    Allocation x(s, random_state(5, 3, 3));
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.2, 3.0);
    for (int t = 0; t < 20; ++t) {
      const int a = t % 5;
      std::vector<double> y{u(rng), u(rng), u(rng)};
      const double before = global_utility(s, x);
      const double d = delta_utility(s, x, a, y);
      Allocation x2 = x;
      x2.set_basket(a, y);
      EXPECT_NEAR(d, global_utility(s, x2) - before, 1e-10);
      x = x2;
    }
  }
}

TEST(DeltaUtility, SingleGoodLogStep) {
  const auto s = make_spec(2, 1, 1.0, 1.0, 2.0, 1.0);
  const Allocation x(s, {1.0, 1.0});
  EXPECT_NEAR(delta_utility(s, x, 0, std::vector<double>{std::numbers::e, 1.0}), 1.0, 1e-12);
}

TEST(UtilityGradient, SingleAgent) {
  const auto s = make_spec(1, 1, 1.0, 2.0, 4.0, 1.0);
  const Allocation x(s, {4.0});
  EXPECT_NEAR(utility_gradient(s, x)(0, 0), 0.5, 1e-14);
}

TEST(UtilityGradient, MatchesFiniteDifferences) {
  for (auto inter : {Interaction{MeanFieldPreference{0.05, 2.0}}, Interaction{PairwiseHamiltonian{0.4, 0.75}}}) {
    auto s = make_spec(3, 4, 1.0, 1.0, 1.0, 1.0, inter);
    s.preferences = {1.0, 0.7, 1.3};
    const auto x0 = random_state(4, 3, 9);
    const Allocation x(s, x0);
    const Matrix g = utility_gradient(s, x);
    const double h = 1e-5;
    for (int a = 0; a < 4; ++a) {
      for (int i = 0; i < 3; ++i) {
        auto up = x0, dn = x0;
        up[a * 3 + i] += h;
        dn[a * 3 + i] -= h;
        const double fd = (global_utility(s, Allocation(s, up)) - global_utility(s, Allocation(s, dn))) / (2 * h);
        EXPECT_NEAR(g(a, i), fd, 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST(HessianBlocks, InteractionFreeDiagonal) {
  const auto s = make_spec(2, 3, 1.0, 1.0, 1.0, Infinity, MeanFieldPreference{0.0, 2.0});
  const auto hb = hessian_blocks(s, std::vector<double>{0.5, 0.5});
  EXPECT_NEAR(hb.A[0], -4.0, 1e-14);
  EXPECT_NEAR(hb.A[1], -4.0, 1e-14);
  EXPECT_NEAR(hb.B[0], 0.0, 1e-14);
}

TEST(HessianBlocks, SymmetricStateMatchesFiniteDifferenceHessian) {
  const int M = 2, N = 8;
  const auto s = make_spec(M, N, 1.0, 1.0, 1.0, Infinity, MeanFieldPreference{0.05, 2.0});
  const std::vector<double> xbar{1.3, 0.6};
  const auto hb = hessian_blocks(s, xbar);
  std::vector<double> x0;
  for (int a = 0; a < N; ++a) x0.insert(x0.end(), xbar.begin(), xbar.end());
  const double h = 1e-4;
  auto U = [&](const std::vector<double>& x) { return global_utility(s, Allocation(s, x)); };
  for (int i = 0; i < M; ++i) {
    // same-agent second derivative: A + B
    auto pp = x0, mm = x0;
    pp[i] += h;
    mm[i] -= h;
    const double d_same = (U(pp) - 2 * U(x0) + U(mm)) / (h * h);
    EXPECT_NEAR(d_same, hb.A[i] + hb.B[i], 1e-5 * std::abs(hb.A[i]));
    // cross-agent: B
    auto a = x0, b = x0, c = x0, d = x0;
    a[i] += h, a[M + i] += h;
    b[i] += h, b[M + i] -= h;
    c[i] -= h, c[M + i] += h;
    d[i] -= h, d[M + i] -= h;
    const double d_cross = (U(a) - U(b) - U(c) + U(d)) / (4 * h * h);
    EXPECT_NEAR(d_cross, hb.B[i], 1e-5 * std::abs(hb.A[i]));
    // collective direction: A + N B
    auto up = x0, dn = x0;
    for (int g = 0; g < N; ++g) up[g * M + i] += h, dn[g * M + i] -= h;
    const double d_coll = (U(up) - 2 * U(x0) + U(dn)) / (h * h) / N;
    EXPECT_NEAR(d_coll, hb.A[i] + N * hb.B[i], 1e-5 * std::abs(hb.A[i]));
  }
}

TEST(Allocation, IncrementalCachesMatchResync) {
  auto s = make_spec(3, 6, 1.0, 1.0, 1.0, 1.0, PairwiseHamiltonian{1.0, 0.6});
  Allocation x(s, random_state(6, 3, 5));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 4.0);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> y{u(rng), u(rng), u(rng)};
    x.set_basket(t % 6, y);
  }
  Allocation fresh(s, x.data());
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(x.mean_basket()[i], fresh.mean_basket()[i], 1e-12);
    EXPECT_NEAR(x.mean_log()[i], fresh.mean_log()[i], 1e-12);
    EXPECT_NEAR(x.power_sum()[i], fresh.power_sum()[i], 1e-10);
    EXPECT_NEAR(x.power_sq_sum()[i], fresh.power_sq_sum()[i], 1e-10);
  }
}

TEST(ModelSpec, ValidationErrors) {
  auto s = make_spec(2, 2, 1.0, 1.0, 1.0, 1.0);
  s.prices = {1.0};
  EXPECT_THROW(s.validate(), DimensionMismatch);
  s = make_spec(2, 2, 1.0, 1.0, 1.0, 1.0);
  s.prices[0] = -1;
  EXPECT_THROW(s.validate(), NonPositiveQuantity);
  s = make_spec(2, 2, 1.0, 1.0, 1.0, 1.0);
  s.mode = DecisionMode::SelfishConstantC;
  EXPECT_THROW(s.validate(), VariantError);
  s = make_spec(2, 2, 1.0, 1.0, 1.0, 1.0, PairwiseHamiltonian{1.0, 1.0});
  s.preferences = {1, 1, 1, 2};
  EXPECT_THROW(s.validate(), VariantError);
}

TEST(Herfindahl, NormalizedConcentration) {
  const std::vector<double> p{1, 1, 1, 1};
  EXPECT_NEAR(herfindahl(p, std::vector<double>{1, 1, 1, 1}), 0.0, 1e-14);
  EXPECT_NEAR(herfindahl(p, std::vector<double>{1, 1e-15, 1e-15, 1e-15}), 1.0, 1e-12);
}
