#include <cmath>

#include <gtest/gtest.h>

#include "slutskylab/oracle.hpp"
#include "slutskylab/sampler.hpp"

using namespace slutsky;

TEST(Quadrature, BetaTwoTwoInstance) {
  const auto s = make_spec(2, 1, 1.0, 1.0, 1.0, 1.0);
  const auto q = quadrature_moments(s);
  EXPECT_NEAR(q.Z, 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(q.means(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(q.cov_same(0, 0), 0.05, 1e-12);
  EXPECT_NEAR(q.cov_same(0, 1), -0.05, 1e-12);
  EXPECT_NEAR(q.gamma, 3.0, 1e-6);
  EXPECT_TRUE(q.converged);
  EXPECT_LT(q.convergence, 1e-8);
}

TEST(Quadrature, ExchangeSymmetryAndUniformMeasure) {
  const auto s = make_spec(2, 1, 2.0, 1.5, 3.0, 2.0);
  const auto q = quadrature_moments(s);
  EXPECT_NEAR(q.means(0, 0), q.means(0, 1), 1e-10);
  EXPECT_NEAR(q.means(0, 0), 3.0 / 4.0, 1e-10);
  for (int M : {2, 3}) {
    auto u = make_spec(M, 1, 1.0, 1.0, 2.0, 0.0);
    u.prices = M == 2 ? std::vector<double>{1.0, 3.0} : std::vector<double>{1.0, 3.0, 0.5};
    u.preferences.assign(M, 0.7);
    const auto qu = quadrature_moments(u);
    for (int i = 0; i < M; ++i) EXPECT_NEAR(qu.means(0, i), 2.0 / (M * u.prices[i]), 1e-9);
  }
}

TEST(Quadrature, ThreeGoodsAgainstDirichletMoments) {
  auto s = make_spec(3, 1, 1.0, 1.0, 1.0, 2.0);
  s.preferences = {0.5, 1.0, 2.0};
  const auto q = quadrature_moments(s);
  // shares follow Dirichlet(1 + βa)
  double A = 0;
  for (double a : s.preferences) A += 1 + s.beta * a;
  for (int i = 0; i < 3; ++i) {
    const double ai = 1 + s.beta * s.preferences[i];
    EXPECT_NEAR(q.means(0, i), ai / A, 1e-9);
    EXPECT_NEAR(q.cov_same(i, i), ai * (A - ai) / (A * A * (A + 1)), 1e-9);
  }
  EXPECT_TRUE(q.converged);
}

TEST(Quadrature, GateFlagsWeakBoundarySingularity) {
  // βa = 0.2 makes the utility-gradient moments singular at the simplex edge
  auto s = make_spec(2, 1, 1.0, 1.0, 1.0, 0.5);
  s.preferences = {0.4, 1.0};
  const auto q = quadrature_moments(s);
  EXPECT_FALSE(q.converged);
  EXPECT_GE(q.convergence, 1e-8);
  const double a1 = 1 + 0.2, a2 = 1 + 0.5;
  EXPECT_NEAR(q.means(0, 0), a1 / (a1 + a2), 1e-8);
}

TEST(Quadrature, TwoAgentInteractingInstance) {
  const auto s = make_spec(2, 2, 1.0, 1.0, 1.0, 1.5, MeanFieldPreference{0.4, 2.0});
  const auto q = quadrature_moments(s);
  EXPECT_TRUE(q.converged) << q.convergence;
  EXPECT_NEAR(q.means(0, 0), 0.5, 1e-9);  // symmetric goods
  EXPECT_NEAR(q.means(0, 0), q.means(1, 0), 1e-12);
}

TEST(Quadrature, UnsupportedSizes) {
  EXPECT_THROW(quadrature_moments(make_spec(4, 1, 1, 1, 1, 1)), UnsupportedSize);
  EXPECT_THROW(quadrature_moments(make_spec(3, 2, 1, 1, 1, 1)), UnsupportedSize);
  EXPECT_THROW(quadrature_moments(make_spec(2, 3, 1, 1, 1, 1)), UnsupportedSize);
  QuadratureConfig cfg;
  cfg.nodes = 32;
  EXPECT_THROW(quadrature_moments(make_spec(2, 1, 1, 1, 1, 1), cfg), ConfigError);
}

TEST(OracleSlutsky, DefinitionalMatrix) {
  const auto S = oracle_slutsky_fd(make_spec(2, 1, 1.0, 1.0, 1.0, 1.0));
  EXPECT_NEAR(S[0](0, 0), -0.25, 1e-6);
  EXPECT_NEAR(S[0](0, 1), 0.25, 1e-6);
  EXPECT_NEAR(S[0](1, 0), 0.25, 1e-6);
  EXPECT_NEAR(S[0](1, 1), -0.25, 1e-6);
}

TEST(OracleSlutsky, SymmetricAndBudgetIdentity) {
  for (int M : {2, 3}) {
    auto s = make_spec(M, 1, 1.0, 1.0, 2.0, 1.7);
    s.prices = M == 2 ? std::vector<double>{1.0, 1.8} : std::vector<double>{1.0, 1.8, 0.6};
    s.preferences = M == 2 ? std::vector<double>{0.8, 1.3} : std::vector<double>{0.8, 1.3, 2.0};
    const auto S = oracle_slutsky_fd(s)[0];
    EXPECT_LE((S - S.transpose()).cwiseAbs().maxCoeff(), 1e-8);
    for (int i = 0; i < M; ++i) {
      double r = 0;
      for (int j = 0; j < M; ++j) r += S(i, j) * s.prices[j];
      EXPECT_NEAR(r, 0.0, 1e-6);
    }
  }
}

TEST(OracleVsChain, MeansAndCovariancesWithinErrors) {
  auto s3 = make_spec(3, 1, 1.0, 1.0, 1.0, 1.0);
  s3.prices = {1.0, 2.0, 0.5};
  const std::vector<ModelSpec> cases{make_spec(2, 1, 1.0, 1.0, 1.0, 1.0), s3,
                                     make_spec(2, 2, 1.0, 1.0, 1.0, 1.5, MeanFieldPreference{0.4, 2.0})};
  for (const auto& s : cases) {
    const auto q = quadrature_moments(s);
    ChainConfig cfg;
    cfg.seed = 21;
    cfg.measure_sweeps = 150000;
    const auto o = run_chain(s, cfg);
    for (int i = 0; i < s.num_goods; ++i) {
      EXPECT_NEAR(o.mean_basket[i], q.moments.mean_bar(i), 3.5 * o.mean_basket_se[i]);
      for (int j = 0; j < s.num_goods; ++j) {
        EXPECT_NEAR(o.cov_same(i, j), q.cov_same(i, j), 3.5 * o.cov_same_se(i, j) + 1e-12);
      }
    }
  }
}
