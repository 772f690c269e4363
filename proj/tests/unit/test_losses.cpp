// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cordlab/losses.hpp"
#include "cordlab/rng.hpp"
#include "oracles.hpp"

using namespace cordlab;

namespace {

TokenDistribution dist(std::vector<double> p) { return TokenDistribution{std::move(p)}; }

TokenDistribution random_simplex(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  double z = 0.0;
  for (auto& x : p) {
    x = -std::log(1.0 - rng.uniform());
    z += x;
  }
  for (auto& x : p) x /= z;
  return dist(p);
}

}  // namespace

TEST(Nll, UniformVocabFourIsLnFour) {
  std::vector<TokenDistribution> d{dist({0.25, 0.25, 0.25, 0.25})};
  EXPECT_NEAR(nll_loss(d, make_tokens({2})).value, std::log(4.0), 1e-12);
}

TEST(Nll, TwoStepSum) {
  std::vector<TokenDistribution> d{dist({0.5, 0.5, 0.0}), dist({0.25, 0.5, 0.25})};
  EXPECT_NEAR(nll_loss(d, make_tokens({0, 2})).value, std::log(2.0) + std::log(4.0), 1e-12);
}

TEST(Nll, CertainGoldIsZero) {
  std::vector<TokenDistribution> d{dist({0.0, 1.0}), dist({1.0, 0.0})};
  EXPECT_EQ(nll_loss(d, make_tokens({1, 0})).value, 0.0);
}

TEST(Nll, FloorClampIsCounted) {
  std::vector<TokenDistribution> d{dist({1.0, 0.0})};
  auto r = nll_loss(d, make_tokens({1}));
  EXPECT_EQ(r.floor_clamps, 1u);
  EXPECT_NEAR(r.value, -std::log(kProbFloor), 1e-9);
}

TEST(Jsd, IdentityIsZero) {
  Rng rng(1);
  auto p = random_simplex(rng, 7);
  EXPECT_EQ(jsd_value(p, p), 0.0);
}

TEST(Jsd, DisjointPointMassesAreLnTwo) {
  EXPECT_NEAR(jsd_value(dist({1.0, 0.0}), dist({0.0, 1.0})), std::numbers::ln2, 1e-12);
}

TEST(Jsd, HalfHalfVersusQuarter) {
  const double v = jsd_value(dist({0.5, 0.5}), dist({0.25, 0.75}));
  EXPECT_NEAR(v, 0.033822, 1e-6);
  EXPECT_NEAR(v, oracle::jsd({0.5, 0.5}, {0.25, 0.75}), 1e-10);
}

TEST(Jsd, AgreesWithOracleOnRandomPairs) {
  Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t n = 2 + rng.below(30);
    auto p = random_simplex(rng, n);
    auto q = random_simplex(rng, n);
    worst = std::max(worst, std::fabs(jsd_value(p, q) - oracle::jsd(p.probs, q.probs)));
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(Jsd, SymmetricBitForBitAndBounded) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    auto p = random_simplex(rng, 6);
    auto q = random_simplex(rng, 6);
    const double a = jsd_value(p, q), b = jsd_value(q, p);
    EXPECT_EQ(a, b);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, std::numbers::ln2 + 1e-12);
  }
}

TEST(Jsd, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_simplex(rng, 5);
    auto q = random_simplex(rng, 5);
    auto g = jsd(p, q);
    auto fp = [&](const std::vector<double>& x) { return jsd_value(dist(x), q); };
    auto fq = [&](const std::vector<double>& x) { return jsd_value(p, dist(x)); };
    // Step well below the smallest probability so log curvature stays resolved.
    const double h = 1e-3 * std::min(*std::ranges::min_element(p.probs), *std::ranges::min_element(q.probs));
    EXPECT_LE(oracle::max_relative_error(g.grad_p, oracle::fd_gradient(fp, p.probs, h)), 1e-4);
    EXPECT_LE(oracle::max_relative_error(g.grad_q, oracle::fd_gradient(fq, q.probs, h)), 1e-4);
  }
}

TEST(Consistency, IdenticalSequencesAreZeroInAnyMode) {
  Rng rng(3);
  std::vector<TokenDistribution> a{random_simplex(rng, 4), random_simplex(rng, 4)};
  EXPECT_EQ(consistency_loss(a, a, ConsistencyMode::all_steps()).value, 0.0);
  EXPECT_EQ(consistency_loss(a, a, ConsistencyMode::first_k(1)).value, 0.0);
}

TEST(Consistency, FirstKOneIsFirstPairOnly) {
  Rng rng(4);
  std::vector<TokenDistribution> a{random_simplex(rng, 4), random_simplex(rng, 4), random_simplex(rng, 4)};
  std::vector<TokenDistribution> b{random_simplex(rng, 4), random_simplex(rng, 4), random_simplex(rng, 4)};
  EXPECT_EQ(consistency_loss(a, b, ConsistencyMode::first_k(1)).value, jsd_value(a[0], b[0]));
  const double all = consistency_loss(a, b, ConsistencyMode::all_steps()).value;
  for (int k = 1; k <= 3; ++k) EXPECT_GE(all, consistency_loss(a, b, ConsistencyMode::first_k(k)).value);
}

TEST(Consistency, FirstKRejectsBadK) {
  EXPECT_THROW(ConsistencyMode::first_k(0), std::invalid_argument);
  Rng rng(4);
  std::vector<TokenDistribution> a{random_simplex(rng, 4)};
  EXPECT_THROW(consistency_loss(a, a, ConsistencyMode::first_k(2)), std::invalid_argument);
}

TEST(Combined, Definition) {
  auto b = combined_loss(2.0, 3.0, 0.05, 10.0);
  EXPECT_NEAR(b.combined, 3.0, 1e-12);
  EXPECT_EQ(combined_loss(2.0, 3.0, 0.7, 0.0).combined, 2.5);
  EXPECT_EQ(combined_loss(2.0, 3.0, 0.0, 1.0).combined, combined_loss(2.0, 3.0, 0.0, 10.0).combined);
}
