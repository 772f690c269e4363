// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include <gtest/gtest.h>

#include "cordlab/perturbation.hpp"
#include "cordlab/rng.hpp"
#include "oracles.hpp"

using namespace cordlab;

namespace {

// Context i carries token i and score n - i.
ContextSequence ranked(int n) {
  std::vector<Context> v;
  for (int i = 0; i < n; ++i) v.push_back(Context{{Token{i}}, static_cast<double>(n - i)});
  return ContextSequence::from_retriever(v);
}

std::vector<int> ids(const ContextSequence& c) {
  std::vector<int> out;
  for (const auto& x : c) out.push_back(x.tokens.front().id);
  return out;
}

}  // namespace

TEST(FullShuffle, SingleElementUnchanged) {
  EXPECT_EQ(full_shuffle(ranked(1), 77), ranked(1));
}

TEST(FullShuffle, UniformOverPermutations) {
  const auto c = ranked(4);
  const double p = oracle::permutation_uniformity_pvalue(4, 24000, [&](int t) {
    return ids(full_shuffle(c, derive_seed(100, static_cast<std::uint64_t>(t))));
  });
  EXPECT_GT(p, 0.001);
}

TEST(FullShuffle, PreservesMultisetAndIsDeterministic) {
  const auto c = ranked(9);
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto a = full_shuffle(c, s);
    EXPECT_EQ(a, full_shuffle(c, s));
    auto x = a.contexts();
    std::sort(x.begin(), x.end(), [](const Context& l, const Context& r) { return l.score > r.score; });
    EXPECT_EQ(ContextSequence(x), c);
  }
}

TEST(TailSize, Values) {
  EXPECT_EQ(tail_size(10, 0.5), 5);
  EXPECT_EQ(tail_size(5, 0.37), 2);
  for (int n = 1; n <= 32; ++n) {
    EXPECT_EQ(tail_size(n, 0.0), 0);
    EXPECT_EQ(tail_size(n, 1.0), n);
  }
}

TEST(TailSize, MatchesOracleAndIsMonotone) {
  for (int n = 1; n <= 20; ++n) {
    int prev = 0;
    for (int k = 0; k <= 100; ++k) {
      const double a = k / 100.0;
      const int m = tail_size(n, a);
      EXPECT_EQ(m, oracle::tail_size(n, a)) << "n=" << n << " alpha=" << a;
      EXPECT_GE(m, prev);
      prev = m;
    }
  }
  EXPECT_THROW(tail_size(4, 1.5), std::invalid_argument);
  EXPECT_THROW(tail_size(0, 0.5), std::invalid_argument);
}

TEST(Interpolate, AlphaZeroIsIdentity) {
  const auto c = ranked(7);
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(interpolate_perturb(c, {0.0, s}), c);
}

TEST(Interpolate, HeadKeptTailPermuted) {
  const auto c = ranked(10);
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto out = ids(interpolate_perturb(c, {0.5, s}));
    for (int i = 0; i < 5; ++i) EXPECT_EQ(out[static_cast<std::size_t>(i)], i);
    std::vector<int> tail(out.begin() + 5, out.end());
    std::sort(tail.begin(), tail.end());
    EXPECT_EQ(tail, (std::vector<int>{5, 6, 7, 8, 9}));
  }
}

TEST(Interpolate, AlphaOneIsUniform) {
  const auto c = ranked(4);
  const double p = oracle::permutation_uniformity_pvalue(4, 24000, [&](int t) {
    return ids(interpolate_perturb(c, {1.0, derive_seed(200, static_cast<std::uint64_t>(t))}));
  });
  EXPECT_GT(p, 0.001);
}

TEST(Interpolate, HalfOfFourSwapsTailHalfTheTime) {
  const auto c = ranked(4);
  std::size_t swaps = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    auto out = ids(interpolate_perturb(c, {0.5, derive_seed(300, static_cast<std::uint64_t>(t))}));
    ASSERT_EQ(out[0], 0);
    ASSERT_EQ(out[1], 1);
    swaps += out[2] == 3 ? 1 : 0;
  }
  EXPECT_TRUE(oracle::within_binomial(swaps, trials, 0.5));
}

TEST(ScoreAwareAlpha, HandValues) {
  EXPECT_DOUBLE_EQ(score_aware_alpha(std::vector<double>{0.9, 0.85, 0.5, 0.45, 0.4}), 0.6);
  EXPECT_DOUBLE_EQ(score_aware_alpha(std::vector<double>{1.0, 0.0}), 0.5);
  EXPECT_DOUBLE_EQ(score_aware_alpha(std::vector<double>{4, 3, 2, 1}), 0.75);
}

TEST(ScoreAwareAlpha, RejectsBadInput) {
  EXPECT_THROW(score_aware_alpha(std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(score_aware_alpha(std::vector<double>{1.0, 1.0}), std::invalid_argument);
}
