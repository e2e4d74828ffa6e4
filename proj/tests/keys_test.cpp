#include <gtest/gtest.h>

#include <cmath>
#include <bit>
#include <map>

#include "robosig/keys.hpp"
#include "support.hpp"

using namespace robosig;

TEST(RandomKey, SeededDrawsRepeat) {
  EXPECT_EQ(random_key(48, 5), random_key(48, 5));
  EXPECT_NE(random_key(48, 5), random_key(48, 6));
  EXPECT_EQ(random_key(48, 5).size(), 48u);
}

TEST(RandomKey, SingleBitKeyIsValid) {
  const auto k = random_key(1, 3);
  ASSERT_EQ(k.size(), 1u);
  EXPECT_LE(k[0], 1);
}

TEST(RandomKey, RejectsZeroLength) { EXPECT_THROW(random_key(0, 1), ContractViolation); }

TEST(RandomKey, PositionsLookUniform) {
  std::mt19937_64 rng(2024);
  std::vector<double> ones(48, 0.0);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    const auto k = random_key(48, rng);
    for (std::size_t i = 0; i < 48; ++i) ones[i] += k[i];
  }
  for (double c : ones) {
    EXPECT_GE(c / draws, 0.45);
    EXPECT_LE(c / draws, 0.55);
  }
}

TEST(MessageKeyText, RoundTripsAndRejectsJunk) {
  const auto k = random_key(48, 9);
  EXPECT_EQ(MessageKey::from_string(k.to_string()), k);
  EXPECT_THROW(MessageKey::from_string("0102"), ContractViolation);
  EXPECT_THROW(MessageKey::from_string(""), ContractViolation);
}

TEST(BitAccuracy, IdenticalAndComplement) {
  const auto k = random_key(48, 1);
  EXPECT_DOUBLE_EQ(bit_accuracy(k, k), 1.0);
  EXPECT_DOUBLE_EQ(bit_accuracy(k, k.complement()), 0.0);
  EXPECT_THROW(bit_accuracy(k, random_key(47, 1)), ContractViolation);
}

TEST(BitAccuracy, ComplementIdentityHoldsForRandomPairs) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto a = random_key(48, s), b = random_key(48, 1000 + s);
    EXPECT_DOUBLE_EQ(bit_accuracy(a, b), 1.0 - bit_accuracy(a, b.complement()));
  }
}

TEST(BitAccuracy, IndependentKeysAverageOneHalf) {
  double sum = 0;
  for (std::uint64_t s = 0; s < 2000; ++s) sum += bit_accuracy(random_key(48, s), random_key(48, 50000 + s));
  EXPECT_NEAR(sum / 2000, 0.5, 0.01);
}

TEST(Harden, SignsAndTieBreak) {
  const std::vector<double> up(8, 10.0), down(8, -10.0), zero(8, 0.0);
  EXPECT_EQ(harden(std::span<const double>(up)).to_string(), "11111111");
  EXPECT_EQ(harden(std::span<const double>(down)).to_string(), "00000000");
  EXPECT_EQ(harden(std::span<const double>(zero)).to_string(), "00000000");
}

// For independent Bernoulli(sigmoid(l_i)) bits, no key beats harden() in
// expected accuracy. Enumerates every candidate key.
TEST(Harden, MaximisesExpectedAccuracyExhaustively) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (std::size_t k = 1; k <= 10; ++k) {
    std::vector<double> logits(k);
    for (auto& l : logits) l = normal(rng);
    std::vector<double> p(k);
    for (std::size_t i = 0; i < k; ++i) p[i] = 1.0 / (1.0 + std::exp(-logits[i]));
    auto expected = [&](std::uint64_t mask) {
      double acc = 0;
      for (std::size_t i = 0; i < k; ++i) acc += (mask >> i & 1) ? p[i] : 1.0 - p[i];
      return acc / static_cast<double>(k);
    };
    const auto hard = harden(std::span<const double>(logits));
    std::uint64_t hard_mask = 0;
    for (std::size_t i = 0; i < k; ++i) hard_mask |= std::uint64_t(hard[i]) << i;
    double best = 0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << k); ++mask) best = std::max(best, expected(mask));
    EXPECT_NEAR(expected(hard_mask), best, 1e-12) << "k=" << k;
  }
}

TEST(MessageLoss, ZeroLogitsGiveKLnTwo) {
  const std::vector<double> zeros(48, 0.0);
  const double frozen = 33.27106466687737;
  EXPECT_NEAR(message_loss(std::span<const double>(zeros), random_key(48, 3)), frozen, 1e-12);
  EXPECT_NEAR(message_loss(std::span<const double>(zeros), random_key(48, 4)), frozen, 1e-12);
}

TEST(MessageLoss, ConfidentCorrectLogitsCostNothing) {
  const auto key = random_key(48, 11);
  std::vector<double> logits(48);
  for (std::size_t i = 0; i < 48; ++i) logits[i] = key[i] ? 20.0 : -20.0;
  EXPECT_LE(message_loss(std::span<const double>(logits), key), 1e-6);
}

TEST(MessageLoss, GradientMatchesCentralDifferences) {
  const auto key = random_key(48, 12);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::vector<double> logits(48), grad(48);
  for (auto& l : logits) l = normal(rng);
  message_loss(std::span<const double>(logits), key, std::span<double>(grad));
  for (std::size_t i = 0; i < 48; ++i) {
    auto shifted = logits;
    const double h = 1e-6;
    shifted[i] = logits[i] + h;
    const double up = message_loss(std::span<const double>(shifted), key);
    shifted[i] = logits[i] - h;
    const double down = message_loss(std::span<const double>(shifted), key);
    EXPECT_TRUE(robosig::testing::gradients_agree(grad[i], (up - down) / (2 * h), 1e-4)) << i;
  }
}

TEST(MessageLoss, RejectsNonFiniteAndMismatchedInput) {
  std::vector<double> bad(4, 0.0);
  bad[2] = std::nan("");
  EXPECT_THROW(message_loss(std::span<const double>(bad), random_key(4, 1)), ContractViolation);
  EXPECT_THROW(message_loss(std::span<const double>(bad), random_key(5, 1)), ContractViolation);
}

TEST(GradualKey, FirstStepsFlipExactlyOneBit) {
  const auto base = random_key(48, 21);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    EXPECT_EQ(hamming_distance(base, gradual_key(base, 0, 100, seed)), 1u);
    EXPECT_EQ(hamming_distance(base, gradual_key(base, 1, 100, seed)), 1u);
  }
}

TEST(GradualKey, HalfwayFlipsTwentyFourBits) {
  const auto base = random_key(48, 22);
  EXPECT_EQ(gradual_flip_count(48, 50, 100), 24u);
  for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_EQ(hamming_distance(base, gradual_key(base, 50, 100, seed)), 24u);
}

TEST(GradualKey, FlipCountGrowsMonotonically) {
  std::size_t prev = 0;
  for (long t = 0; t <= 100; ++t) {
    const auto n = gradual_flip_count(48, t, 100);
    EXPECT_GE(n, prev);
    prev = n;
  }
  EXPECT_EQ(prev, 48u);
}

TEST(GradualKey, FinalStepIsUniform) {
  const auto base = random_key(48, 23);
  double sum = 0;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) sum += bit_accuracy(base, gradual_key(base, 100, 100, seed));
  EXPECT_NEAR(sum / 2000, 0.5, 0.01);
}

TEST(GradualKey, DeterministicPerStepAndSeed) {
  const auto base = random_key(48, 24);
  EXPECT_EQ(gradual_key(base, 37, 100, 5), gradual_key(base, 37, 100, 5));
  EXPECT_THROW(gradual_key(base, 101, 100, 5), ContractViolation);
  EXPECT_THROW(gradual_key(base, 0, 0, 5), ContractViolation);
}

TEST(DetectionPValue, Endpoints) {
  EXPECT_DOUBLE_EQ(detection_pvalue(0, 48), 1.0);
  EXPECT_DOUBLE_EQ(detection_pvalue(48, 48), std::ldexp(1.0, -48));
  EXPECT_THROW(detection_pvalue(49, 48), ContractViolation);
}

TEST(DetectionPValue, FortyEightBitsThirtyTwoMatched) {
  EXPECT_NEAR(detection_pvalue(32, 48), 0.01465247336026465, 1e-15);
}

TEST(DetectionPValue, MatchesEnumerationUpToTwentyBits) {
  for (std::size_t k = 1; k <= 20; ++k) {
    std::vector<std::uint64_t> by_weight(k + 1, 0);
    for (std::uint64_t m = 0; m < (std::uint64_t(1) << k); ++m) ++by_weight[std::popcount(m)];
    for (std::size_t matched = 0; matched <= k; ++matched) {
      std::uint64_t count = 0;
      for (std::size_t w = matched; w <= k; ++w) count += by_weight[w];
      const double brute = static_cast<double>(count) / static_cast<double>(std::uint64_t(1) << k);
      EXPECT_NEAR(detection_pvalue(matched, k), brute, 1e-15) << k << "/" << matched;
    }
  }
}

TEST(DeriveSeed, SeparatesTags) {
  std::map<std::uint64_t, int> seen;
  for (std::uint64_t t = 0; t < 1000; ++t) ++seen[derive_seed(42, t)];
  EXPECT_EQ(seen.size(), 1000u);
}
