#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "aes/simplex_oracle.hpp"
#include "aes/simplex_sampler.hpp"

namespace aes {
namespace {

SamplerState state_with(std::vector<double> w, double nu, double kappa, std::uint64_t period = 1000,
                        ResetMode mode = HardReset{}) {
  SamplerState s(SamplerConfig{.buffer_capacity = w.size(), .nu = nu, .kappa = kappa,
                               .reset_period = period, .reset_mode = mode});
  s.restore(std::move(w), 0);
  return s;
}

TEST(ComputeDistribution, MatchesHandEvaluation) {
  const auto p = compute_distribution(state_with({3, 0, 1}, 1.0, 0.0));
  const double z = 3.0 + std::sqrt(2.0);
  EXPECT_NEAR(p[0], 2.0 / z, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / z, 1e-15);
  EXPECT_NEAR(p[2], std::sqrt(2.0) / z, 1e-15);
  // The rounded values quoted alongside the example, good to about 5e-5.
  EXPECT_NEAR(p[0], 0.45310, 5e-5);
  EXPECT_NEAR(p[1], 0.22655, 5e-5);
  EXPECT_NEAR(p[2], 0.32036, 5e-5);
}

TEST(ComputeDistribution, SymmetricWeightsGiveUniform) {
  const auto p = compute_distribution(state_with({0, 0}, 3.7, 0.5));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(ComputeDistribution, FullMixingIsUniform) {
  const auto p = compute_distribution(state_with({100, 0, 7, 1e6}, 1.0, 1.0));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(p[i], 0.25);
}

TEST(ComputeDistribution, FloorHolds) {
  const auto p = compute_distribution(state_with({1e9, 0, 0, 0, 0}, 1e-3, 0.1));
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_GE(p[i], 0.1 / 5.0);
}

TEST(ComputeDistribution, MonotoneInOwnWeight) {
  auto s = state_with({1, 2, 3}, 1.0, 0.2);
  double prev = compute_distribution(s)[0];
  for (double w0 : {2.0, 5.0, 50.0, 500.0}) {
    s.restore({w0, 2, 3}, 0);
    const double cur = compute_distribution(s)[0];
    EXPECT_GE(cur, prev);
    prev = cur;
  }
}

TEST(ComputeDistribution, AgreesWithBruteForce) {
  const auto oracle = brute_force_simplex_min(inverse_weighted_objective({3, 0, 1}, 1.0), 3);
  const auto p = compute_distribution(state_with({3, 0, 1}, 1.0, 0.0));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], oracle[i], 1e-6);
}

TEST(RecordFeedback, ImportanceWeightsTheLoss) {
  auto s = state_with({0, 0}, 1.0, 0.1);
  const std::vector<std::size_t> sampled{0};
  const std::vector<double> d{2.0};
  record_feedback(s, sampled, d, SimplexDistribution::uniform(2));
  EXPECT_DOUBLE_EQ(s.weights()[0], 4.0);
  EXPECT_DOUBLE_EQ(s.weights()[1], 0.0);
  EXPECT_EQ(s.step(), 1u);
}

TEST(RecordFeedback, EmptyBatchOnlyAdvancesStep) {
  auto s = state_with({1.5, 2.5}, 1.0, 0.1);
  s.record_feedback(std::span<const Feedback>{});
  EXPECT_EQ(s.step(), 1u);
  EXPECT_DOUBLE_EQ(s.weights()[0], 1.5);
  EXPECT_DOUBLE_EQ(s.weights()[1], 2.5);
}

TEST(RecordFeedback, ZeroLossAddsNothing) {
  auto s = state_with({1, 1}, 1.0, 0.1);
  const std::vector<Feedback> f{{1, 0.0, 0.3}};
  s.record_feedback(f);
  EXPECT_DOUBLE_EQ(s.weights()[0], 1.0);
  EXPECT_DOUBLE_EQ(s.weights()[1], 1.0);
}

TEST(RecordFeedback, RejectsBadInputWithoutMutating) {
  auto s = state_with({1, 1}, 1.0, 0.1);
  const std::vector<Feedback> negative{{0, 1.0, 0.5}, {1, -1.0, 0.5}};
  EXPECT_THROW(s.record_feedback(negative), DataError);
  const std::vector<Feedback> nan{{0, std::nan(""), 0.5}};
  EXPECT_THROW(s.record_feedback(nan), DataError);
  const std::vector<Feedback> zero_p{{0, 1.0, 0.0}};
  EXPECT_THROW(s.record_feedback(zero_p), InvariantViolation);
  EXPECT_DOUBLE_EQ(s.weights()[0], 1.0);
  EXPECT_EQ(s.step(), 0u);
}

TEST(RecordFeedback, BatchAveragesDraws) {
  auto s = state_with({0, 0}, 1.0, 0.1);
  const std::vector<Feedback> f{{0, 1.0, 0.5}, {0, 1.0, 0.5}, {1, 3.0, 0.5}, {1, 1.0, 0.5}};
  s.record_feedback(f);
  EXPECT_DOUBLE_EQ(s.weights()[0], 1.0);
  EXPECT_DOUBLE_EQ(s.weights()[1], 2.0);
}

TEST(RecordFeedback, UnbiasedPerSlot) {
  // Fixed losses on every slot; w / N estimates d within a few standard errors.
  const std::vector<double> d{0.5, 2.0, 0.0, 8.0};
  auto s = state_with({0, 0, 0, 0}, 1.0, 0.0);
  const auto p = SimplexDistribution::from_weights(std::vector<double>{0.1, 0.2, 0.3, 0.4});
  Rng rng(7);
  constexpr int kDraws = 200000;
  for (int n = 0; n < kDraws; ++n) {
    const std::size_t i = draw(p, rng);
    const std::vector<Feedback> f{{i, d[i], p[i]}};
    s.record_feedback(f);
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double se = d[i] / p[i] * std::sqrt(p[i] * (1 - p[i]) / kDraws);
    EXPECT_NEAR(s.weights()[i] / kDraws, d[i], 4 * se + 1e-12) << "slot " << i;
  }
}

TEST(MaybeReset, HardClearsOnPeriod) {
  auto s = state_with({5, 2}, 1.0, 0.1, 3);
  s.restore({5, 2}, 3);
  EXPECT_TRUE(s.maybe_reset());
  EXPECT_DOUBLE_EQ(s.weights()[0], 0.0);
  EXPECT_DOUBLE_EQ(s.weights()[1], 0.0);
}

TEST(MaybeReset, SoftScales) {
  auto s = state_with({10, 0}, 1.0, 0.1, 4, SoftReset{0.9});
  s.restore({10, 0}, 8);
  EXPECT_TRUE(s.maybe_reset());
  EXPECT_DOUBLE_EQ(s.weights()[0], 9.0);
  EXPECT_DOUBLE_EQ(s.weights()[1], 0.0);
}

TEST(MaybeReset, OffPeriodIsNoOp) {
  auto s = state_with({5, 2}, 1.0, 0.1, 3);
  s.restore({5, 2}, 4);
  EXPECT_FALSE(s.maybe_reset());
  EXPECT_DOUBLE_EQ(s.weights()[0], 5.0);
  s.restore({5, 2}, 0);
  EXPECT_FALSE(s.maybe_reset());
  EXPECT_EQ(s.reset_count(), 0u);
}

TEST(MaybeReset, AnnealedInterpolatesRho) {
  auto s = state_with({10}, 1.0, 0.1, 5, AnnealedSoftReset{0.7, 0.2, 10});
  s.restore({10}, 5);
  EXPECT_DOUBLE_EQ(s.current_rho(), 0.45);
  EXPECT_TRUE(s.maybe_reset());
  EXPECT_DOUBLE_EQ(s.weights()[0], 4.5);
  s.restore({10}, 50);
  EXPECT_DOUBLE_EQ(s.current_rho(), 0.2);
}

TEST(LambdaRatio, Values) {
  EXPECT_DOUBLE_EQ(lambda_ratio(SimplexDistribution::uniform(10), 3), 1.0);
  std::vector<double> p10(10, 0.95 / 9.0);
  p10[0] = 0.05;
  EXPECT_DOUBLE_EQ(lambda_ratio(SimplexDistribution(p10), 0), 2.0);
  EXPECT_DOUBLE_EQ(lambda_ratio(SimplexDistribution(std::vector<double>{0.5, 0.2, 0.2, 0.1}), 0), 0.5);
  EXPECT_THROW(lambda_ratio(SimplexDistribution(std::vector<double>{1.0, 0.0}), 1), InvariantViolation);
}

TEST(SamplerConfig, Validation) {
  EXPECT_THROW(SamplerState(SamplerConfig{.buffer_capacity = 2, .kappa = 1.5}), ConfigError);
  EXPECT_THROW(SamplerState(SamplerConfig{.buffer_capacity = 2, .nu = 0.0}), ConfigError);
  EXPECT_THROW(SamplerState(SamplerConfig{.buffer_capacity = 2, .reset_period = 0}), ConfigError);
  EXPECT_THROW(SamplerState(SamplerConfig{.buffer_capacity = 0}), ConfigError);
}

TEST(SimplexOracle, TwoSlotClosedForm) {
  const auto p = brute_force_simplex_min(inverse_weighted_objective({1, 3}), 2);
  const double z = 1.0 + std::sqrt(3.0);
  EXPECT_NEAR(p[0], 1.0 / z, 1e-7);
  EXPECT_NEAR(p[1], std::sqrt(3.0) / z, 1e-7);
}

TEST(SimplexOracle, ProjectionLandsOnSimplex) {
  const auto x = project_to_simplex(std::vector<double>{0.9, -2.0, 0.6});
  EXPECT_NEAR(std::accumulate(x.begin(), x.end(), 0.0), 1.0, 1e-15);
  EXPECT_NEAR(x[0], 0.65, 1e-15);
  EXPECT_DOUBLE_EQ(x[1], 0.0);
  EXPECT_NEAR(x[2], 0.35, 1e-15);
}

}  // namespace
}  // namespace aes
