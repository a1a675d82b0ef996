#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "aes/regret.hpp"
#include "aes/simplex_oracle.hpp"
#include "aes/toy_rl/environment.hpp"

namespace aes {
namespace {

TEST(StaticCompetitor, SqrtProportional) {
  LossSequence seq(1, 2);
  seq(0, 0) = 4.0;
  seq(0, 1) = 1.0;
  const auto c = static_competitor(seq);
  EXPECT_NEAR(c.p[0], 2.0 / 3, 1e-15);
  EXPECT_NEAR(c.p[1], 1.0 / 3, 1e-15);
  EXPECT_FALSE(c.degenerate);
}

TEST(StaticCompetitor, EqualColumnSumsGiveUniform) {
  LossSequence seq(3, 3);
  const double rows[3][3] = {{1, 2, 3}, {3, 1, 2}, {2, 3, 1}};
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < 3; ++i) seq(t, i) = rows[t][i];
  }
  const auto c = static_competitor(seq);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(c.p[i], 1.0 / 3, 1e-15);
}

TEST(StaticCompetitor, AgreesWithBruteForce) {
  Rng rng(17);
  for (int instance = 0; instance < 50; ++instance) {
    LossSequence seq(20, 10);
    for (std::size_t t = 0; t < 20; ++t) {
      for (std::size_t i = 0; i < 10; ++i) seq(t, i) = rng.uniform(0.05, 2.0) * (1 + i);
    }
    const auto c = static_competitor(seq);
    const auto oracle = brute_force_simplex_min(inverse_weighted_objective(seq.column_sums()), 10);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(c.p[i], oracle[i], 1e-6);
  }
}

TEST(DynamicCompetitor, Values) {
  const auto c = dynamic_competitor(std::vector<double>{4, 1});
  EXPECT_NEAR(c.p[0], 2.0 / 3, 1e-15);
  EXPECT_FALSE(c.degenerate);
}

TEST(DynamicCompetitor, SingleSupportIsDegenerate) {
  const auto c = dynamic_competitor(std::vector<double>{0, 5, 0});
  EXPECT_TRUE(c.degenerate);
  EXPECT_DOUBLE_EQ(c.p[1], 1.0);
  const auto f = floored(c.p);
  EXPECT_GT(f[0], 0.0);
  EXPECT_TRUE(std::isfinite(variance_objective(std::vector<double>{1e-3, 5, 0}, f)));
  EXPECT_TRUE(dynamic_competitor(std::vector<double>{0, 0}).degenerate);
}

TEST(DynamicCompetitor, AgreesWithBruteForce) {
  Rng rng(3);
  for (int instance = 0; instance < 20; ++instance) {
    std::vector<double> row(8);
    for (double& v : row) v = std::pow(10.0, rng.uniform(-2, 1));
    const auto c = dynamic_competitor(row);
    const auto oracle = brute_force_simplex_min(inverse_weighted_objective(row), row.size());
    for (std::size_t i = 0; i < row.size(); ++i) EXPECT_NEAR(c.p[i], oracle[i], 1e-6);
    EXPECT_NEAR(variance_objective(row, c.p), min_inverse_weighted(row), 1e-9 * min_inverse_weighted(row));
  }
}

GeneratorFactory stationary(std::vector<double> row) {
  return [row](Rng&) { return std::make_unique<StationaryLosses>(row); };
}

TEST(RegretLedger, StationaryFullInformationIsSublinear) {
  const RegretExperimentConfig base{
      .sampler = {.buffer_capacity = 5, .nu = 1.0, .kappa = 0.0, .reset_period = 1u << 30},
      .horizon = 1000,
      .feedback = FeedbackMode::full};
  auto longer = base;
  longer.horizon = 4000;
  const auto gen = stationary({0.1, 0.5, 1.0, 2.0, 4.0});
  const auto short_run = run_regret_seed(gen, base, 1);
  const auto long_run = run_regret_seed(gen, longer, 1);
  EXPECT_LT(long_run.cumulative_static() / 4000.0, short_run.cumulative_static() / 1000.0);
  for (std::size_t t = 1; t <= long_run.steps(); ++t) EXPECT_GE(long_run.regret_static(t), -1e-12);
}

TEST(RegretLedger, Bookkeeping) {
  const RegretExperimentConfig cfg{.sampler = {.buffer_capacity = 4, .nu = 0.5, .kappa = 0.2, .reset_period = 50},
                                   .horizon = 300,
                                   .feedback = FeedbackMode::bandit,
                                   .batch = 2};
  const auto l = run_regret_seed(
      [](Rng&) { return std::make_unique<BoundedRandomLosses>(std::vector<double>{0.1, 1, 2, 5}); }, cfg, 9);
  ASSERT_EQ(l.steps(), 300u);
  double cum = 0.0;
  for (std::size_t t = 0; t < l.steps(); ++t) {
    cum += l.realized[t];
    EXPECT_NEAR(l.realized_cum[t], cum, 1e-9 * cum);
    EXPECT_LE(l.dynamic_opt_cum[t], l.static_opt_cum[t] * (1 + 1e-12));
    EXPECT_LE(l.static_opt_cum[t], l.realized_cum[t] * (1 + 1e-12));
  }
  // Same seed, same ledger.
  const auto again = run_regret_seed(
      [](Rng&) { return std::make_unique<BoundedRandomLosses>(std::vector<double>{0.1, 1, 2, 5}); }, cfg, 9);
  EXPECT_EQ(again.realized, l.realized);
}

TEST(RegretLedger, CsvHeader) {
  EXPECT_EQ(kLedgerCsvHeader, "seed,t,realized_cost,static_opt_cum,dynamic_opt_cum,regret_static,regret_dynamic");
  RegretLedger l;
  l.seed = 3;
  l.slots = 2;
  l.realized = {2.5};
  l.realized_cum = {2.5};
  l.static_opt_cum = {2.0};
  l.dynamic_opt_cum = {1.5};
  std::ostringstream os;
  write_ledger_csv(os, std::span(&l, 1));
  EXPECT_EQ(os.str(), std::string(kLedgerCsvHeader) + "\n3,1,2.5,2,1.5,0.125,0.25\n");
}

TEST(LogLogSlope, RecoversPower) {
  std::vector<double> x, y;
  for (double t : {10.0, 100.0, 1000.0}) {
    x.push_back(t);
    y.push_back(3.0 * std::pow(t, 2.0 / 3));
  }
  EXPECT_NEAR(loglog_slope(x, y), 2.0 / 3, 1e-12);
  EXPECT_THROW(loglog_slope(std::vector<double>{1}, std::vector<double>{1}), DataError);
}

TEST(LossBound, BoundValue) {
  EXPECT_DOUBLE_EQ(loss_bound(0.5, 2.0, 1.0, 0.3, 1), 16.0);
  EXPECT_DOUBLE_EQ(loss_bound(0.5, 2.0, 1.0, 0.99, 1), 16.0);
}

TEST(LossBound, OnPolicySamplesSatisfyComponents) {
  const auto env = toy_rl::Environment::chain(4, 5);
  TabularSoftmax pi(4, 2);
  Rng rng(2);
  for (Eigen::Index k = 0; k < pi.params().size(); ++k) pi.params()[k] = rng.uniform(-1.0, 1.0);
  pi.clip_logits(1.0);
  std::vector<TrajectoryDiagnostics> diag;
  for (int e = 0; e < 10000; ++e) diag.push_back(diagnose(toy_rl::rollout(env, pi, rng), pi, env.gamma()));
  const auto r = check_loss_bound(diag, pi.min_prob(), pi.max_score_norm(), env.reward_bound(), env.gamma(),
                                    env.horizon());
  EXPECT_TRUE(r.holds);
  EXPECT_EQ(r.omega_violations, 0u);
  EXPECT_LE(r.max_d, r.bound);
}

TEST(LossBound, DetectsViolation) {
  TrajectoryDiagnostics big;
  big.d = 17.0;
  const std::vector<TrajectoryDiagnostics> s{big};
  const auto r = check_loss_bound(s, 0.5, 2.0, 1.0, 0.9, 1);
  EXPECT_FALSE(r.holds);
  EXPECT_EQ(r.d_violations, 1u);
}

}  // namespace
}  // namespace aes
