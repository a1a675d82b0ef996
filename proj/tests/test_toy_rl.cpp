#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "aes/toy_rl/trainer.hpp"

namespace aes::toy_rl {
namespace {

const std::vector<std::uint64_t> kSeeds{2, 20, 200, 2000, 20000};
const SelectionMode kModes[] = {SelectionMode::uniform, SelectionMode::td_priority, SelectionMode::aes_naive,
                                SelectionMode::aes};

TrainingConfig small_config(SelectionMode mode, std::uint64_t seed) {
  TrainingConfig c;
  c.mode = mode;
  c.seed = seed;
  c.iterations = 200;
  c.buffer = 16;
  c.batch = 4;
  c.eval_interval = 20;
  c.eval_episodes = 10;
  c.sampler = SamplerConfig{.nu = 10.0, .kappa = 0.1, .reset_period = 50};
  return c;
}

double exact_value_of(const Environment& env, const TrainingTrace& t) {
  TabularSoftmax pi = env.make_policy();
  pi.params() = t.final_params;
  return exact_policy_value(env, pi);
}

TEST(ExactPolicyValue, ZeroRewardIsZero) {
  const auto env = Environment::two_state_bandit({{0, 0}, {0, 0}});
  EXPECT_EQ(exact_policy_value(env, env.make_policy()), 0.0);
}

TEST(ExactPolicyValue, OneStepBandit) {
  // Action 0 pays 1 in both states; the uniform policy collects half of it.
  const auto env = Environment::two_state_bandit({{1, 0}, {1, 0}});
  EXPECT_DOUBLE_EQ(exact_policy_value(env, env.make_policy()), 0.5);
  EXPECT_DOUBLE_EQ(optimal_value(env), 1.0);
}

TEST(ExactPolicyValue, MatchesMonteCarlo) {
  for (const auto& env : {Environment::chain(5), Environment::gridworld4x4(), Environment::two_state_bandit()}) {
    TabularSoftmax pi = env.make_policy();
    Rng rng(4, env.name());
    for (Eigen::Index k = 0; k < pi.params().size(); ++k) pi.params()[k] = rng.uniform(-1.0, 1.0);
    constexpr int kEpisodes = 100000;
    double sum = 0.0, sq = 0.0;
    for (int e = 0; e < kEpisodes; ++e) {
      const Trajectory t = rollout(env, pi, rng);
      double r = 0.0, disc = 1.0;
      for (const Step& s : t.steps) {
        r += disc * s.reward;
        disc *= env.gamma();
      }
      sum += r;
      sq += r * r;
    }
    const double mean = sum / kEpisodes;
    const double se = std::sqrt((sq / kEpisodes - mean * mean) / (kEpisodes - 1));
    EXPECT_NEAR(mean, exact_policy_value(env, pi), 3 * se) << env.name();
  }
}

TEST(ExactPolicyValue, RefusesLargeProblems) {
  const auto env = Environment::gridworld(6, 6, {5, 5}, {});
  EXPECT_THROW(exact_policy_value(env, env.make_policy()), ConfigError);
}

TEST(Training, ZeroUpdatesGiveFlatTrace) {
  const auto env = Environment::chain(5);
  auto cfg = small_config(SelectionMode::aes_naive, 2);
  cfg.updates_per_episode = 0;
  const auto t = run_naive_aes(env, cfg);
  EXPECT_EQ(t.updates, 0u);
  EXPECT_EQ(t.final_params.squaredNorm(), 0.0);
  // Evaluation episodes are noisy, but nothing the learner controls moves.
  for (const auto& row : t.rows) {
    EXPECT_EQ(row.p_entropy, t.rows.front().p_entropy);
    EXPECT_EQ(row.variance_probe, row.variance_probe_uniform);
  }
}

TEST(Training, SingleSlotBufferReplaysOneTrajectory) {
  const auto env = Environment::chain(5);
  auto cfg = small_config(SelectionMode::aes, 3);
  cfg.buffer = 1;
  cfg.batch = 1;
  cfg.sampler.kappa = 0.0;
  const auto t = run_aes(env, cfg);
  for (const auto& row : t.rows) {
    EXPECT_EQ(row.p_entropy, 0.0);
    EXPECT_EQ(row.variance_probe, 0.0);
  }
}

TEST(Training, FullMixingNaiveMatchesUniform) {
  const auto env = Environment::chain(5);
  double naive = 0.0, uniform = 0.0, ss = 0.0;
  std::vector<double> diffs;
  for (std::uint64_t s : kSeeds) {
    auto a = small_config(SelectionMode::aes_naive, s);
    auto b = small_config(SelectionMode::uniform, s);
    a.iterations = b.iterations = 400;
    a.sampler.kappa = 1.0;
    const double ra = exact_value_of(env, run_naive_aes(env, a));
    const double rb = exact_value_of(env, run_baseline(env, b));
    naive += ra / kSeeds.size();
    uniform += rb / kSeeds.size();
    diffs.push_back(ra - rb);
  }
  const double mean_diff = naive - uniform;
  for (double d : diffs) ss += (d - mean_diff) * (d - mean_diff);
  const double se = std::sqrt(ss / (diffs.size() - 1) / diffs.size());
  EXPECT_LE(std::abs(mean_diff), 3 * se + 0.02) << "naive " << naive << " uniform " << uniform;
}

TEST(Training, EveryModeSolvesTheTwoStateBandit) {
  const auto env = Environment::two_state_bandit();
  const double best = optimal_value(env);
  for (SelectionMode m : kModes) {
    for (std::uint64_t s : kSeeds) {
      auto cfg = small_config(m, s);
      cfg.learning_rate = 0.5;
      cfg.iterations = 1000;
      cfg.eval_interval = 100;
      const double j = exact_value_of(env, train(env, cfg));
      EXPECT_GE(j, 0.95 * best) << to_string(m) << " seed " << s;
    }
  }
}

TEST(Training, TracesShareOneSchema) {
  const auto env = Environment::chain(5);
  for (SelectionMode m : kModes) {
    const auto t = train(env, small_config(m, 20));
    ASSERT_FALSE(t.rows.empty());
    EXPECT_EQ(t.rows.size(), 11u);
    for (std::size_t k = 1; k < t.rows.size(); ++k) EXPECT_GT(t.rows[k].step, t.rows[k - 1].step);
    for (const auto& row : t.rows) {
      EXPECT_EQ(row.seed, 20u);
      EXPECT_EQ(row.mode, m);
      EXPECT_EQ(row.config_hash, t.config.hash());
    }
    std::ostringstream os;
    write_trace_csv(os, t);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "# schema=aes-trace/1");
    while (std::getline(is, line) && line.starts_with("#")) {
    }
    EXPECT_EQ(line, kTraceCsvHeader);
    EXPECT_EQ(line, "seed,mode,env,step,episodic_test_return,variance_probe,p_entropy,reset_count");
    std::getline(is, line);
    EXPECT_TRUE(line.starts_with("20," + std::string(to_string(m)) + ",chain5,"));
  }
}

TEST(Training, BaselinesUseUniformOrPriorityDistributions) {
  const auto env = Environment::chain(5);
  const auto t = run_baseline(env, small_config(SelectionMode::uniform, 2));
  for (const auto& row : t.rows) {
    EXPECT_NEAR(row.p_entropy, std::log(16.0), 1e-12);
    EXPECT_NEAR(row.variance_probe, row.variance_probe_uniform, 1e-12 * (1 + row.variance_probe));
  }
}

TEST(Training, ProbeIsReadOnly) {
  const auto env = Environment::gridworld4x4();
  const auto cfg = small_config(SelectionMode::aes, 7);
  detail::Learner learner(env, cfg);
  Rng collect(1), sample(2), overwrite(3);
  for (int e = 0; e < 16; ++e) learner.insert(rollout(env, learner.policy(), collect), overwrite);
  for (int u = 0; u < 30; ++u) learner.update(sample);
  const std::vector<double> w(learner.sampler().weights().begin(), learner.sampler().weights().end());
  const auto p = learner.distribution();
  const Eigen::VectorXd theta = learner.policy().params();
  const auto first = learner.probe_variance();
  const auto second = learner.probe_variance();
  EXPECT_EQ(first, second);
  EXPECT_TRUE(std::equal(w.begin(), w.end(), learner.sampler().weights().begin()));
  EXPECT_EQ(p, learner.distribution());
  EXPECT_EQ(theta, learner.policy().params());
  EXPECT_EQ(learner.store().index_deviation(learner.sampler()), 0.0);
}

TEST(Training, RerunsAreIdentical) {
  const auto env = Environment::gridworld4x4();
  const auto cfg = small_config(SelectionMode::aes, 200);
  std::ostringstream a, b;
  write_trace_csv(a, run_aes(env, cfg));
  write_trace_csv(b, run_aes(env, cfg));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Training, ConfigValidation) {
  const auto env = Environment::chain(5);
  auto cfg = small_config(SelectionMode::aes, 2);
  cfg.batch = 32;
  EXPECT_THROW(train(env, cfg), ConfigError);
  cfg = small_config(SelectionMode::aes_naive, 2);
  cfg.updates_per_episode = 4;
  EXPECT_THROW(train(env, cfg), ConfigError);
  EXPECT_THROW(run_aes(env, small_config(SelectionMode::uniform, 2)), ConfigError);
  EXPECT_THROW(run_baseline(env, small_config(SelectionMode::aes, 2)), ConfigError);
  EXPECT_THROW(parse_mode("greedy"), ConfigError);
  EXPECT_EQ(parse_mode("td_priority"), SelectionMode::td_priority);
}

TEST(Training, ClippedLogitsRespectBound) {
  const auto env = Environment::gridworld4x4();
  auto cfg = small_config(SelectionMode::aes, 2);
  cfg.logit_clip = 0.5;
  cfg.learning_rate = 1.0;
  const auto t = run_aes(env, cfg);
  EXPECT_LE(t.final_params.cwiseAbs().maxCoeff(), 0.5);
}

}  // namespace
}  // namespace aes::toy_rl
