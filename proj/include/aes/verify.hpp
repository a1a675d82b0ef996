#pragma once

// Acceptance checks shared by the acceptance test binary and `aes verify`.
// Every check recomputes its reference values independently of the code
// under test (brute-force minimization, Monte Carlo, finite differences,
// hand enumeration) and reports one pass/fail line.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <boost/math/distributions/chi_squared.hpp>

#include "aes/estimators.hpp"
#include "aes/format.hpp"
#include "aes/harness/config.hpp"
#include "aes/harness/studies.hpp"
#include "aes/harness/suite.hpp"
#include "aes/policy.hpp"
#include "aes/regret.hpp"
#include "aes/rng.hpp"
#include "aes/simplex_oracle.hpp"
#include "aes/simplex_sampler.hpp"
#include "aes/toy_rl/environment.hpp"
#include "aes/toy_rl/trainer.hpp"
#include "aes/weighted_store.hpp"

namespace aes::verify {

struct CriterionResult {
  CriterionResult(int id_, std::string title_) : id(id_), title(std::move(title_)) {}

  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct Criterion {
  int id;
  std::string title;
  std::function<CriterionResult()> run;
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

inline std::vector<double> log_uniform_row(std::size_t n, double lo, double hi, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = std::exp(rng.uniform(std::log(lo), std::log(hi)));
  return v;
}

/// A random tabular policy; logits N(0, scale^2), optionally clipped.
inline TabularSoftmax random_policy(int states, int actions, double scale, Rng& rng,
                                    double clip = std::numeric_limits<double>::infinity()) {
  TabularSoftmax p(states, actions);
  for (Eigen::Index k = 0; k < p.params().size(); ++k) p.params()[k] = scale * rng.normal();
  if (std::isfinite(clip)) p.clip_logits(clip);
  return p;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace detail

// 1. Closed-form FTRL vs brute-force minimization.
inline CriterionResult ftrl_closed_form() {
  CriterionResult r(1, "closed-form FTRL matches brute-force minimizer");
  Rng rng(1, "verify/ftrl");
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 2 + rng.index(19);
    const std::size_t horizon = 1 + rng.index(50);
    const double nu = std::exp(rng.uniform(std::log(1e-2), std::log(10.0)));
    SamplerState s(SamplerConfig{.buffer_capacity = n, .nu = nu, .kappa = 0.0, .reset_period = 1u << 30});
    std::vector<double> totals(n, 0.0);
    for (std::size_t t = 0; t < horizon; ++t) {
      const auto row = detail::log_uniform_row(n, 1e-3, 10.0, rng);
      s.record_full_feedback(row);
      for (std::size_t i = 0; i < n; ++i) totals[i] += row[i];
    }
    const SimplexDistribution closed = compute_distribution(s);
    const SimplexDistribution brute = brute_force_simplex_min(inverse_weighted_objective(totals, nu), n);
    worst = std::max(worst, detail::max_abs_diff(closed.values(), brute.values()));
  }
  r.passed = worst <= 1e-6;
  r.detail = "50 instances, max |p - p_oracle| = " + detail::fmt(worst);
  return r;
}

// 2. Competitor closed forms vs brute-force minimization.
inline CriterionResult competitor_closed_forms() {
  CriterionResult r(2, "static and dynamic competitors match brute-force minimizer");
  Rng rng(2, "verify/competitors");
  double worst_static = 0.0, worst_dynamic = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 2 + rng.index(19);
    const std::size_t horizon = 1 + rng.index(50);
    LossSequence seq(horizon, n);
    for (std::size_t t = 0; t < horizon; ++t) {
      const auto row = detail::log_uniform_row(n, 1e-3, 10.0, rng);
      std::copy(row.begin(), row.end(), seq.row(t).begin());
    }
    const Competitor st = static_competitor(seq);
    const auto sums = seq.column_sums();
    const SimplexDistribution sb = brute_force_simplex_min(inverse_weighted_objective(sums), n);
    worst_static = std::max(worst_static, detail::max_abs_diff(st.p.values(), sb.values()));
    // Dynamic: one row per instance, chosen at random.
    const std::size_t t = rng.index(horizon);
    const auto row = seq.row(t);
    const Competitor dy = dynamic_competitor(row);
    const SimplexDistribution db =
        brute_force_simplex_min(inverse_weighted_objective(std::vector<double>(row.begin(), row.end())), n);
    worst_dynamic = std::max(worst_dynamic, detail::max_abs_diff(dy.p.values(), db.values()));
  }
  r.passed = worst_static <= 1e-6 && worst_dynamic <= 1e-6;
  r.detail = "50+50 instances, max error static " + detail::fmt(worst_static) + ", dynamic " + detail::fmt(worst_dynamic);
  return r;
}

// 3. Inverse-probability feedback is unbiased.
inline CriterionResult feedback_unbiased() {
  CriterionResult r(3, "inverse-probability feedback is unbiased");
  Rng rng(3, "verify/feedback");
  constexpr std::size_t kDraws = 100000;
  double worst_z = 0.0;
  for (int pair = 0; pair < 10; ++pair) {
    const std::size_t n = 2 + rng.index(15);
    const auto d = detail::log_uniform_row(n, 1e-2, 10.0, rng);
    const SimplexDistribution p = SimplexDistribution::from_weights(detail::log_uniform_row(n, 0.1, 10.0, rng));
    SamplerState s(SamplerConfig{.buffer_capacity = n, .nu = 1.0, .kappa = 0.1, .reset_period = 1u << 30});
    std::vector<std::size_t> hits(n, 0);
    for (std::size_t k = 0; k < kDraws; ++k) {
      const std::size_t i = draw(p, rng);
      ++hits[i];
      const Feedback f{i, d[i], p[i]};
      s.record_feedback(std::span<const Feedback>(&f, 1));
    }
    const double nd = static_cast<double>(kDraws);
    for (std::size_t j = 0; j < n; ++j) {
      const double mean = s.weights()[j] / nd;
      const double second = static_cast<double>(hits[j]) * (d[j] / p[j]) * (d[j] / p[j]) / nd;
      const double se = std::sqrt(std::max(0.0, second - mean * mean) / (nd - 1.0));
      const double z = se > 0.0 ? std::abs(mean - d[j]) / se : (mean == d[j] ? 0.0 : 1e9);
      worst_z = std::max(worst_z, z);
    }
  }
  r.passed = worst_z <= 3.0;
  r.detail = "10 pairs x 1e5 draws, max |mean - d| / SE = " + detail::fmt(worst_z);
  return r;
}

namespace detail {

struct FrozenBuffer {
  toy_rl::Environment env = toy_rl::Environment::chain(3, 4);
  TabularSoftmax target{3, 2};
  std::vector<Trajectory> trajs;
};

inline FrozenBuffer frozen_buffer(std::size_t slots, Rng& rng) {
  FrozenBuffer b;
  b.target = random_policy(3, 2, 0.5, rng);
  for (std::size_t i = 0; i < slots; ++i) {
    const TabularSoftmax behavior = random_policy(3, 2, 0.5, rng);
    b.trajs.push_back(toy_rl::rollout(b.env, behavior, rng, static_cast<std::int64_t>(i)));
  }
  return b;
}

}  // namespace detail

// 4. Replay gradient is unbiased for uniform and learned p.
inline CriterionResult gradient_unbiased() {
  CriterionResult r(4, "replay gradient is unbiased under uniform and learned p");
  Rng rng(4, "verify/gradient");
  constexpr std::size_t kSlots = 32, kBatch = 4, kBatches = 100000;
  const auto buf = detail::frozen_buffer(kSlots, rng);
  std::vector<GradientSample> samples;
  Eigen::VectorXd truth = Eigen::VectorXd::Zero(buf.target.num_params());
  for (std::size_t i = 0; i < kSlots; ++i) {
    samples.push_back(make_gradient_sample(i, buf.trajs[i], buf.target, buf.env.gamma()));
    truth += samples.back().omega * samples.back().g;
  }
  truth /= static_cast<double>(kSlots);

  double worst_z = 0.0;
  std::string which;
  for (const bool learned : {false, true}) {
    SamplerState s(SamplerConfig{.buffer_capacity = kSlots, .nu = 1e-3, .kappa = learned ? 0.1 : 1.0,
                                 .reset_period = 1u << 30});
    WeightedStore store(s);
    for (std::size_t i = 0; i < kSlots; ++i) store.put(i, buf.trajs[i], s);
    if (learned) {
      std::vector<Feedback> fb;
      for (int t = 0; t < 500; ++t) {
        fb.clear();
        for (std::size_t i : store.sample_indices(s, kBatch, rng)) fb.push_back({i, samples[i].d, store.probability(s, i)});
        store.record_feedback(s, fb);
      }
    }
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(truth.size()), sq = Eigen::VectorXd::Zero(truth.size());
    std::vector<GradientSample> batch(kBatch);
    std::vector<double> probs(kBatch);
    for (std::size_t b = 0; b < kBatches; ++b) {
      const auto idx = store.sample_indices(s, kBatch, rng);
      for (std::size_t k = 0; k < kBatch; ++k) {
        batch[k] = samples[idx[k]];
        probs[k] = store.probability(s, idx[k]);
      }
      const Eigen::VectorXd g = replay_gradient(batch, probs, kSlots);
      sum += g;
      sq += g.cwiseProduct(g);
    }
    const double nb = static_cast<double>(kBatches);
    for (Eigen::Index c = 0; c < truth.size(); ++c) {
      const double mean = sum[c] / nb;
      const double se = std::sqrt(std::max(0.0, sq[c] / nb - mean * mean) / (nb - 1.0));
      const double z = se > 0.0 ? std::abs(mean - truth[c]) / se : (std::abs(mean - truth[c]) < 1e-12 ? 0.0 : 1e9);
      if (z > worst_z) {
        worst_z = z;
        which = learned ? "learned" : "uniform";
      }
    }
  }
  r.passed = worst_z <= 3.0;
  r.detail = "32 slots, 1e5 batches each, max |z| = " + detail::fmt(worst_z) + " (" + which + ")";
  return r;
}

// 5. Loss bound and its three factors.
inline CriterionResult loss_bound_check() {
  CriterionResult r(5, "bound on d and its three factors hold");
  Rng rng(5, "verify/loss-bound");
  const toy_rl::Environment env = toy_rl::Environment::gridworld(4, 4, {3, 3}, {{1, 1}, {2, 2}}, 8);
  constexpr double kClip = 1.5;
  std::vector<TrajectoryDiagnostics> diags;
  double beta = 1.0, lip = 0.0;
  TabularSoftmax target = detail::random_policy(env.num_states(), env.num_actions(), 1.0, rng, kClip);
  std::vector<TabularSoftmax> behaviors;
  for (int k = 0; k < 20; ++k) behaviors.push_back(detail::random_policy(env.num_states(), env.num_actions(), 1.0, rng, kClip));
  // Measured constants: smallest action probability of any policy involved,
  // largest score norm of the target, largest absolute reward.
  beta = target.min_prob();
  for (const auto& b : behaviors) beta = std::min(beta, b.min_prob());
  lip = target.max_score_norm();
  const double zeta = env.reward_bound();
  for (int i = 0; i < 10000; ++i) {
    const Trajectory t = toy_rl::rollout(env, behaviors[static_cast<std::size_t>(i) % behaviors.size()], rng, i);
    diags.push_back(diagnose(t, target, env.gamma()));
  }
  const LossBoundReport rep = check_loss_bound(diags, beta, lip, zeta, env.gamma(), env.horizon());
  r.passed = rep.holds;
  r.detail = "1e4 trajectories, H=8, beta=" + detail::fmt(beta) + " L=" + detail::fmt(lip) +
             " zeta=" + detail::fmt(zeta) + ", max d/bound=" + detail::fmt(rep.max_d / rep.bound) +
             ", violations " + std::to_string(rep.d_violations) + "/" + std::to_string(rep.omega_violations) + "/" +
             std::to_string(rep.score_violations) + "/" + std::to_string(rep.return_violations);
  return r;
}

// 6. Static regret per step shrinks on stationary full-information sequences.
inline CriterionResult static_regret_sublinear() {
  CriterionResult r(6, "static regret/T shrinks on stationary full-information losses");
  harness::RegretStudyConfig c;
  c.generator = harness::GeneratorKind::stationary;
  c.feedback = FeedbackMode::full;
  c.slots = 10;
  c.sampler.kappa = 0.0;
  c.sampler.nu = 1.0;
  std::size_t ok = 0;
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const RegretLedger l = harness::run_regret_cell(c, 4000, seed);
    const double early = l.regret_static(1000) / 1000.0, late = l.regret_static(4000) / 4000.0;
    ok += late < early;
    worst_ratio = std::max(worst_ratio, late / early);
  }
  r.passed = ok == 20;
  r.detail = std::to_string(ok) + "/20 seeds, worst (R/T at 4000)/(R/T at 1000) = " + detail::fmt(worst_ratio);
  return r;
}

/// Config for the bandit-rate check; shared with the suite sample config.
inline harness::RegretStudyConfig bandit_rate_config() {
  harness::RegretStudyConfig c;
  c.generator = harness::GeneratorKind::bounded_random;
  c.feedback = FeedbackMode::bandit;
  c.slots = 20;
  c.kappa_cube_root = true;
  c.sampler.nu = 0.01;
  c.low = 0.1;
  c.high = 1.0;
  return c;
}

// 7. Bandit-feedback regret growth rate.
inline CriterionResult bandit_rate() {
  CriterionResult r(7, "bandit-feedback regret grows like T^(2/3)");
  const auto c = bandit_rate_config();
  std::vector<double> hs, rs;
  for (std::uint64_t h : {500, 1000, 2000, 4000}) {
    double sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) sum += harness::run_regret_cell(c, h, seed).cumulative_static();
    hs.push_back(static_cast<double>(h));
    rs.push_back(sum / 20.0);
  }
  const double slope = loglog_slope(hs, rs);
  r.passed = slope >= 0.5 && slope <= 0.85;
  r.detail = "log-log slope " + detail::fmt(slope) + " over T=500..4000, 20 seeds";
  return r;
}

/// Drifting-buffer config for the dynamic-regret check.
inline harness::RegretStudyConfig drifting_config() {
  harness::RegretStudyConfig c;
  c.generator = harness::GeneratorKind::drifting;
  c.feedback = FeedbackMode::full;
  c.slots = 64;
  c.sampler.nu = 0.01;
  c.sampler.kappa = 0.1;
  c.reset_scale = 10.0;
  c.arrival_interval = 2;
  c.jitter = 0.2;
  c.low = 0.01;
  c.high = 1.0;
  return c;
}

// 8. Dynamic regret on drifting losses, periodic vs per-arrival reinitialization.
inline CriterionResult dynamic_regret() {
  CriterionResult r(8, "dynamic regret/T falls and periodic resets beat reinitialization");
  const auto aes_cfg = drifting_config();
  auto naive_cfg = aes_cfg;
  naive_cfg.pattern = ResetPattern::reinit_on_arrival;
  const std::vector<std::uint64_t> hs{500, 1000, 2000, 4000};
  const double slots = static_cast<double>(aes_cfg.slots);
  bool conditions = true;
  for (auto h : hs) {
    const auto m = static_cast<double>(aes_cfg.for_horizon(h).sampler.reset_period);
    const double arrivals = std::ceil(m / static_cast<double>(aes_cfg.arrival_interval));
    conditions = conditions && m * m < slots && arrivals <= std::sqrt(slots);
  }
  std::vector<double> mean(hs.size(), 0.0);
  std::vector<std::size_t> wins(hs.size(), 0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (std::size_t k = 0; k < hs.size(); ++k) {
      const double a = harness::run_regret_cell(aes_cfg, hs[k], seed).cumulative_dynamic();
      const double b = harness::run_regret_cell(naive_cfg, hs[k], seed).cumulative_dynamic();
      mean[k] += a / static_cast<double>(hs[k]) / 20.0;
      wins[k] += a < b;
    }
  }
  bool falling = true;
  for (std::size_t k = 1; k < mean.size(); ++k) falling = falling && mean[k] < mean[k - 1];
  // The head-to-head comparison is made at the full budget.
  r.passed = conditions && falling && wins.back() >= 16;
  std::string per_t;
  for (std::size_t k = 0; k < hs.size(); ++k) {
    per_t += (k ? ", " : "") + std::string("T=") + std::to_string(hs[k]) + ": " + std::to_string(wins[k]) + "/20";
  }
  r.detail = "mean R_dyn/T " + detail::fmt(mean.front()) + " -> " + detail::fmt(mean.back()) +
             (falling ? " (falling)" : " (not falling)") + "; periodic beats reinitialization " + per_t +
             (conditions ? "" : "; reset/arrival conditions violated");
  return r;
}

// 9. Learned distribution reduces estimator variance.
inline CriterionResult variance_reduction() {
  CriterionResult r(9, "learned p lowers empirical gradient variance");
  harness::VarianceStudyConfig c;
  std::size_t wins = 0;
  double min_span = 1e300;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto v = harness::run_variance_cell(c, seed);
    wins += v.empirical_learned <= v.empirical_uniform;
    min_span = std::min(min_span, std::log10(v.d_max / v.d_min));
  }
  r.passed = wins >= 48 && min_span >= 3.0;
  r.detail = std::to_string(wins) + "/50 constructions, smallest d span " + detail::fmt(min_span) + " decades";
  return r;
}

/// Toy-RL config used by the direction check and the sample rl config.
inline toy_rl::TrainingConfig toy_rl_config(toy_rl::SelectionMode mode, std::uint64_t seed) {
  toy_rl::TrainingConfig c;
  c.mode = mode;
  c.seed = seed;
  c.iterations = 10000;
  c.batch = 8;
  c.buffer = 64;
  c.learning_rate = 0.05;
  c.logit_clip = 2.0;
  c.eval_interval = 50;
  c.sampler.nu = 10.0;
  c.sampler.kappa = 0.1;
  c.sampler.reset_period = 200;
  return c;
}

inline const std::vector<std::uint64_t>& toy_rl_seeds() {
  static const std::vector<std::uint64_t> s{2, 20, 200, 2000, 20000};
  return s;
}

// 10. Toy-RL direction.
inline CriterionResult toy_rl_direction() {
  CriterionResult r(10, "toy RL: AES final return within one pooled std, probes favor AES");
  using toy_rl::SelectionMode;
  bool ok = true;
  std::ostringstream detail_os;
  for (const char* env_name : {"gridworld4x4", "chain5"}) {
    const auto env = harness::make_environment(env_name);
    std::map<SelectionMode, std::pair<double, double>> stats;
    std::size_t favor = 0, probes = 0;
    for (SelectionMode m : {SelectionMode::uniform, SelectionMode::td_priority, SelectionMode::aes}) {
      std::vector<double> finals;
      for (auto seed : toy_rl_seeds()) {
        const auto trace = toy_rl::train(env, toy_rl_config(m, seed));
        finals.push_back(trace.final_return());
        if (m == SelectionMode::aes) {
          for (std::size_t k = 1; k < trace.rows.size(); ++k) {
            ++probes;
            favor += trace.rows[k].variance_probe <= trace.rows[k].variance_probe_uniform;
          }
        }
      }
      double mean = 0.0;
      for (double f : finals) mean += f / static_cast<double>(finals.size());
      double ss = 0.0;
      for (double f : finals) ss += (f - mean) * (f - mean);
      stats[m] = {mean, std::sqrt(ss / static_cast<double>(finals.size() - 1))};
    }
    const auto [am, as] = stats[SelectionMode::aes];
    bool env_ok = true;
    for (SelectionMode m : {SelectionMode::uniform, SelectionMode::td_priority}) {
      const auto [bm, bs] = stats[m];
      env_ok = env_ok && am >= bm - std::sqrt((as * as + bs * bs) / 2.0);
    }
    const double frac = static_cast<double>(favor) / static_cast<double>(probes);
    env_ok = env_ok && frac >= 0.7;
    ok = ok && env_ok;
    detail_os << env_name << ": aes " << detail::fmt(am) << ", uniform " << detail::fmt(stats[SelectionMode::uniform].first)
              << ", td " << detail::fmt(stats[SelectionMode::td_priority].first) << ", probes " << detail::fmt(100 * frac)
              << "%; ";
  }
  r.passed = ok;
  r.detail = detail_os.str();
  return r;
}

// 11. Store sampling law, index consistency and throughput.
inline CriterionResult store_correctness(std::size_t bench_capacity = 1'000'000) {
  CriterionResult r(11, "store samples p, index stays exact, throughput target");
  Rng rng(11, "verify/store");
  // Chi-square goodness of fit.
  constexpr std::size_t kSlots = 64, kDraws = 100000;
  SamplerState s(SamplerConfig{.buffer_capacity = kSlots, .nu = 1.0, .kappa = 0.1, .reset_period = 1u << 30});
  WeightedStore store(s);
  for (std::size_t i = 0; i < kSlots; ++i) {
    Trajectory t;
    t.steps.push_back(Step{0, 0, 1.0, 0.0, 0});
    store.put(i, std::move(t), s);
  }
  s.restore(detail::log_uniform_row(kSlots, 1e-2, 1e3, rng), 0);
  store.rebuild_index(s);
  const SimplexDistribution p = compute_distribution(s);
  std::vector<double> counts(kSlots, 0.0);
  for (std::size_t i : store.sample_indices(s, kDraws, rng)) counts[i] += 1.0;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < kSlots; ++i) {
    const double e = p[i] * static_cast<double>(kDraws);
    chi2 += (counts[i] - e) * (counts[i] - e) / e;
  }
  const boost::math::chi_squared dist(static_cast<double>(kSlots - 1));
  const double pvalue = boost::math::cdf(boost::math::complement(dist, chi2));

  // Index consistency under mixed operations.
  SamplerState s2(SamplerConfig{.buffer_capacity = 50, .nu = 0.5, .kappa = 0.2, .reset_period = 37,
                                .reset_mode = SoftReset{0.7}});
  WeightedStore st2(s2);
  double worst = 0.0;
  std::vector<Feedback> fb;
  for (int op = 0; op < 10000; ++op) {
    Trajectory t;
    t.steps.push_back(Step{0, 0, 1.0, rng.uniform(), 0});
    if (!st2.warmed_up()) {
      st2.insert(std::move(t), s2, rng);
    } else {
      switch (rng.index(5)) {
        case 0: st2.insert(std::move(t), s2, rng); break;
        case 1: st2.put(rng.index(50), std::move(t), s2); break;
        case 2: s2.clear_all(); st2.rebuild_index(s2); break;
        default: {
          fb.clear();
          for (std::size_t i : st2.sample_indices(s2, 1 + rng.index(8), rng)) {
            fb.push_back({i, std::exp(rng.uniform(-5.0, 5.0)), st2.probability(s2, i)});
          }
          st2.record_feedback(s2, fb);
          st2.maybe_reset(s2);
        }
      }
    }
    worst = std::max(worst, st2.index_deviation(s2));
  }

  // Throughput.
  const auto bench = harness::run_bench({.capacity = bench_capacity, .operations = 200000, .batch = 1}, 11);
  double ops = 0.0;
  for (const auto& b : bench) {
    if (b.operation == "sample_update") ops = b.ops_per_second();
  }
  r.passed = pvalue >= 0.01 && worst == 0.0 && ops >= 1e5;
  r.detail = "chi2 p=" + detail::fmt(pvalue) + ", max index deviation " + detail::fmt(worst) +
             " over 1e4 ops, sample+update " + detail::fmt(ops) + " ops/s at |B|=" + std::to_string(bench_capacity);
  return r;
}

// 12. Gradient and value oracles.
inline CriterionResult gradient_checks() {
  CriterionResult r(12, "score gradient matches finite differences; exact value matches Monte Carlo");
  Rng rng(12, "verify/gradcheck");
  double worst_rel = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const int states = 2 + static_cast<int>(rng.index(4));
    const int actions = 2 + static_cast<int>(rng.index(3));
    TabularSoftmax pol = detail::random_policy(states, actions, 1.0, rng);
    Trajectory t;
    const int len = 1 + static_cast<int>(rng.index(8));
    for (int k = 0; k < len; ++k) {
      t.steps.push_back(Step{static_cast<int>(rng.index(states)), static_cast<int>(rng.index(actions)), 0.5,
                             rng.uniform(-1.0, 1.0), 0});
    }
    const double gamma = rng.uniform(0.5, 1.0);
    const double ret = discounted_return(t, gamma);
    const Eigen::VectorXd g = score_return_grad(t, pol, gamma);
    // F(theta) = R * sum_k log pi(a_k | s_k); its gradient is the score-return product.
    const auto f = [&](const TabularSoftmax& q) {
      double s = 0.0;
      for (const Step& st : t.steps) s += q.log_prob(st.state, st.action);
      return ret * s;
    };
    constexpr double h = 1e-5;
    Eigen::VectorXd fd(g.size());
    for (Eigen::Index c = 0; c < g.size(); ++c) {
      TabularSoftmax up = pol, down = pol;
      up.params()[c] += h;
      down.params()[c] -= h;
      fd[c] = (f(up) - f(down)) / (2.0 * h);
    }
    const double scale = std::max(g.lpNorm<Eigen::Infinity>(), 1e-8);
    worst_rel = std::max(worst_rel, (g - fd).lpNorm<Eigen::Infinity>() / scale);
  }

  double worst_z = 0.0;
  for (const char* name : {"two_state_bandit", "chain5", "gridworld4x4"}) {
    const auto env = harness::make_environment(name);
    const TabularSoftmax pol = detail::random_policy(env.num_states(), env.num_actions(), 1.0, rng);
    const double exact = toy_rl::exact_policy_value(env, pol);
    constexpr int kEpisodes = 100000;
    double sum = 0.0, sq = 0.0;
    for (int e = 0; e < kEpisodes; ++e) {
      const double v = discounted_return(toy_rl::rollout(env, pol, rng), env.gamma());
      sum += v;
      sq += v * v;
    }
    const double mean = sum / kEpisodes;
    const double se = std::sqrt(std::max(0.0, sq / kEpisodes - mean * mean) / (kEpisodes - 1));
    worst_z = std::max(worst_z, se > 0.0 ? std::abs(mean - exact) / se : std::abs(mean - exact) * 1e12);
  }
  r.passed = worst_rel <= 1e-5 && worst_z <= 3.0;
  r.detail = "100 instances, max relative FD error " + detail::fmt(worst_rel) + "; value vs 1e5-episode MC, max |z| " +
             detail::fmt(worst_z);
  return r;
}

namespace detail {

inline std::vector<std::pair<std::string, std::string>> read_tree(const std::filesystem::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    out.emplace_back(std::filesystem::relative(e.path(), root).string(),
                     std::string(std::istreambuf_iterator<char>(is), {}));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// 13. Byte-identical reruns.
inline CriterionResult determinism(const std::filesystem::path& scratch) {
  CriterionResult r(13, "reruns produce byte-identical artifacts");
  namespace fs = std::filesystem;
  std::size_t files = 0;
  bool same = true;
  for (const char* family : {"rl_comparison", "regret_synthetic", "variance_study"}) {
    std::vector<std::vector<std::pair<std::string, std::string>>> runs;
    for (const char* workers : {"3", "3", "1"}) {
      const fs::path dir = scratch / ("run" + std::to_string(runs.size()));
      fs::remove_all(dir);
      auto spec = harness::parse_config_text(std::string("[experiment]\nfamily=") + family +
                                             "\nseeds=2,20\nworkers=" + workers +
                                             "\n[training]\niterations=600\n[regret]\nhorizons=200,400\n"
                                             "[variance]\nrepeats=200\n");
      spec.output_dir = dir.string();
      if (harness::run_suite(spec).exit_code() != 0) same = false;
      runs.push_back(detail::read_tree(dir));
      fs::remove_all(dir);
    }
    same = same && runs[0] == runs[1] && runs[0] == runs[2];
    files += runs[0].size();
  }
  r.passed = same && files > 0;
  r.detail = std::to_string(files) + " files identical across two 3-worker reruns and a serial rerun";
  return r;
}

/// All criteria in order. `scratch` receives temporary suite output.
inline std::vector<Criterion> criteria(const std::filesystem::path& scratch, std::size_t bench_capacity = 1'000'000) {
  return {
      {1, "ftrl", ftrl_closed_form},
      {2, "competitors", competitor_closed_forms},
      {3, "feedback", feedback_unbiased},
      {4, "gradient", gradient_unbiased},
      {5, "loss-bound", loss_bound_check},
      {6, "static-regret", static_regret_sublinear},
      {7, "bandit-rate", bandit_rate},
      {8, "dynamic-regret", dynamic_regret},
      {9, "variance", variance_reduction},
      {10, "toy-rl", toy_rl_direction},
      {11, "store", [bench_capacity] { return store_correctness(bench_capacity); }},
      {12, "gradcheck", gradient_checks},
      {13, "determinism", [scratch] { return determinism(scratch); }},
  };
}

/// Runs the criteria, printing one line each as they finish.
inline std::vector<CriterionResult> run_all(const std::vector<Criterion>& list, std::ostream& os) {
  std::vector<CriterionResult> out;
  for (const Criterion& c : list) {
    const auto t0 = std::chrono::steady_clock::now();
    CriterionResult res(c.id, c.title);
    try {
      res = c.run();
    } catch (const std::exception& e) {
      res.passed = false;
      res.detail = std::string("threw: ") + e.what();
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    os << (res.passed ? "[PASS] " : "[FAIL] ") << res.id << ". " << res.title << ": " << res.detail << " ("
       << detail::fmt(res.seconds) << " s)\n"
       << std::flush;
    out.push_back(std::move(res));
  }
  return out;
}

}  // namespace aes::verify
