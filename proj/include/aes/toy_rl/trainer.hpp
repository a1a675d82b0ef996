#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "aes/error.hpp"
#include "aes/estimators.hpp"
#include "aes/format.hpp"
#include "aes/rng.hpp"
#include "aes/simplex_sampler.hpp"
#include "aes/sum_tree.hpp"
#include "aes/toy_rl/environment.hpp"
#include "aes/weighted_store.hpp"

namespace aes::toy_rl {

enum class SelectionMode { uniform, td_priority, aes_naive, aes };

inline std::string_view to_string(SelectionMode m) {
  switch (m) {
    case SelectionMode::uniform: return "uniform";
    case SelectionMode::td_priority: return "td_priority";
    case SelectionMode::aes_naive: return "aes_naive";
    case SelectionMode::aes: return "aes";
  }
  return "?";
}

inline SelectionMode parse_mode(std::string_view s) {
  if (s == "uniform") return SelectionMode::uniform;
  if (s == "td_priority") return SelectionMode::td_priority;
  if (s == "aes_naive") return SelectionMode::aes_naive;
  if (s == "aes") return SelectionMode::aes;
  throw ConfigError("unknown selection mode '" + std::string(s) + "'");
}

/// The budget is counted in collected episodes after warm-up ("iterations"),
/// so all modes consume the same number of environment samples.
///
///  - aes: per iteration one sampled policy update, feedback, periodic reset,
///    then one episode inserted with complement overwriting.
///  - aes_naive: per iteration one episode inserted (FIFO), all accumulators
///    cleared, then `updates_per_episode` sampled updates with feedback.
///  - uniform / td_priority: per iteration `updates_per_episode` updates, then
///    one episode inserted (FIFO).
struct TrainingConfig {
  std::uint64_t iterations = 2000;
  std::size_t batch = 8;
  std::size_t buffer = 64;
  double learning_rate = 0.05;
  SamplerConfig sampler;
  SelectionMode mode = SelectionMode::aes;
  std::uint64_t seed = 2;
  std::size_t warmup_episodes = 0;  // raised to the buffer size if smaller
  std::size_t updates_per_episode = 1;
  std::uint64_t eval_interval = 50;  // iterations between evaluations and variance probes
  std::size_t eval_episodes = 20;
  double priority_exponent = 0.6;
  double priority_epsilon = 1e-6;
  double log_ratio_cap = kDefaultLogRatioCap;
  double logit_clip = std::numeric_limits<double>::infinity();  // logits are clamped to [-clip, clip] after each step

  void validate() const {
    if (batch == 0) throw ConfigError("batch must be positive");
    if (buffer == 0) throw ConfigError("buffer must be positive");
    if (batch > buffer) throw ConfigError("batch must not exceed buffer");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
    if (eval_episodes == 0) throw ConfigError("eval_episodes must be positive");
    if (!(logit_clip > 0.0)) throw ConfigError("logit_clip must be positive");
    if (mode == SelectionMode::aes_naive && updates_per_episode * batch >= buffer) {
      throw ConfigError("aes_naive requires updates_per_episode < buffer / batch");
    }
    SamplerConfig sc = sampler;
    sc.buffer_capacity = buffer;
    sc.validate();
  }

  /// Canonical key=value listing, also used for the config hash.
  [[nodiscard]] std::string describe() const {
    std::ostringstream os;
    const auto num = [](double v) { return format_real(v); };
    os << "mode=" << to_string(mode) << "\nseed=" << seed << "\niterations=" << iterations << "\nbatch=" << batch
       << "\nbuffer=" << buffer << "\nlearning_rate=" << num(learning_rate) << "\nwarmup_episodes=" << warmup_episodes
       << "\nupdates_per_episode=" << updates_per_episode << "\neval_interval=" << eval_interval
       << "\neval_episodes=" << eval_episodes << "\nnu=" << num(sampler.nu) << "\nkappa=" << num(sampler.kappa)
       << "\nreset_period=" << sampler.reset_period << "\nreset_mode=";
    std::visit(
        [&os, &num](const auto& m) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, HardReset>) {
            os << "hard";
          } else if constexpr (std::is_same_v<M, SoftReset>) {
            os << "soft:" << num(m.rho);
          } else {
            os << "anneal:" << num(m.rho_start) << ":" << num(m.rho_end) << ":" << m.total_steps;
          }
        },
        sampler.reset_mode);
    os << "\npriority_exponent=" << num(priority_exponent) << "\nlog_ratio_cap=" << num(log_ratio_cap)
       << "\nlogit_clip=" << num(logit_clip) << '\n';
    return os.str();
  }

  [[nodiscard]] std::uint64_t hash() const { return fnv1a(describe()); }
};

struct TraceRow {
  std::uint64_t seed = 0;
  SelectionMode mode = SelectionMode::aes;
  std::string env;
  std::uint64_t step = 0;  // environment steps collected so far
  double episodic_test_return = 0.0;
  double variance_probe = 0.0;          // trace of the estimator covariance under the run's distribution
  double variance_probe_uniform = 0.0;  // same frozen state, uniform distribution
  double p_entropy = 0.0;
  std::uint64_t reset_count = 0;
  std::uint64_t config_hash = 0;
};

struct TrainingTrace {
  TrainingConfig config;
  std::string env;
  std::vector<TraceRow> rows;
  std::uint64_t updates = 0;
  RatioStats ratios;
  Eigen::VectorXd final_params;

  [[nodiscard]] double final_return() const { return rows.empty() ? 0.0 : rows.back().episodic_test_return; }
};

inline constexpr std::string_view kTraceSchema = "aes-trace/1";
inline constexpr std::string_view kTraceCsvHeader =
    "seed,mode,env,step,episodic_test_return,variance_probe,p_entropy,reset_count";

/// Writes the trace CSV: '#' comment lines echoing the schema, config hash
/// and config, then the header and one row per evaluation point.
inline void write_trace_csv(std::ostream& os, const TrainingTrace& trace) {
  os << "# schema=" << kTraceSchema << '\n';
  os << "# env=" << trace.env << '\n';
  os << "# config_hash=" << trace.config.hash() << '\n';
  std::istringstream lines(trace.config.describe());
  for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
  os << kTraceCsvHeader << '\n';
  for (const TraceRow& r : trace.rows) {
    os << r.seed << ',' << to_string(r.mode) << ',' << r.env << ',' << r.step << ','
       << format_real(r.episodic_test_return) << ',' << format_real(r.variance_probe) << ','
       << format_real(r.p_entropy) << ',' << r.reset_count << '\n';
  }
}

namespace detail {

/// Replay buffer plus whichever selection machinery the mode needs.
class Learner {
 public:
  Learner(const Environment& env, const TrainingConfig& cfg)
      : env_(env), cfg_(cfg), sampler_(make_sampler_config(cfg)), store_(sampler_), priorities_(cfg.buffer),
        value_(env.num_states(), 0.0), policy_(env.make_policy()) {}

  TabularSoftmax& policy() { return policy_; }
  const TabularSoftmax& policy() const { return policy_; }
  const SamplerState& sampler() const { return sampler_; }
  const WeightedStore& store() const { return store_; }
  RatioStats& ratios() { return ratios_; }
  std::uint64_t updates() const { return updates_; }

  bool uses_feedback() const { return cfg_.mode == SelectionMode::aes || cfg_.mode == SelectionMode::aes_naive; }

  void insert(Trajectory traj, Rng& rng) {
    if (cfg_.mode == SelectionMode::aes) {
      store_.insert(std::move(traj), sampler_, rng);
      return;
    }
    const std::size_t slot = fifo_next_;
    fifo_next_ = (fifo_next_ + 1) % cfg_.buffer;
    if (cfg_.mode == SelectionMode::td_priority) {
      priorities_.set(slot, max_priority_);
    }
    store_.put(slot, std::move(traj), sampler_);
  }

  double probability(std::size_t i) const {
    if (cfg_.mode == SelectionMode::td_priority) return priorities_.get(i) / priorities_.total();
    return store_.probability(sampler_, i);
  }

  std::vector<double> distribution() const {
    std::vector<double> p(cfg_.buffer);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = probability(i);
    return p;
  }

  /// One sampled, bias-corrected gradient-ascent step with feedback.
  void update(Rng& rng) {
    std::vector<std::size_t> idx;
    if (cfg_.mode == SelectionMode::td_priority) {
      idx.reserve(cfg_.batch);
      for (std::size_t b = 0; b < cfg_.batch; ++b) {
        idx.push_back(priorities_.find(rng.uniform() * priorities_.total()));
      }
    } else {
      idx = store_.sample_indices(sampler_, cfg_.batch, rng);
    }
    std::vector<GradientSample> samples;
    std::vector<double> probs;
    samples.reserve(idx.size());
    for (std::size_t i : idx) {
      samples.push_back(make_gradient_sample(i, store_.at(i), policy_, env_.gamma(), cfg_.log_ratio_cap, &ratios_));
      probs.push_back(probability(i));
    }
    const Eigen::VectorXd grad = replay_gradient(samples, probs, cfg_.buffer);
    policy_.params() += cfg_.learning_rate * grad;
    if (std::isfinite(cfg_.logit_clip)) policy_.clip_logits(cfg_.logit_clip);
    ++updates_;

    if (uses_feedback()) {
      std::vector<Feedback> fb;
      fb.reserve(samples.size());
      for (std::size_t k = 0; k < samples.size(); ++k) fb.push_back({samples[k].slot, samples[k].d, probs[k]});
      store_.record_feedback(sampler_, fb);
    } else if (cfg_.mode == SelectionMode::td_priority) {
      for (std::size_t i : idx) refresh_priority(i);
    }
  }

  bool maybe_reset() { return store_.maybe_reset(sampler_); }

  void clear_feedback() {
    sampler_.clear_all();
    store_.rebuild_index(sampler_);
  }

  /// Exact estimator variance at the frozen parameters, under the run's
  /// distribution and under the uniform distribution. Read-only.
  std::pair<double, double> probe_variance() const {
    std::vector<Eigen::VectorXd> x(cfg_.buffer);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const GradientSample s = make_gradient_sample(i, store_.at(i), policy_, env_.gamma(), cfg_.log_ratio_cap);
      x[i] = s.omega * s.g;
    }
    const std::vector<double> uniform(cfg_.buffer, 1.0 / static_cast<double>(cfg_.buffer));
    return {analytic_gradient_variance(x, distribution(), cfg_.batch),
            analytic_gradient_variance(x, uniform, cfg_.batch)};
  }

  double entropy() const {
    double h = 0.0;
    for (double v : distribution()) {
      if (v > 0.0) h -= v * std::log(v);
    }
    return h;
  }

 private:
  static SamplerConfig make_sampler_config(const TrainingConfig& cfg) {
    SamplerConfig sc = cfg.sampler;
    sc.buffer_capacity = cfg.buffer;
    if (cfg.mode == SelectionMode::uniform || cfg.mode == SelectionMode::td_priority) sc.kappa = 1.0;
    return sc;
  }

  // TD(0) on the trajectory's transitions, then the slot's priority is the
  // summed absolute TD error raised to the priority exponent.
  void refresh_priority(std::size_t slot) {
    const Trajectory& t = store_.at(slot);
    const double alpha_v = cfg_.learning_rate;
    double total = 0.0;
    for (std::size_t k = 0; k < t.steps.size(); ++k) {
      const Step& s = t.steps[k];
      const double bootstrap = k + 1 < t.steps.size() ? env_.gamma() * value_[s.next_state] : 0.0;
      const double delta = s.reward + bootstrap - value_[s.state];
      value_[s.state] += alpha_v * delta;
      total += std::abs(delta);
    }
    const double prio = std::pow(total + cfg_.priority_epsilon, cfg_.priority_exponent);
    priorities_.set(slot, prio);
    max_priority_ = std::max(max_priority_, prio);
  }

  const Environment& env_;
  const TrainingConfig& cfg_;
  SamplerState sampler_;
  WeightedStore store_;
  SumTree priorities_;
  double max_priority_ = 1.0;
  std::vector<double> value_;
  TabularSoftmax policy_;
  std::size_t fifo_next_ = 0;
  std::uint64_t updates_ = 0;
  RatioStats ratios_;
};

}  // namespace detail

/// Shared driver for every selection mode.
inline TrainingTrace train(const Environment& env, const TrainingConfig& cfg) {
  cfg.validate();
  detail::Learner learner(env, cfg);
  // Substreams depend on seed and environment only, so runs of different
  // modes under one seed share their warm-up data and evaluation noise.
  const std::string cell = "toy-rl/" + env.name();
  Rng collect_rng(cfg.seed, cell + "/collect");
  Rng sample_rng(cfg.seed, cell + "/sample");
  Rng overwrite_rng(cfg.seed, cell + "/overwrite");

  TrainingTrace trace;
  trace.config = cfg;
  trace.env = env.name();
  const std::uint64_t hash = cfg.hash();
  std::uint64_t env_steps = 0;
  std::int64_t tag = 0;

  const auto collect = [&] {
    learner.insert(rollout(env, learner.policy(), collect_rng, tag), overwrite_rng);
    env_steps += static_cast<std::uint64_t>(env.horizon());
  };
  const auto evaluate = [&](std::uint64_t k) {
    Rng eval_rng(cfg.seed, cell + "/eval/" + std::to_string(k));
    TraceRow row;
    row.seed = cfg.seed;
    row.mode = cfg.mode;
    row.env = env.name();
    row.step = env_steps;
    row.episodic_test_return = greedy_return(env, learner.policy(), cfg.eval_episodes, eval_rng);
    std::tie(row.variance_probe, row.variance_probe_uniform) = learner.probe_variance();
    row.p_entropy = learner.entropy();
    row.reset_count = learner.sampler().reset_count();
    row.config_hash = hash;
    trace.rows.push_back(std::move(row));
  };

  const std::size_t warmup = std::max(cfg.warmup_episodes, cfg.buffer);
  for (std::size_t e = 0; e < warmup; ++e) collect();
  evaluate(0);

  for (std::uint64_t it = 1; it <= cfg.iterations; ++it) {
    tag = static_cast<std::int64_t>(learner.updates());
    switch (cfg.mode) {
      case SelectionMode::aes:
        learner.update(sample_rng);
        learner.maybe_reset();
        tag = static_cast<std::int64_t>(learner.updates());
        collect();
        break;
      case SelectionMode::aes_naive:
        collect();
        learner.clear_feedback();
        for (std::size_t u = 0; u < cfg.updates_per_episode; ++u) learner.update(sample_rng);
        break;
      case SelectionMode::uniform:
      case SelectionMode::td_priority:
        for (std::size_t u = 0; u < cfg.updates_per_episode; ++u) learner.update(sample_rng);
        tag = static_cast<std::int64_t>(learner.updates());
        collect();
        break;
    }
    if (it % cfg.eval_interval == 0 || it == cfg.iterations) evaluate(it);
  }
  trace.updates = learner.updates();
  trace.ratios = learner.ratios();
  trace.final_params = learner.policy().params();
  return trace;
}

/// Interleaved update and collection with periodic resets; the config's mode must be aes.
inline TrainingTrace run_aes(const Environment& env, const TrainingConfig& cfg) {
  if (cfg.mode != SelectionMode::aes) throw ConfigError("run_aes requires mode=aes");
  return train(env, cfg);
}

/// Per-epoch reinitialization run; the config's mode must be aes_naive.
inline TrainingTrace run_naive_aes(const Environment& env, const TrainingConfig& cfg) {
  if (cfg.mode != SelectionMode::aes_naive) throw ConfigError("run_naive_aes requires mode=aes_naive");
  return train(env, cfg);
}

inline TrainingTrace run_baseline(const Environment& env, const TrainingConfig& cfg) {
  if (cfg.mode != SelectionMode::uniform && cfg.mode != SelectionMode::td_priority) {
    throw ConfigError("run_baseline requires mode=uniform or mode=td_priority");
  }
  return train(env, cfg);
}

}  // namespace aes::toy_rl
