#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "aes/error.hpp"
#include "aes/estimators.hpp"
#include "aes/regret.hpp"
#include "aes/rng.hpp"
#include "aes/simplex_sampler.hpp"
#include "aes/trajectory.hpp"
#include "aes/weighted_store.hpp"

namespace aes::harness {

// Synthetic regret experiments

enum class GeneratorKind { stationary, bounded_random, drifting };

inline std::string_view to_string(GeneratorKind g) {
  switch (g) {
    case GeneratorKind::stationary: return "stationary";
    case GeneratorKind::bounded_random: return "bounded_random";
    case GeneratorKind::drifting: return "drifting";
  }
  return "?";
}

inline GeneratorKind parse_generator(std::string_view s) {
  if (s == "stationary") return GeneratorKind::stationary;
  if (s == "bounded_random") return GeneratorKind::bounded_random;
  if (s == "drifting") return GeneratorKind::drifting;
  throw ConfigError("unknown generator '" + std::string(s) + "'");
}

struct RegretStudyConfig {
  GeneratorKind generator = GeneratorKind::bounded_random;
  std::size_t slots = 10;
  std::vector<std::uint64_t> horizons{500, 1000, 2000, 4000};
  FeedbackMode feedback = FeedbackMode::bandit;
  std::size_t batch = 1;
  ResetPattern pattern = ResetPattern::periodic;
  SamplerConfig sampler{.buffer_capacity = 10, .nu = 1.0, .kappa = 0.1, .reset_period = 1u << 30};
  bool kappa_cube_root = false;  // kappa = (|B| / T)^(1/3), capped at 1
  double reset_scale = 0.0;      // > 0: reset period = max(1, floor(sqrt(T) / reset_scale))
  double low = 0.01;             // loss levels are log-uniform on [low, high]
  double high = 1.0;
  double jitter = 0.2;
  std::uint64_t arrival_interval = 2;

  [[nodiscard]] RegretExperimentConfig for_horizon(std::uint64_t horizon) const {
    RegretExperimentConfig rc;
    rc.sampler = sampler;
    rc.sampler.buffer_capacity = slots;
    rc.horizon = horizon;
    rc.feedback = feedback;
    rc.batch = batch;
    rc.pattern = pattern;
    if (kappa_cube_root) {
      rc.sampler.kappa = std::min(1.0, std::cbrt(static_cast<double>(slots) / static_cast<double>(horizon)));
    }
    if (reset_scale > 0.0) {
      rc.sampler.reset_period = std::max<std::uint64_t>(
          1, static_cast<std::uint64_t>(std::floor(std::sqrt(static_cast<double>(horizon)) / reset_scale)));
    }
    return rc;
  }

  [[nodiscard]] GeneratorFactory factory() const {
    const RegretStudyConfig c = *this;
    return [c](Rng& init) -> std::unique_ptr<LossGenerator> {
      const auto level = [&] { return std::exp(init.uniform(std::log(c.low), std::log(c.high))); };
      switch (c.generator) {
        case GeneratorKind::stationary: {
          std::vector<double> row(c.slots);
          for (double& v : row) v = level();
          return std::make_unique<StationaryLosses>(std::move(row));
        }
        case GeneratorKind::bounded_random: {
          std::vector<double> scale(c.slots);
          for (double& v : scale) v = level();
          return std::make_unique<BoundedRandomLosses>(std::move(scale));
        }
        case GeneratorKind::drifting:
          return std::make_unique<DriftingLosses>(c.slots, c.low, c.high, c.jitter, c.arrival_interval, init);
      }
      throw ConfigError("unknown generator");
    };
  }

  void validate() const {
    if (slots == 0) throw ConfigError("regret.slots must be positive");
    if (horizons.empty()) throw ConfigError("regret.horizons must not be empty");
    for (auto h : horizons) {
      if (h == 0) throw ConfigError("regret.horizons must be positive");
    }
    if (batch == 0) throw ConfigError("regret.batch must be positive");
    if (!(low > 0.0) || !(high >= low)) throw ConfigError("regret.low/high must satisfy 0 < low <= high");
    if (jitter < 0.0 || jitter >= 2.0) throw ConfigError("regret.jitter must lie in [0, 2)");
    if (arrival_interval == 0) throw ConfigError("regret.arrival_interval must be positive");
    for (auto h : horizons) for_horizon(h).sampler.validate();
  }
};

inline RegretLedger run_regret_cell(const RegretStudyConfig& cfg, std::uint64_t horizon, std::uint64_t seed) {
  return run_regret_seed(cfg.factory(), cfg.for_horizon(horizon), seed);
}

// Heteroscedastic variance study

struct VarianceStudyConfig {
  std::size_t slots = 32;
  std::size_t dim = 4;
  double decades = 4.0;  // span of ||x_i||^2, in powers of ten
  std::size_t batch = 4;
  std::uint64_t learn_steps = 2000;
  std::size_t repeats = 2000;
  double nu = 1e-3;
  double kappa = 0.1;

  void validate() const {
    if (slots < 2) throw ConfigError("variance.slots must be at least 2");
    if (dim == 0) throw ConfigError("variance.dim must be positive");
    if (!(decades >= 0.0)) throw ConfigError("variance.decades must be non-negative");
    if (batch == 0) throw ConfigError("variance.batch must be positive");
    if (repeats < 2) throw ConfigError("variance.repeats must be at least 2");
    if (!(nu > 0.0)) throw ConfigError("variance.nu must be positive");
    if (kappa < 0.0 || kappa > 1.0) throw ConfigError("variance.kappa must lie in [0, 1]");
  }
};

struct VarianceStudyResult {
  std::uint64_t seed = 0;
  double empirical_uniform = 0.0;
  double empirical_learned = 0.0;
  double analytic_uniform = 0.0;
  double analytic_learned = 0.0;
  double d_min = 0.0;
  double d_max = 0.0;
};

/// Builds x_i = s_i z_i with z_i standard normal and log-uniform scales
/// whose squares span `decades` (both ends included), learns p by bandit
/// FTRL on d_i = ||x_i||^2 through the store, then measures the replay
/// estimator's variance under the learned p and under uniform with the same
/// random stream.
inline VarianceStudyResult run_variance_cell(const VarianceStudyConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng build(seed, "variance/build");
  Rng learn(seed, "variance/learn");
  std::vector<Eigen::VectorXd> x(cfg.slots);
  std::vector<double> d(cfg.slots);
  const double top = cfg.decades * std::log(10.0) / 2.0;
  for (std::size_t i = 0; i < cfg.slots; ++i) {
    const double log_s = i == 0 ? 0.0 : i == 1 ? top : build.uniform(0.0, top);
    Eigen::VectorXd z(cfg.dim);
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = build.normal();
    z /= std::max(z.norm(), 1e-12);
    x[i] = std::exp(log_s) * z;
    d[i] = x[i].squaredNorm();
  }

  SamplerState sampler(SamplerConfig{.buffer_capacity = cfg.slots,
                                     .nu = cfg.nu,
                                     .kappa = cfg.kappa,
                                     .reset_period = cfg.learn_steps + 1});
  WeightedStore store(sampler);
  for (std::size_t i = 0; i < cfg.slots; ++i) {
    Trajectory t;
    t.steps.push_back(Step{0, 0, 1.0, 0.0, 0});
    store.put(i, std::move(t), sampler);
  }
  std::vector<Feedback> fb;
  for (std::uint64_t t = 0; t < cfg.learn_steps; ++t) {
    fb.clear();
    for (std::size_t i : store.sample_indices(sampler, cfg.batch, learn)) {
      fb.push_back({i, d[i], store.probability(sampler, i)});
    }
    store.record_feedback(sampler, fb);
  }

  const SimplexDistribution learned = store.distribution(sampler);
  const SimplexDistribution uniform = SimplexDistribution::uniform(cfg.slots);
  VarianceStudyResult r;
  r.seed = seed;
  Rng probe_a(seed, "variance/probe");
  Rng probe_b(seed, "variance/probe");
  r.empirical_uniform = empirical_gradient_variance(x, uniform, cfg.batch, cfg.repeats, probe_a);
  r.empirical_learned = empirical_gradient_variance(x, learned, cfg.batch, cfg.repeats, probe_b);
  r.analytic_uniform = analytic_gradient_variance(x, uniform.values(), cfg.batch);
  r.analytic_learned = analytic_gradient_variance(x, learned.values(), cfg.batch);
  r.d_min = *std::min_element(d.begin(), d.end());
  r.d_max = *std::max_element(d.begin(), d.end());
  return r;
}

// Store micro-benchmark

struct BenchConfig {
  std::size_t capacity = 1'000'000;
  std::uint64_t operations = 1'000'000;
  std::size_t batch = 1;
};

struct BenchResult {
  std::string operation;
  std::size_t capacity = 0;
  std::uint64_t operations = 0;
  double seconds = 0.0;
  [[nodiscard]] double ops_per_second() const { return seconds > 0.0 ? static_cast<double>(operations) / seconds : 0.0; }
};

/// Times fill, sample + feedback, insert with complement overwriting and a
/// full index rebuild on a store of `capacity` one-step trajectories.
inline std::vector<BenchResult> run_bench(const BenchConfig& cfg, std::uint64_t seed) {
  if (cfg.capacity == 0 || cfg.operations == 0 || cfg.batch == 0) throw ConfigError("bench sizes must be positive");
  using clock = std::chrono::steady_clock;
  const auto seconds_since = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };
  Rng rng(seed, "bench");
  SamplerState sampler(SamplerConfig{.buffer_capacity = cfg.capacity, .nu = 1.0, .kappa = 0.1, .reset_period = 1u << 30});
  WeightedStore store(sampler);
  std::vector<BenchResult> out;

  const auto one_step = [] {
    Trajectory t;
    t.steps.push_back(Step{0, 0, 1.0, 0.0, 0});
    return t;
  };
  auto t0 = clock::now();
  for (std::size_t i = 0; i < cfg.capacity; ++i) store.insert(one_step(), sampler, rng);
  out.push_back({"fill", cfg.capacity, cfg.capacity, seconds_since(t0)});

  std::vector<Feedback> fb;
  fb.reserve(cfg.batch);
  t0 = clock::now();
  for (std::uint64_t op = 0; op < cfg.operations; ++op) {
    fb.clear();
    for (std::size_t i : store.sample_indices(sampler, cfg.batch, rng)) {
      fb.push_back({i, rng.uniform(), store.probability(sampler, i)});
    }
    store.record_feedback(sampler, fb);
  }
  out.push_back({"sample_update", cfg.capacity, cfg.operations, seconds_since(t0)});

  const std::uint64_t inserts = std::max<std::uint64_t>(1, cfg.operations / 10);
  t0 = clock::now();
  for (std::uint64_t op = 0; op < inserts; ++op) store.insert(one_step(), sampler, rng);
  out.push_back({"insert_overwrite", cfg.capacity, inserts, seconds_since(t0)});

  t0 = clock::now();
  store.rebuild_index(sampler);
  out.push_back({"rebuild_index", cfg.capacity, 1, seconds_since(t0)});
  return out;
}

inline constexpr std::string_view kBenchCsvHeader = "operation,capacity,operations,seconds,ops_per_second";

}  // namespace aes::harness
