#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "aes/error.hpp"
#include "aes/rng.hpp"

namespace aes {

struct HardReset {};

struct SoftReset {
  double rho = 0.9;
};

/// Forgetting factor interpolated linearly in the update step from rho_start
/// to rho_end over total_steps, then held at rho_end.
struct AnnealedSoftReset {
  double rho_start = 0.8;
  double rho_end = 0.2;
  std::uint64_t total_steps = 1;
};

using ResetMode = std::variant<HardReset, SoftReset, AnnealedSoftReset>;

struct SamplerConfig {
  std::size_t buffer_capacity = 1;
  double nu = 1000.0;
  double kappa = 0.1;
  std::uint64_t reset_period = 1000;
  ResetMode reset_mode = HardReset{};
  /// Upper bound on a single d_t(i). Together with kappa it caps each
  /// importance-weighted feedback term at (capacity / kappa) * feedback_bound.
  double feedback_bound = std::numeric_limits<double>::infinity();

  void validate() const {
    if (buffer_capacity == 0) throw ConfigError("buffer_capacity must be positive");
    if (!(nu > 0.0) || !std::isfinite(nu)) throw ConfigError("nu must be positive and finite");
    if (!(kappa >= 0.0 && kappa <= 1.0)) throw ConfigError("kappa must lie in [0, 1]");
    if (reset_period == 0) throw ConfigError("reset_period must be >= 1");
    if (!(feedback_bound > 0.0)) throw ConfigError("feedback_bound must be positive");
    auto in_unit = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (const auto* soft = std::get_if<SoftReset>(&reset_mode); soft && !in_unit(soft->rho)) {
      throw ConfigError("rho must lie in [0, 1]");
    }
    if (const auto* an = std::get_if<AnnealedSoftReset>(&reset_mode)) {
      if (!in_unit(an->rho_start) || !in_unit(an->rho_end)) {
        throw ConfigError("rho_start and rho_end must lie in [0, 1]");
      }
      if (an->total_steps == 0) throw ConfigError("annealing total_steps must be positive");
    }
  }

  /// Largest admissible contribution d / p of a single draw, or +inf when no cap applies.
  [[nodiscard]] double feedback_cap() const {
    if (kappa <= 0.0 || !std::isfinite(feedback_bound)) {
      return std::numeric_limits<double>::infinity();
    }
    return static_cast<double>(buffer_capacity) / kappa * feedback_bound;
  }
};

/// A probability vector over buffer slots.
class SimplexDistribution {
 public:
  SimplexDistribution() = default;

  /// Takes ownership of an already normalized vector.
  explicit SimplexDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw DataError("distribution over zero slots");
    double total = 0.0;
    for (double v : probs_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("probability out of range");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw DataError("probabilities do not sum to one");
  }

  /// Normalizes non-negative weights.
  static SimplexDistribution from_weights(std::span<const double> weights) {
    double total = 0.0;
    for (double v : weights) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("weight out of range");
      total += v;
    }
    if (!(total > 0.0)) throw DataError("weights sum to zero");
    std::vector<double> p(weights.begin(), weights.end());
    for (double& v : p) v /= total;
    return SimplexDistribution(std::move(p));
  }

  static SimplexDistribution uniform(std::size_t n) {
    return SimplexDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  [[nodiscard]] std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  [[nodiscard]] std::span<const double> values() const { return probs_; }

  /// Shannon entropy in nats.
  [[nodiscard]] double entropy() const {
    double h = 0.0;
    for (double v : probs_) {
      if (v > 0.0) h -= v * std::log(v);
    }
    return h;
  }

 private:
  std::vector<double> probs_;
};

/// One draw of a sampled batch: slot index, its loss d_t(i) and the probability it was drawn with.
struct Feedback {
  std::size_t slot = 0;
  double loss = 0.0;
  double prob = 0.0;
};

/// FTRL accumulators w(i) over buffer slots plus the policy-update counter.
///
/// The distribution produced from this state is
///   p(i) = (1 - kappa) * sqrt(w(i) + nu) / sum_j sqrt(w(j) + nu) + kappa / |B|.
/// Single writer; const members may be called concurrently when no writer is active.
class SamplerState {
 public:
  explicit SamplerState(SamplerConfig config) : config_(std::move(config)) {
    config_.validate();
    w_.assign(config_.buffer_capacity, 0.0);
  }

  [[nodiscard]] const SamplerConfig& config() const { return config_; }
  [[nodiscard]] std::size_t capacity() const { return w_.size(); }
  [[nodiscard]] std::span<const double> weights() const { return w_; }
  [[nodiscard]] std::uint64_t step() const { return step_; }
  [[nodiscard]] std::uint64_t reset_count() const { return resets_; }
  [[nodiscard]] std::uint64_t clamp_count() const { return clamps_; }

  /// Unnormalized score sqrt(w(i) + nu) of slot i.
  [[nodiscard]] double score(std::size_t i) const { return std::sqrt(w_[i] + config_.nu); }

  /// Forgetting factor in effect at the current step. Hard resets behave as rho = 0.
  [[nodiscard]] double current_rho() const {
    return std::visit(
        [this](const auto& mode) -> double {
          using M = std::decay_t<decltype(mode)>;
          if constexpr (std::is_same_v<M, HardReset>) {
            return 0.0;
          } else if constexpr (std::is_same_v<M, SoftReset>) {
            return mode.rho;
          } else {
            const double frac = std::min(
                1.0, static_cast<double>(step_) / static_cast<double>(mode.total_steps));
            return mode.rho_start + (mode.rho_end - mode.rho_start) * frac;
          }
        },
        config_.reset_mode);
  }

  /// Adds the importance-weighted loss of each draw, d / (p * n) with n the batch size,
  /// so that the expected increment of w(i) equals d(i). Advances the step counter.
  /// Throws before mutating anything if any draw is invalid.
  void record_feedback(std::span<const Feedback> draws) {
    for (const Feedback& f : draws) {
      if (f.slot >= w_.size()) throw DataError("feedback for slot " + std::to_string(f.slot) + " out of range");
      if (!(f.loss >= 0.0) || !std::isfinite(f.loss)) throw DataError("loss must be finite and non-negative");
      if (!(f.prob > 0.0)) {
        throw InvariantViolation("feedback for slot " + std::to_string(f.slot) + " drawn with probability 0");
      }
    }
    const double cap = config_.feedback_cap();
    const double n = static_cast<double>(draws.size());
    for (const Feedback& f : draws) {
      double est = f.loss / f.prob;
      if (est > cap) {
        est = cap;
        ++clamps_;
      }
      w_[f.slot] += est / n;
    }
    ++step_;
  }

  /// Full-information update: w(i) += d(i) for every slot. Advances the step counter.
  void record_full_feedback(std::span<const double> d) {
    if (d.size() != w_.size()) throw DataError("full feedback length mismatch");
    for (double v : d) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("loss must be finite and non-negative");
    }
    for (std::size_t i = 0; i < d.size(); ++i) w_[i] += d[i];
    ++step_;
  }

  /// Applies the periodic reset when the step counter is a positive multiple of the reset period.
  /// Returns whether a reset happened.
  bool maybe_reset() {
    if (step_ == 0 || step_ % config_.reset_period != 0) return false;
    reset_all();
    return true;
  }

  /// Unconditional reset according to the configured mode.
  void reset_all() {
    if (std::holds_alternative<HardReset>(config_.reset_mode)) {
      std::fill(w_.begin(), w_.end(), 0.0);
    } else {
      const double rho = current_rho();
      for (double& v : w_) v *= rho;
    }
    ++resets_;
  }

  /// Zeroes every accumulator regardless of the configured mode; counts as a reset.
  void clear_all() {
    std::fill(w_.begin(), w_.end(), 0.0);
    ++resets_;
  }

  /// Zeroes one slot, e.g. after its trajectory was overwritten.
  void clear_slot(std::size_t i) { w_.at(i) = 0.0; }

  /// Restores raw accumulators, used when loading snapshots.
  void restore(std::vector<double> w, std::uint64_t step) {
    if (w.size() != w_.size()) throw DataError("snapshot weight vector has wrong length");
    for (double v : w) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidState("snapshot weight out of range");
    }
    w_ = std::move(w);
    step_ = step;
  }

 private:
  SamplerConfig config_;
  std::vector<double> w_;
  std::uint64_t step_ = 0;
  std::uint64_t resets_ = 0;
  std::uint64_t clamps_ = 0;
};

/// Mixed FTRL distribution for the current accumulators.
inline SimplexDistribution compute_distribution(const SamplerState& state) {
  const SamplerConfig& cfg = state.config();
  if (!(cfg.nu > 0.0)) throw InvalidState("nu must be positive");
  const auto w = state.weights();
  std::vector<double> p(w.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i]) || w[i] < 0.0) throw InvalidState("accumulator out of range");
    p[i] = std::sqrt(w[i] + cfg.nu);
    total += p[i];
  }
  const double floor = cfg.kappa / static_cast<double>(w.size());
  for (double& v : p) v = (1.0 - cfg.kappa) * v / total + floor;
  return SimplexDistribution(std::move(p));
}

/// Convenience form taking parallel arrays; `sampled` is the multiset of drawn slots.
inline void record_feedback(SamplerState& state, std::span<const std::size_t> sampled,
                            std::span<const double> d, const SimplexDistribution& p_used) {
  if (sampled.size() != d.size()) throw DataError("sampled and d differ in length");
  std::vector<Feedback> draws;
  draws.reserve(sampled.size());
  for (std::size_t k = 0; k < sampled.size(); ++k) {
    if (sampled[k] >= p_used.size()) throw DataError("sampled slot out of range");
    draws.push_back({sampled[k], d[k], p_used[sampled[k]]});
  }
  state.record_feedback(draws);
}

/// One draw from p by linear inverse-CDF scan. Intended for small supports.
inline std::size_t draw(const SimplexDistribution& p, Rng& rng) {
  double u = rng.uniform();
  const std::size_t last = p.size() - 1;
  for (std::size_t i = 0; i < last; ++i) {
    if (u < p[i]) return i;
    u -= p[i];
  }
  return last;
}

/// Buffer-sampling importance ratio 1 / (p(k) |B|).
inline double lambda_ratio(const SimplexDistribution& p, std::size_t k) {
  if (k >= p.size()) throw DataError("slot out of range");
  if (!(p[k] > 0.0)) throw InvariantViolation("lambda ratio for a zero-probability slot");
  return 1.0 / (p[k] * static_cast<double>(p.size()));
}

}  // namespace aes
