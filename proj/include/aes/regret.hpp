#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "aes/error.hpp"
#include "aes/format.hpp"
#include "aes/estimators.hpp"
#include "aes/policy.hpp"
#include "aes/rng.hpp"
#include "aes/simplex_sampler.hpp"

namespace aes {

/// T x |B| matrix of per-step losses d_t(i), row-major.
class LossSequence {
 public:
  LossSequence(std::size_t steps, std::size_t slots) : steps_(steps), slots_(slots), data_(steps * slots, 0.0) {}

  [[nodiscard]] std::size_t steps() const { return steps_; }
  [[nodiscard]] std::size_t slots() const { return slots_; }

  std::span<double> row(std::size_t t) { return {data_.data() + t * slots_, slots_}; }
  [[nodiscard]] std::span<const double> row(std::size_t t) const { return {data_.data() + t * slots_, slots_}; }

  double& operator()(std::size_t t, std::size_t i) { return data_[t * slots_ + i]; }
  double operator()(std::size_t t, std::size_t i) const { return data_[t * slots_ + i]; }

  [[nodiscard]] std::vector<double> column_sums() const {
    std::vector<double> s(slots_, 0.0);
    for (std::size_t t = 0; t < steps_; ++t) {
      for (std::size_t i = 0; i < slots_; ++i) s[i] += (*this)(t, i);
    }
    return s;
  }

  void validate() const {
    for (double v : data_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("losses must be finite and non-negative");
    }
  }

 private:
  std::size_t steps_;
  std::size_t slots_;
  std::vector<double> data_;
};

/// Competitor distribution; `degenerate` marks inputs where the minimizer
/// touches the simplex boundary (all-zero or single-support losses).
struct Competitor {
  SimplexDistribution p;
  bool degenerate = false;
};

inline constexpr double kCompetitorFloor = 1e-12;

namespace detail {

inline Competitor sqrt_proportional(std::span<const double> totals) {
  std::vector<double> r(totals.size());
  std::size_t support = 0;
  for (std::size_t i = 0; i < totals.size(); ++i) {
    if (!(totals[i] >= 0.0) || !std::isfinite(totals[i])) throw DataError("losses must be finite and non-negative");
    r[i] = std::sqrt(totals[i]);
    if (r[i] > 0.0) ++support;
  }
  if (support == 0) return {SimplexDistribution::uniform(totals.size()), true};
  return {SimplexDistribution::from_weights(r), support < totals.size()};
}

}  // namespace detail

/// Best fixed distribution for the whole sequence: p*(i) proportional to sqrt(sum_t d_t(i)).
inline Competitor static_competitor(const LossSequence& seq) {
  const auto sums = seq.column_sums();
  return detail::sqrt_proportional(sums);
}

/// Best distribution for a single step: p_t*(i) proportional to sqrt(d_t(i)).
inline Competitor dynamic_competitor(std::span<const double> d_row) { return detail::sqrt_proportional(d_row); }

/// Floors every coordinate at kCompetitorFloor and renormalizes, so that f is finite.
inline SimplexDistribution floored(const SimplexDistribution& p) {
  std::vector<double> v(p.values().begin(), p.values().end());
  for (double& x : v) x = std::max(x, kCompetitorFloor);
  return SimplexDistribution::from_weights(v);
}

/// min_p sum_i c(i) / p(i) = (sum_i sqrt(c(i)))^2.
inline double min_inverse_weighted(std::span<const double> c) {
  double s = 0.0;
  for (double v : c) s += std::sqrt(v);
  return s * s;
}

// Regret accounting

struct RegretLedger {
  std::uint64_t seed = 0;
  std::size_t slots = 0;
  std::vector<double> realized;         // f_t(p_t)
  std::vector<double> realized_cum;     // sum_{s<=t} f_s(p_s)
  std::vector<double> static_opt_cum;   // min_p sum_{s<=t} f_s(p)
  std::vector<double> dynamic_opt_cum;  // sum_{s<=t} min_p f_s(p)

  [[nodiscard]] std::size_t steps() const { return realized.size(); }
  [[nodiscard]] double norm() const { return static_cast<double>(slots) * static_cast<double>(slots); }

  /// Static regret after t steps (1-based), normalized by |B|^2.
  [[nodiscard]] double regret_static(std::size_t t) const {
    return (realized_cum[t - 1] - static_opt_cum[t - 1]) / norm();
  }
  [[nodiscard]] double regret_dynamic(std::size_t t) const {
    return (realized_cum[t - 1] - dynamic_opt_cum[t - 1]) / norm();
  }
  [[nodiscard]] double cumulative_static() const { return regret_static(steps()); }
  [[nodiscard]] double cumulative_dynamic() const { return regret_dynamic(steps()); }
};

inline constexpr std::string_view kLedgerCsvHeader =
    "seed,t,realized_cost,static_opt_cum,dynamic_opt_cum,regret_static,regret_dynamic";

/// One row per step; regret columns are cumulative and normalized by |B|^2.
inline void write_ledger_csv(std::ostream& os, std::span<const RegretLedger> ledgers, bool header = true) {
  if (header) os << kLedgerCsvHeader << '\n';
  for (const RegretLedger& l : ledgers) {
    for (std::size_t t = 1; t <= l.steps(); ++t) {
      os << l.seed << ',' << t << ',' << format_real(l.realized[t - 1]) << ',' << format_real(l.static_opt_cum[t - 1])
         << ',' << format_real(l.dynamic_opt_cum[t - 1]) << ',' << format_real(l.regret_static(t)) << ','
         << format_real(l.regret_dynamic(t)) << '\n';
    }
  }
}

/// Source of per-step loss rows. Implementations may replace slot contents
/// between steps (new trajectories entering the buffer) and report which.
class LossGenerator {
 public:
  virtual ~LossGenerator() = default;
  [[nodiscard]] virtual std::size_t slots() const = 0;
  /// Fills `row` with d_t and appends to `replaced` every slot whose content changed before this step.
  virtual void next(std::span<double> row, std::vector<std::size_t>& replaced, Rng& rng) = 0;
};

/// The same row every step.
class StationaryLosses final : public LossGenerator {
 public:
  explicit StationaryLosses(std::vector<double> row) : row_(std::move(row)) {}
  std::size_t slots() const override { return row_.size(); }
  void next(std::span<double> row, std::vector<std::size_t>&, Rng&) override {
    std::copy(row_.begin(), row_.end(), row.begin());
  }

 private:
  std::vector<double> row_;
};

/// d_t(i) = scale(i) * u_t(i) with u i.i.d. uniform on [0, 1): bounded by max scale, otherwise arbitrary.
class BoundedRandomLosses final : public LossGenerator {
 public:
  explicit BoundedRandomLosses(std::vector<double> scale) : scale_(std::move(scale)) {}
  std::size_t slots() const override { return scale_.size(); }
  void next(std::span<double> row, std::vector<std::size_t>&, Rng& rng) override {
    for (std::size_t i = 0; i < scale_.size(); ++i) row[i] = scale_[i] * rng.uniform();
  }

 private:
  std::vector<double> scale_;
};

/// Slowly drifting buffer: each slot carries a loss level; each step the
/// level is perturbed by multiplicative noise of relative width `jitter`, and
/// every `arrival_interval` steps one uniformly chosen slot receives a fresh
/// level drawn log-uniformly from [low, high].
class DriftingLosses final : public LossGenerator {
 public:
  DriftingLosses(std::size_t slots, double low, double high, double jitter, std::uint64_t arrival_interval,
                 Rng& init)
      : low_(low), high_(high), jitter_(jitter), interval_(arrival_interval), level_(slots) {
    if (arrival_interval == 0) throw ConfigError("arrival_interval must be positive");
    for (double& v : level_) v = fresh(init);
  }

  std::size_t slots() const override { return level_.size(); }

  void next(std::span<double> row, std::vector<std::size_t>& replaced, Rng& rng) override {
    ++t_;
    if (t_ > 1 && (t_ - 1) % interval_ == 0) {
      const std::size_t j = rng.index(level_.size());
      level_[j] = fresh(rng);
      replaced.push_back(j);
    }
    for (std::size_t i = 0; i < level_.size(); ++i) {
      row[i] = level_[i] * (1.0 + jitter_ * (rng.uniform() - 0.5));
    }
  }

 private:
  double fresh(Rng& rng) const { return std::exp(rng.uniform(std::log(low_), std::log(high_))); }

  double low_, high_, jitter_;
  std::uint64_t interval_;
  std::vector<double> level_;
  std::uint64_t t_ = 0;
};

enum class FeedbackMode { full, bandit };

/// How the learner forgets. `periodic`: clear replaced slots and reset every
/// reset_period steps. `reinit_on_arrival`: reset every accumulator whenever
/// new content arrives and never otherwise.
enum class ResetPattern { periodic, reinit_on_arrival };

struct RegretExperimentConfig {
  SamplerConfig sampler;
  std::uint64_t horizon = 1000;
  FeedbackMode feedback = FeedbackMode::bandit;
  std::size_t batch = 1;
  ResetPattern pattern = ResetPattern::periodic;
};

using GeneratorFactory = std::function<std::unique_ptr<LossGenerator>(Rng&)>;

/// Runs the learner for one seed. The generator and the learner draw from
/// separate substreams, so learners with different configs face identical
/// loss sequences under the same seed.
inline RegretLedger run_regret_seed(const GeneratorFactory& make_generator, const RegretExperimentConfig& cfg,
                                    std::uint64_t seed) {
  Rng gen_rng(seed, "regret/losses");
  Rng learn_rng(seed, "regret/learner");
  auto generator = make_generator(gen_rng);
  const std::size_t n = generator->slots();
  SamplerConfig sc = cfg.sampler;
  sc.buffer_capacity = n;
  SamplerState sampler(sc);

  RegretLedger ledger;
  ledger.seed = seed;
  ledger.slots = n;
  ledger.realized.reserve(cfg.horizon);
  ledger.realized_cum.reserve(cfg.horizon);
  ledger.static_opt_cum.reserve(cfg.horizon);
  ledger.dynamic_opt_cum.reserve(cfg.horizon);

  std::vector<double> row(n), totals(n, 0.0);
  std::vector<std::size_t> replaced;
  std::vector<Feedback> draws;
  double realized_cum = 0.0;
  double dynamic_cum = 0.0;
  for (std::uint64_t t = 1; t <= cfg.horizon; ++t) {
    replaced.clear();
    generator->next(row, replaced, gen_rng);
    if (!replaced.empty()) {
      if (cfg.pattern == ResetPattern::reinit_on_arrival) {
        sampler.clear_all();
      } else {
        for (std::size_t j : replaced) sampler.clear_slot(j);
      }
    }
    const SimplexDistribution p = compute_distribution(sampler);
    const double cost = variance_objective(row, p);
    realized_cum += cost;
    dynamic_cum += min_inverse_weighted(row);
    for (std::size_t i = 0; i < n; ++i) totals[i] += row[i];
    ledger.realized.push_back(cost);
    ledger.realized_cum.push_back(realized_cum);
    ledger.static_opt_cum.push_back(min_inverse_weighted(totals));
    ledger.dynamic_opt_cum.push_back(dynamic_cum);

    if (cfg.feedback == FeedbackMode::full) {
      sampler.record_full_feedback(row);
    } else {
      draws.clear();
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const std::size_t i = draw(p, learn_rng);
        draws.push_back({i, row[i], p[i]});
      }
      sampler.record_feedback(draws);
    }
    if (cfg.pattern == ResetPattern::periodic) sampler.maybe_reset();
  }
  return ledger;
}

inline std::vector<RegretLedger> run_regret_experiment(const GeneratorFactory& make_generator,
                                                       const RegretExperimentConfig& cfg,
                                                       std::span<const std::uint64_t> seeds) {
  std::vector<RegretLedger> out;
  out.reserve(seeds.size());
  for (std::uint64_t s : seeds) out.push_back(run_regret_seed(make_generator, cfg, s));
  return out;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DataError("slope needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DataError("log-log fit needs positive values");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// Log-log growth rate of a ledger's cumulative regret over the second half of its horizon.
inline double tail_regret_slope(const RegretLedger& l, bool dynamic) {
  std::vector<double> x, y;
  for (std::size_t t = l.steps() / 2; t <= l.steps(); ++t) {
    if (t == 0) continue;
    const double r = dynamic ? l.regret_dynamic(t) : l.regret_static(t);
    if (r <= 0.0) continue;
    x.push_back(static_cast<double>(t));
    y.push_back(r);
  }
  return loglog_slope(x, y);
}

// Bound on d_t(i) from lower-bounded, Lipschitz-score policies and bounded rewards.

/// [zeta (1 - gamma^H) / (beta^H (1 - gamma)) * H * L]^2
inline double loss_bound(double beta, double lipschitz, double zeta, double gamma, int horizon) {
  const double h = static_cast<double>(horizon);
  const double v = zeta * (1.0 - std::pow(gamma, h)) / (std::pow(beta, h) * (1.0 - gamma)) * h * lipschitz;
  return v * v;
}

/// The three factors of d for one trajectory.
struct TrajectoryDiagnostics {
  double omega = 1.0;       // importance ratio
  double score_norm = 0.0;  // ||grad log p(tau)||
  double ret = 0.0;         // R(tau)
  double d = 0.0;           // ||omega * grad log p(tau) * R(tau)||^2
  int length = 0;
};

template <SoftmaxPolicy P>
TrajectoryDiagnostics diagnose(const Trajectory& traj, const P& target, double gamma) {
  TrajectoryDiagnostics out;
  out.omega = importance_ratio(traj, target, std::numeric_limits<double>::infinity());
  Eigen::VectorXd score = Eigen::VectorXd::Zero(target.num_params());
  for (const Step& s : traj.steps) target.accumulate_grad_log_prob(s.state, s.action, 1.0, score);
  out.score_norm = score.norm();
  out.ret = discounted_return(traj, gamma);
  out.d = out.omega * out.omega * (score * out.ret).squaredNorm();
  out.length = static_cast<int>(traj.length());
  return out;
}

struct LossBoundReport {
  bool holds = true;        // every check below passed
  double bound = 0.0;
  double max_d = 0.0;
  std::size_t d_violations = 0;
  std::size_t omega_violations = 0;   // omega <= 1 / beta^H
  std::size_t score_violations = 0;   // ||grad log p|| <= H L
  std::size_t return_violations = 0;  // |R| <= zeta (1 - gamma^H) / (1 - gamma)
};

inline LossBoundReport check_loss_bound(std::span<const TrajectoryDiagnostics> samples, double beta,
                                       double lipschitz, double zeta, double gamma, int horizon) {
  // Relative slack for rounding in the measured quantities.
  constexpr double kSlack = 1e-9;
  LossBoundReport r;
  r.bound = loss_bound(beta, lipschitz, zeta, gamma, horizon);
  const double h = static_cast<double>(horizon);
  const double omega_max = 1.0 / std::pow(beta, h);
  const double score_max = h * lipschitz;
  const double ret_max = zeta * (1.0 - std::pow(gamma, h)) / (1.0 - gamma);
  for (const auto& s : samples) {
    r.max_d = std::max(r.max_d, s.d);
    if (s.d > r.bound * (1.0 + kSlack)) ++r.d_violations;
    if (s.omega > omega_max * (1.0 + kSlack)) ++r.omega_violations;
    if (s.score_norm > score_max * (1.0 + kSlack)) ++r.score_violations;
    if (std::abs(s.ret) > ret_max * (1.0 + kSlack)) ++r.return_violations;
  }
  r.holds = r.d_violations + r.omega_violations + r.score_violations + r.return_violations == 0;
  return r;
}

/// d-only form for gradient samples whose factors were not kept.
inline LossBoundReport check_loss_bound(std::span<const GradientSample> samples, double beta, double lipschitz,
                                       double zeta, double gamma, int horizon) {
  LossBoundReport r;
  r.bound = loss_bound(beta, lipschitz, zeta, gamma, horizon);
  for (const auto& s : samples) {
    r.max_d = std::max(r.max_d, s.d);
    if (s.d > r.bound * (1.0 + 1e-9)) ++r.d_violations;
  }
  r.holds = r.d_violations == 0;
  return r;
}

}  // namespace aes
