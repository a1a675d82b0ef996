#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "aes/error.hpp"
#include "aes/policy.hpp"
#include "aes/rng.hpp"
#include "aes/simplex_sampler.hpp"
#include "aes/trajectory.hpp"
#include "aes/weighted_store.hpp"

namespace aes {

/// Default ceiling on log(omega); exp(50) keeps d finite in double precision.
inline constexpr double kDefaultLogRatioCap = 50.0;

/// Counts how often the importance-ratio cap was hit.
struct RatioStats {
  std::uint64_t evaluations = 0;
  std::uint64_t cap_hits = 0;
};

/// Per-trajectory quantities at the current parameters.
struct GradientSample {
  std::size_t slot = 0;
  double omega = 1.0;        // trajectory importance ratio
  Eigen::VectorXd g;         // grad log p(tau) * R(tau)
  double d = 0.0;            // ||omega * g||^2
};

/// Product over steps of pi(a|s) / mu(a|s), accumulated in log space.
template <SoftmaxPolicy P>
double importance_ratio(const Trajectory& traj, const P& target, double log_cap = kDefaultLogRatioCap,
                        RatioStats* stats = nullptr) {
  double log_w = 0.0;
  for (const Step& s : traj.steps) {
    if (!(s.behavior_prob > 0.0)) throw DataError("behavior probability must be positive");
    const double lp = target.log_prob(s.state, s.action);
    if (!std::isfinite(lp)) throw DataError("target assigns zero probability to a visited action");
    log_w += lp - std::log(s.behavior_prob);
  }
  if (stats) ++stats->evaluations;
  if (log_w > log_cap) {
    log_w = log_cap;
    if (stats) ++stats->cap_hits;
  }
  return std::exp(log_w);
}

inline double discounted_return(const Trajectory& traj, double gamma) {
  double r = 0.0;
  double disc = 1.0;
  for (const Step& s : traj.steps) {
    r += disc * s.reward;
    disc *= gamma;
  }
  return r;
}

/// grad log p(tau | pi) * R(tau). Transition and initial-state terms do not
/// depend on theta and drop out.
template <SoftmaxPolicy P>
Eigen::VectorXd score_return_grad(const Trajectory& traj, const P& target, double gamma) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(target.num_params());
  const double ret = discounted_return(traj, gamma);
  if (ret == 0.0) return g;
  for (const Step& s : traj.steps) target.accumulate_grad_log_prob(s.state, s.action, ret, g);
  return g;
}

template <SoftmaxPolicy P>
GradientSample make_gradient_sample(std::size_t slot, const Trajectory& traj, const P& target, double gamma,
                                    double log_cap = kDefaultLogRatioCap, RatioStats* stats = nullptr) {
  GradientSample out;
  out.slot = slot;
  out.omega = importance_ratio(traj, target, log_cap, stats);
  out.g = score_return_grad(traj, target, gamma);
  out.d = out.omega * out.omega * out.g.squaredNorm();
  return out;
}

/// (1 / |Psi|) sum_k lambda_k omega_k g_k with lambda_k = 1 / (p_k |B|).
/// `probs[k]` is the probability with which batch[k] was drawn.
inline Eigen::VectorXd replay_gradient(std::span<const GradientSample> batch, std::span<const double> probs,
                                       std::size_t capacity) {
  if (batch.empty()) throw DataError("replay gradient of an empty batch");
  if (probs.size() != batch.size()) throw DataError("one probability per batch member required");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(batch.front().g.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    if (!(probs[k] > 0.0)) throw InvariantViolation("batch member drawn with probability 0");
    const double lambda = 1.0 / (probs[k] * static_cast<double>(capacity));
    acc += (lambda * batch[k].omega) * batch[k].g;
  }
  return acc / static_cast<double>(batch.size());
}

inline Eigen::VectorXd replay_gradient(std::span<const GradientSample> batch, const SimplexDistribution& p) {
  std::vector<double> probs;
  probs.reserve(batch.size());
  for (const GradientSample& s : batch) {
    if (s.slot >= p.size()) throw DataError("batch slot out of range");
    probs.push_back(p[s.slot]);
  }
  return replay_gradient(batch, probs, p.size());
}

/// Monte Carlo policy gradient from trajectories generated by `target` itself.
template <SoftmaxPolicy P>
Eigen::VectorXd onpolicy_gradient(std::span<const Trajectory> trajs, const P& target, double gamma) {
  if (trajs.empty()) throw DataError("on-policy gradient of no trajectories");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(target.num_params());
  for (const Trajectory& t : trajs) acc += score_return_grad(t, target, gamma);
  return acc / static_cast<double>(trajs.size());
}

/// f(p) = sum_i d(i) / p(i). Zero-loss slots contribute nothing even at p(i) = 0.
inline double variance_objective(std::span<const double> d, std::span<const double> p) {
  if (d.size() != p.size()) throw DataError("loss and distribution differ in length");
  double f = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] < 0.0 || !std::isfinite(d[i])) throw DataError("loss must be finite and non-negative");
    if (d[i] == 0.0) continue;
    if (!(p[i] > 0.0)) throw InvariantViolation("objective is infinite: positive loss on a zero-probability slot");
    f += d[i] / p[i];
  }
  return f;
}

inline double variance_objective(std::span<const double> d, const SimplexDistribution& p) {
  return variance_objective(d, p.values());
}

/// Exact total variance (trace of the covariance) of the replay estimator
/// with a batch of `batch` i.i.d. draws from p, given x_i = omega_i g_i:
///   (1 / |Psi|) [ sum_i ||x_i||^2 / (p_i |B|^2) - ||(1/|B|) sum_i x_i||^2 ].
inline double analytic_gradient_variance(std::span<const Eigen::VectorXd> weighted_grads,
                                         std::span<const double> p, std::size_t batch) {
  if (weighted_grads.empty() || weighted_grads.size() != p.size()) throw DataError("size mismatch");
  if (batch == 0) throw DataError("batch must be positive");
  const double n = static_cast<double>(weighted_grads.size());
  double second = 0.0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(weighted_grads.front().size());
  for (std::size_t i = 0; i < weighted_grads.size(); ++i) {
    const double sq = weighted_grads[i].squaredNorm();
    if (sq > 0.0) {
      if (!(p[i] > 0.0)) throw InvariantViolation("positive loss on a zero-probability slot");
      second += sq / (p[i] * n * n);
    }
    mean += weighted_grads[i];
  }
  mean /= n;
  return std::max(0.0, (second - mean.squaredNorm()) / static_cast<double>(batch));
}

namespace detail {

/// Sum over coordinates of the unbiased sample variance of `draws`.
inline double total_sample_variance(const std::vector<Eigen::VectorXd>& draws) {
  const double r = static_cast<double>(draws.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(draws.front().size());
  for (const auto& v : draws) mean += v;
  mean /= r;
  double ss = 0.0;
  for (const auto& v : draws) ss += (v - mean).squaredNorm();
  return ss / (r - 1.0);
}

}  // namespace detail

/// Monte Carlo variance of the replay estimator under an explicit distribution.
/// Draws `repeats` batches from p by inverse-CDF search, independent of any sum tree.
inline double empirical_gradient_variance(std::span<const Eigen::VectorXd> weighted_grads,
                                          const SimplexDistribution& p, std::size_t batch,
                                          std::size_t repeats, Rng& rng) {
  if (repeats < 2) throw DataError("variance needs at least two repeats");
  if (batch == 0) throw DataError("batch must be positive");
  if (weighted_grads.size() != p.size()) throw DataError("size mismatch");
  std::vector<double> cdf(p.size());
  double run = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) cdf[i] = (run += p[i]);
  const double n = static_cast<double>(p.size());
  std::vector<Eigen::VectorXd> draws;
  draws.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    Eigen::VectorXd est = Eigen::VectorXd::Zero(weighted_grads.front().size());
    for (std::size_t b = 0; b < batch; ++b) {
      const double u = rng.uniform() * run;
      auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), p.size() - 1);
      while (p[i] <= 0.0) --i;  // upper_bound skips zero-width cells except at the end
      est += weighted_grads[i] / (p[i] * n);
    }
    draws.push_back(est / static_cast<double>(batch));
  }
  return detail::total_sample_variance(draws);
}

/// Monte Carlo variance of the replay estimator at frozen parameters, drawing
/// batches through the store's index exactly as training does. Pure read of
/// store and sampler.
template <SoftmaxPolicy P>
double empirical_gradient_variance(const WeightedStore& store, const SamplerState& sampler, const P& target,
                                   double gamma, std::size_t batch, std::size_t repeats, Rng& rng,
                                   double log_cap = kDefaultLogRatioCap) {
  if (repeats < 2) throw DataError("variance needs at least two repeats");
  if (batch == 0) throw DataError("batch must be positive");
  if (!store.warmed_up()) throw NotReady("buffer not warmed up");
  std::vector<Eigen::VectorXd> x(store.capacity());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const GradientSample s = make_gradient_sample(i, store.at(i), target, gamma, log_cap);
    x[i] = s.omega * s.g;
  }
  const double n = static_cast<double>(store.capacity());
  std::vector<Eigen::VectorXd> draws;
  draws.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    Eigen::VectorXd est = Eigen::VectorXd::Zero(target.num_params());
    for (std::size_t i : store.sample_indices(sampler, batch, rng)) {
      est += x[i] / (store.probability(sampler, i) * n);
    }
    draws.push_back(est / static_cast<double>(batch));
  }
  return detail::total_sample_variance(draws);
}

}  // namespace aes
