#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "aes/error.hpp"
#include "aes/rng.hpp"

namespace aes {

/// A stochastic policy over a finite action set with a closed-form score function.
template <class P>
concept SoftmaxPolicy = requires(const P& cp, P& mp, int s, int a, Eigen::VectorXd& out, double scale) {
  { cp.num_actions() } -> std::convertible_to<int>;
  { cp.num_params() } -> std::convertible_to<Eigen::Index>;
  { cp.prob(s, a) } -> std::convertible_to<double>;
  { cp.log_prob(s, a) } -> std::convertible_to<double>;
  // out += scale * grad_theta log pi(a | s)
  cp.accumulate_grad_log_prob(s, a, scale, out);
  { cp.params() } -> std::convertible_to<const Eigen::VectorXd&>;
  { mp.params() } -> std::convertible_to<Eigen::VectorXd&>;
};

namespace detail {

/// Log-softmax of `logits` evaluated at entry a.
inline double log_softmax_at(const Eigen::Ref<const Eigen::VectorXd>& logits, int a) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits[a] - lse;
}

inline Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace detail

/// pi(a | s) = softmax(theta[s, :])(a), with theta stored row-major as states x actions.
class TabularSoftmax {
 public:
  TabularSoftmax(int num_states, int num_actions)
      : states_(num_states), actions_(num_actions),
        theta_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_states) * num_actions)) {
    if (num_states <= 0 || num_actions <= 0) throw DataError("policy needs states and actions");
  }

  int num_states() const { return states_; }
  int num_actions() const { return actions_; }
  Eigen::Index num_params() const { return theta_.size(); }
  const Eigen::VectorXd& params() const { return theta_; }
  Eigen::VectorXd& params() { return theta_; }

  auto logits(int s) const { return theta_.segment(static_cast<Eigen::Index>(s) * actions_, actions_); }

  double log_prob(int s, int a) const { return detail::log_softmax_at(logits(s), a); }
  double prob(int s, int a) const { return std::exp(log_prob(s, a)); }
  Eigen::VectorXd probs(int s) const { return detail::softmax(logits(s)); }

  // d/dtheta[s, b] log pi(a | s) = [a == b] - pi(b | s)
  void accumulate_grad_log_prob(int s, int a, double scale, Eigen::VectorXd& out) const {
    const Eigen::VectorXd pi = probs(s);
    auto seg = out.segment(static_cast<Eigen::Index>(s) * actions_, actions_);
    seg -= scale * pi;
    seg[a] += scale;
  }

  /// Clamps every logit to [-limit, limit]; then pi >= 1 / (1 + (A - 1) e^{2 limit}).
  void clip_logits(double limit) { theta_ = theta_.cwiseMax(-limit).cwiseMin(limit); }

  /// Analytic lower bound on pi(a | s) for logits within [-limit, limit].
  double min_prob_bound(double limit) const {
    return 1.0 / (1.0 + (actions_ - 1) * std::exp(2.0 * limit));
  }

  /// Smallest pi(a | s) over all state-action pairs.
  double min_prob() const {
    double m = 1.0;
    for (int s = 0; s < states_; ++s) m = std::min(m, probs(s).minCoeff());
    return m;
  }

  /// Largest ||grad log pi(a | s)|| over all state-action pairs.
  double max_score_norm() const {
    double m = 0.0;
    for (int s = 0; s < states_; ++s) {
      const Eigen::VectorXd pi = probs(s);
      for (int a = 0; a < actions_; ++a) {
        Eigen::VectorXd e = -pi;
        e[a] += 1.0;
        m = std::max(m, e.norm());
      }
    }
    return m;
  }

  int sample_action(int s, Rng& rng) const {
    const Eigen::VectorXd pi = probs(s);
    double u = rng.uniform();
    for (int a = 0; a < actions_ - 1; ++a) {
      if (u < pi[a]) return a;
      u -= pi[a];
    }
    return actions_ - 1;
  }

  /// Argmax with lowest-index tie breaking.
  int greedy_action(int s) const {
    Eigen::Index best = 0;
    logits(s).maxCoeff(&best);
    return static_cast<int>(best);
  }

 private:
  int states_;
  int actions_;
  Eigen::VectorXd theta_;
};

/// pi(a | s) = softmax_b(theta_b . phi(s)) with one weight block of size F per action.
/// phi is a fixed states x F feature matrix.
class LinearSoftmax {
 public:
  LinearSoftmax(Eigen::MatrixXd features, int num_actions)
      : features_(std::move(features)), actions_(num_actions),
        theta_(Eigen::VectorXd::Zero(features_.cols() * num_actions)) {
    if (features_.rows() == 0 || features_.cols() == 0 || num_actions <= 0) {
      throw DataError("policy needs features and actions");
    }
  }

  int num_states() const { return static_cast<int>(features_.rows()); }
  int num_actions() const { return actions_; }
  Eigen::Index num_params() const { return theta_.size(); }
  const Eigen::VectorXd& params() const { return theta_; }
  Eigen::VectorXd& params() { return theta_; }
  const Eigen::MatrixXd& features() const { return features_; }

  Eigen::VectorXd logits(int s) const {
    const Eigen::Index f = features_.cols();
    Eigen::VectorXd z(actions_);
    for (int b = 0; b < actions_; ++b) z[b] = theta_.segment(b * f, f).dot(features_.row(s));
    return z;
  }

  double log_prob(int s, int a) const { return detail::log_softmax_at(logits(s), a); }
  double prob(int s, int a) const { return std::exp(log_prob(s, a)); }
  Eigen::VectorXd probs(int s) const { return detail::softmax(logits(s)); }

  // d/dtheta_b log pi(a | s) = ([a == b] - pi(b | s)) phi(s)
  void accumulate_grad_log_prob(int s, int a, double scale, Eigen::VectorXd& out) const {
    const Eigen::VectorXd pi = probs(s);
    const Eigen::Index f = features_.cols();
    for (int b = 0; b < actions_; ++b) {
      const double coef = scale * ((b == a ? 1.0 : 0.0) - pi[b]);
      out.segment(b * f, f) += coef * features_.row(s).transpose();
    }
  }

  int sample_action(int s, Rng& rng) const {
    const Eigen::VectorXd pi = probs(s);
    double u = rng.uniform();
    for (int a = 0; a < actions_ - 1; ++a) {
      if (u < pi[a]) return a;
      u -= pi[a];
    }
    return actions_ - 1;
  }

  int greedy_action(int s) const {
    Eigen::Index best = 0;
    logits(s).maxCoeff(&best);
    return static_cast<int>(best);
  }

 private:
  Eigen::MatrixXd features_;
  int actions_;
  Eigen::VectorXd theta_;
};

static_assert(SoftmaxPolicy<TabularSoftmax>);
static_assert(SoftmaxPolicy<LinearSoftmax>);

}  // namespace aes
