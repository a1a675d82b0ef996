#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "aes/error.hpp"
#include "aes/policy.hpp"
#include "aes/rng.hpp"
#include "aes/trajectory.hpp"

namespace aes::toy_rl {

enum class EnvKind { chain, gridworld, two_state_bandit };

struct Transition {
  double prob = 1.0;
  int next = 0;
};

/// Finite tabular MDP with a fixed horizon. Stateless: episodes are driven
/// by the caller through initial_state / step.
class Environment {
 public:
  Environment(EnvKind kind, std::string name, int num_states, int num_actions, int horizon, double gamma)
      : kind_(kind), name_(std::move(name)), states_(num_states), actions_(num_actions), horizon_(horizon),
        gamma_(gamma), initial_(num_states, 0.0),
        transitions_(static_cast<std::size_t>(num_states) * num_actions),
        rewards_(static_cast<std::size_t>(num_states) * num_actions, 0.0) {
    if (num_states <= 0 || num_actions <= 0) throw ConfigError("environment needs states and actions");
    if (horizon <= 0) throw ConfigError("horizon must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  }

  EnvKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  int num_states() const { return states_; }
  int num_actions() const { return actions_; }
  int horizon() const { return horizon_; }
  double gamma() const { return gamma_; }

  const std::vector<double>& initial_distribution() const { return initial_; }
  const std::vector<Transition>& transitions(int s, int a) const { return transitions_[index(s, a)]; }
  double reward(int s, int a) const { return rewards_[index(s, a)]; }

  /// max |r(s, a)|
  double reward_bound() const {
    double z = 0.0;
    for (double r : rewards_) z = std::max(z, std::abs(r));
    return z;
  }

  void set_initial(std::vector<double> rho0) {
    if (rho0.size() != static_cast<std::size_t>(states_)) throw ConfigError("initial distribution size");
    initial_ = std::move(rho0);
  }
  void set_reward(int s, int a, double r) { rewards_[index(s, a)] = r; }
  void set_transitions(int s, int a, std::vector<Transition> t) { transitions_[index(s, a)] = std::move(t); }

  int initial_state(Rng& rng) const { return pick(initial_, rng); }

  /// Samples s' ~ P(. | s, a); returns (s', r(s, a)).
  std::pair<int, double> step(int s, int a, Rng& rng) const {
    const auto& ts = transitions(s, a);
    double u = rng.uniform();
    int next = ts.back().next;
    for (const Transition& t : ts) {
      if (u < t.prob) {
        next = t.next;
        break;
      }
      u -= t.prob;
    }
    return {next, reward(s, a)};
  }

  /// n-state corridor, start at the left end. Action 1 moves right, action 0
  /// moves left; with probability `slip` the move is reversed. Sitting at the
  /// right end pays 1 per step; moving left from the left end pays `lure`.
  static Environment chain(int n, int horizon = 8, double gamma = 0.99, double slip = 0.1, double lure = 0.1) {
    if (n < 2) throw ConfigError("chain needs at least two states");
    Environment env(EnvKind::chain, "chain" + std::to_string(n), n, 2, horizon, gamma);
    std::vector<double> rho0(n, 0.0);
    rho0[0] = 1.0;
    env.set_initial(std::move(rho0));
    for (int s = 0; s < n; ++s) {
      const int left = std::max(s - 1, 0);
      const int right = std::min(s + 1, n - 1);
      env.set_transitions(s, 0, merge({{1.0 - slip, left}, {slip, right}}));
      env.set_transitions(s, 1, merge({{1.0 - slip, right}, {slip, left}}));
    }
    env.set_reward(n - 1, 0, 1.0);
    env.set_reward(n - 1, 1, 1.0);
    env.set_reward(0, 0, lure);
    return env;
  }

  /// rows x cols grid, start in the top-left corner. Actions up, right, down,
  /// left; with probability `slip` the agent moves in a uniformly random other
  /// direction. Occupying the goal pays 1 per step (the goal is absorbing),
  /// occupying a trap costs 1 per step.
  static Environment gridworld(int rows, int cols, std::pair<int, int> goal,
                               const std::vector<std::pair<int, int>>& traps, int horizon = 12,
                               double gamma = 0.99, double slip = 0.1) {
    const int n = rows * cols;
    Environment env(EnvKind::gridworld,
                    "gridworld" + std::to_string(rows) + "x" + std::to_string(cols), n, 4, horizon, gamma);
    std::vector<double> rho0(n, 0.0);
    rho0[0] = 1.0;
    env.set_initial(std::move(rho0));
    const auto id = [cols](int r, int c) { return r * cols + c; };
    const int goal_id = id(goal.first, goal.second);
    constexpr int dr[4] = {-1, 0, 1, 0};
    constexpr int dc[4] = {0, 1, 0, -1};
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const int s = id(r, c);
        for (int a = 0; a < 4; ++a) {
          if (s == goal_id) {
            env.set_transitions(s, a, {{1.0, s}});
            continue;
          }
          std::vector<Transition> ts;
          for (int m = 0; m < 4; ++m) {
            const double pr = m == a ? 1.0 - slip : slip / 3.0;
            if (pr <= 0.0) continue;
            const int nr = std::clamp(r + dr[m], 0, rows - 1);
            const int nc = std::clamp(c + dc[m], 0, cols - 1);
            ts.push_back({pr, id(nr, nc)});
          }
          env.set_transitions(s, a, merge(std::move(ts)));
        }
      }
    }
    for (int a = 0; a < 4; ++a) env.set_reward(goal_id, a, 1.0);
    for (const auto& [tr, tc] : traps) {
      for (int a = 0; a < 4; ++a) env.set_reward(id(tr, tc), a, -1.0);
    }
    return env;
  }

  /// Default 4x4 grid: goal in the far corner, two traps on the diagonal.
  static Environment gridworld4x4() { return gridworld(4, 4, {3, 3}, {{1, 1}, {2, 2}}); }

  /// One-step problem over two equally likely states with two actions each.
  /// rewards[s][a] is the payoff.
  static Environment two_state_bandit(std::vector<std::vector<double>> rewards = {{1.0, 0.0}, {0.0, 1.0}},
                                      double gamma = 0.99) {
    Environment env(EnvKind::two_state_bandit, "bandit", 2, 2, 1, gamma);
    env.set_initial({0.5, 0.5});
    for (int s = 0; s < 2; ++s) {
      for (int a = 0; a < 2; ++a) {
        env.set_transitions(s, a, {{1.0, s}});
        env.set_reward(s, a, rewards.at(s).at(a));
      }
    }
    return env;
  }

  TabularSoftmax make_policy() const { return TabularSoftmax(states_, actions_); }

 private:
  std::size_t index(int s, int a) const {
    if (s < 0 || s >= states_ || a < 0 || a >= actions_) throw DataError("state or action out of range");
    return static_cast<std::size_t>(s) * actions_ + a;
  }

  static int pick(const std::vector<double>& probs, Rng& rng) {
    double u = rng.uniform();
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      if (u < probs[i]) return static_cast<int>(i);
      u -= probs[i];
    }
    return static_cast<int>(probs.size() - 1);
  }

  // Combines duplicate successor states (e.g. bumps into a wall).
  static std::vector<Transition> merge(std::vector<Transition> ts) {
    std::vector<Transition> out;
    for (const Transition& t : ts) {
      if (t.prob <= 0.0) continue;
      auto it = std::find_if(out.begin(), out.end(), [&](const Transition& o) { return o.next == t.next; });
      if (it == out.end()) {
        out.push_back(t);
      } else {
        it->prob += t.prob;
      }
    }
    return out;
  }

  EnvKind kind_;
  std::string name_;
  int states_;
  int actions_;
  int horizon_;
  double gamma_;
  std::vector<double> initial_;
  std::vector<std::vector<Transition>> transitions_;
  std::vector<double> rewards_;
};

/// Exact J(theta) by backward induction over the finite horizon.
template <class P>
double exact_policy_value(const Environment& env, const P& policy) {
  if (env.num_states() * env.num_actions() > 100 || env.horizon() > 16) {
    throw ConfigError("exact evaluation limited to |S||A| <= 100 and H <= 16");
  }
  std::vector<double> v(env.num_states(), 0.0), next(env.num_states());
  for (int k = env.horizon() - 1; k >= 0; --k) {
    for (int s = 0; s < env.num_states(); ++s) {
      double acc = 0.0;
      for (int a = 0; a < env.num_actions(); ++a) {
        double q = env.reward(s, a);
        for (const Transition& t : env.transitions(s, a)) q += env.gamma() * t.prob * v[t.next];
        acc += policy.prob(s, a) * q;
      }
      next[s] = acc;
    }
    v.swap(next);
  }
  double j = 0.0;
  for (int s = 0; s < env.num_states(); ++s) j += env.initial_distribution()[s] * v[s];
  return j;
}

/// Exact optimal J over all (possibly non-stationary) policies.
inline double optimal_value(const Environment& env) {
  std::vector<double> v(env.num_states(), 0.0), next(env.num_states());
  for (int k = env.horizon() - 1; k >= 0; --k) {
    for (int s = 0; s < env.num_states(); ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < env.num_actions(); ++a) {
        double q = env.reward(s, a);
        for (const Transition& t : env.transitions(s, a)) q += env.gamma() * t.prob * v[t.next];
        best = std::max(best, q);
      }
      next[s] = best;
    }
    v.swap(next);
  }
  double j = 0.0;
  for (int s = 0; s < env.num_states(); ++s) j += env.initial_distribution()[s] * v[s];
  return j;
}

/// Rolls out one episode, recording the behavior probability of each action.
template <class P>
Trajectory rollout(const Environment& env, const P& policy, Rng& rng, std::int64_t policy_tag = 0) {
  Trajectory traj;
  traj.policy_tag = policy_tag;
  traj.steps.reserve(env.horizon());
  int s = env.initial_state(rng);
  for (int k = 0; k < env.horizon(); ++k) {
    const int a = policy.sample_action(s, rng);
    const double mu = policy.prob(s, a);
    const auto [next, r] = env.step(s, a, rng);
    traj.steps.push_back({s, a, mu, r, next});
    s = next;
  }
  return traj;
}

/// Mean discounted return of the greedy policy over `episodes` rollouts.
template <class P>
double greedy_return(const Environment& env, const P& policy, std::size_t episodes, Rng& rng) {
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    int s = env.initial_state(rng);
    double disc = 1.0;
    for (int k = 0; k < env.horizon(); ++k) {
      const auto [next, r] = env.step(s, policy.greedy_action(s), rng);
      total += disc * r;
      disc *= env.gamma();
      s = next;
    }
  }
  return total / static_cast<double>(episodes);
}

}  // namespace aes::toy_rl
