#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "aes/error.hpp"
#include "aes/simplex_sampler.hpp"

namespace aes {

/// Euclidean projection onto the probability simplex (sort-and-threshold).
inline std::vector<double> project_to_simplex(std::span<const double> y) {
  std::vector<double> u(y.begin(), y.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0;
  double tau = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    css += u[k];
    const double t = (css - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) tau = t;
  }
  std::vector<double> x(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) x[i] = std::max(y[i] - tau, 0.0);
  return x;
}

/// Objective over the simplex. `gradient` may be left empty, in which case
/// central differences are used.
struct SimplexObjective {
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
};

struct SimplexMinOptions {
  /// Stop when ||P(x - grad f(x)) - x||_inf falls below this.
  double tolerance = 1e-12;
  std::size_t max_iterations = 100000;
};

/// Numeric minimizer used as an independent oracle for the closed-form
/// distributions. Spectral projected gradient (Barzilai-Borwein steps with a
/// non-monotone Armijo search) from the uniform point. Iterates stay in the
/// relative interior whenever the objective is infinite on the boundary.
inline SimplexDistribution brute_force_simplex_min(const SimplexObjective& objective, std::size_t dim,
                                                   SimplexMinOptions opts = {}) {
  if (dim == 0 || dim > 64) throw DataError("brute-force oracle supports 1..64 coordinates");
  const auto grad = [&](std::span<const double> x, std::span<double> g) {
    if (objective.gradient) {
      objective.gradient(x, g);
      return;
    }
    std::vector<double> xp(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double h = 1e-7 * std::max(1.0, std::abs(x[i]));
      xp[i] = x[i] + h;
      const double fp = objective.value(xp);
      xp[i] = x[i] - h;
      const double fm = objective.value(xp);
      xp[i] = x[i];
      g[i] = (fp - fm) / (2.0 * h);
    }
  };
  const auto pg_norm = [](std::span<const double> x, std::span<const double> g) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - g[i];
    const auto p = project_to_simplex(y);
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(p[i] - x[i]));
    return m;
  };

  std::vector<double> x(dim, 1.0 / static_cast<double>(dim));
  std::vector<double> g(dim), g_new(dim), trial(dim), dir(dim), y(dim);
  double f = objective.value(x);
  grad(x, g);
  std::deque<double> history{f};
  constexpr std::size_t kMemory = 10;
  constexpr double kArmijo = 1e-4;
  double step = 1.0;
  {
    const double pg = pg_norm(x, g);
    if (pg > 0.0) step = std::clamp(1.0 / pg, 1e-30, 1e30);
  }

  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    if (pg_norm(x, g) <= opts.tolerance) return SimplexDistribution::from_weights(x);
    for (std::size_t i = 0; i < dim; ++i) y[i] = x[i] - step * g[i];
    const auto proj = project_to_simplex(y);
    double slope = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      dir[i] = proj[i] - x[i];
      slope += g[i] * dir[i];
    }
    if (slope >= 0.0) return SimplexDistribution::from_weights(x);  // no descent direction left
    const double f_ref = *std::max_element(history.begin(), history.end());
    double t = 1.0;
    double f_trial = 0.0;
    for (int ls = 0;; ++ls) {
      for (std::size_t i = 0; i < dim; ++i) trial[i] = x[i] + t * dir[i];
      f_trial = objective.value(trial);
      if (std::isfinite(f_trial) && f_trial <= f_ref + kArmijo * t * slope) break;
      t *= 0.5;
      if (ls > 200) return SimplexDistribution::from_weights(x);  // step underflow: stationary to precision
    }
    grad(trial, g_new);
    double ss = 0.0;
    double sy = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double s = trial[i] - x[i];
      ss += s * s;
      sy += s * (g_new[i] - g[i]);
    }
    step = sy > 0.0 ? std::clamp(ss / sy, 1e-30, 1e30) : 1e30;
    x.swap(trial);
    g.swap(g_new);
    f = f_trial;
    history.push_back(f);
    if (history.size() > kMemory) history.pop_front();
  }
  throw OracleFailure("simplex minimizer did not converge within the iteration cap");
}

/// sum_i d(i) / p(i) + nu * sum_i 1 / p(i), with its gradient.
inline SimplexObjective inverse_weighted_objective(std::vector<double> d, double nu = 0.0) {
  auto shared = std::make_shared<std::vector<double>>(std::move(d));
  SimplexObjective obj;
  obj.value = [shared, nu](std::span<const double> p) {
    double f = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double c = (*shared)[i] + nu;
      if (c == 0.0) continue;
      if (!(p[i] > 0.0)) return std::numeric_limits<double>::infinity();
      f += c / p[i];
    }
    return f;
  };
  obj.gradient = [shared, nu](std::span<const double> p, std::span<double> g) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double c = (*shared)[i] + nu;
      g[i] = c == 0.0 ? 0.0 : -c / (p[i] * p[i]);
    }
  };
  return obj;
}

}  // namespace aes
