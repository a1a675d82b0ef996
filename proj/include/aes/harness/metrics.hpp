#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "aes/error.hpp"
#include "aes/format.hpp"

namespace aes::harness {

/// Evaluation scores of one run. `steps` must be strictly increasing.
struct ScoreSeries {
  std::uint64_t seed = 0;
  std::vector<double> steps;
  std::vector<double> scores;
};

struct MetricsRow {
  double learning_speed = 0.0;
  double max_score = 0.0;
  double learning_stability = 0.0;
  double robustness = 0.0;
  double final_performance = 0.0;
  std::size_t seeds = 0;
};

struct MetricsOptions {
  std::size_t window = 10;       // trailing moving average width, in evaluation points
  double search_fraction = 0.6;  // the maximum is searched over this trailing share of points
  double tail_fraction = 0.2;    // stability and robustness average over this trailing share
};

/// Trailing moving average; the first points average over what is available.
inline std::vector<double> moving_average(std::span<const double> x, std::size_t window) {
  if (window == 0) throw ConfigError("window must be positive");
  std::vector<double> out(x.size());
  double run = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    run += x[i];
    if (i >= window) run -= x[i - window];
    out[i] = run / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

/// Metrics over one or more runs sharing the same evaluation steps.
///
/// The smoothed curve is the moving average of the across-run mean score.
/// max_score is its largest value over the trailing search window and
/// learning_speed divides it by the step where it is first attained.
/// learning_stability is the mean of the smoothed curve over the tail divided
/// by max_score. robustness is the mean, over tail points, of the across-run
/// sample standard deviation of the smoothed per-run curves (0 for one run).
/// final_performance is the mean of the last raw score.
inline MetricsRow compute_metrics(std::span<const ScoreSeries> runs, const MetricsOptions& opt = {}) {
  if (runs.empty()) throw DataError("no traces");
  const std::size_t n = runs.front().scores.size();
  if (n == 0) throw DataError("empty trace");
  if (n < opt.window) throw DataError("trace shorter than the smoothing window");
  for (const ScoreSeries& r : runs) {
    if (r.scores.size() != n || r.steps.size() != n) throw DataError("traces differ in length");
    for (std::size_t k = 0; k < n; ++k) {
      if (r.steps[k] != runs.front().steps[k]) throw DataError("traces differ in evaluation steps");
      if (k > 0 && !(r.steps[k] > r.steps[k - 1])) throw DataError("evaluation steps must increase");
    }
  }
  const auto& steps = runs.front().steps;
  const double m = static_cast<double>(runs.size());

  std::vector<std::vector<double>> smooth;
  smooth.reserve(runs.size());
  std::vector<double> mean(n, 0.0);
  for (const ScoreSeries& r : runs) {
    smooth.push_back(moving_average(r.scores, opt.window));
    for (std::size_t k = 0; k < n; ++k) mean[k] += r.scores[k] / m;
  }
  const std::vector<double> curve = moving_average(mean, opt.window);

  const auto first_of_tail = [n](double fraction) {
    const auto len = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    return n - std::clamp<std::size_t>(len, 1, n);
  };
  const std::size_t search = first_of_tail(opt.search_fraction);
  const std::size_t tail = first_of_tail(opt.tail_fraction);

  MetricsRow row;
  row.seeds = runs.size();
  std::size_t best = search;
  for (std::size_t k = search; k < n; ++k) {
    if (curve[k] > curve[best]) best = k;
  }
  row.max_score = curve[best];
  if (!(steps[best] > 0.0)) throw DataError("learning speed needs a positive step at the maximum");
  row.learning_speed = row.max_score / steps[best];

  double tail_mean = 0.0;
  double tail_sd = 0.0;
  for (std::size_t k = tail; k < n; ++k) {
    tail_mean += curve[k];
    if (runs.size() > 1) {
      double mu = 0.0;
      for (const auto& s : smooth) mu += s[k] / m;
      double ss = 0.0;
      for (const auto& s : smooth) ss += (s[k] - mu) * (s[k] - mu);
      tail_sd += std::sqrt(ss / (m - 1.0));
    }
  }
  const double tail_len = static_cast<double>(n - tail);
  tail_mean /= tail_len;
  row.robustness = tail_sd / tail_len;
  row.learning_stability = row.max_score != 0.0 ? tail_mean / row.max_score : 0.0;

  for (const ScoreSeries& r : runs) row.final_performance += r.scores.back() / m;
  return row;
}

inline constexpr std::string_view kMetricsSchema = "aes-metrics/1";
inline constexpr std::string_view kMetricsCsvHeader =
    "group,env,mode,seeds,learning_speed,max_score,learning_stability,robustness,final_performance";

struct MetricsRecord {
  std::string group;
  std::string env;
  std::string mode;
  MetricsRow row;
};

inline void write_metrics_csv(std::ostream& os, std::span<const MetricsRecord> records) {
  os << "# schema=" << kMetricsSchema << '\n' << kMetricsCsvHeader << '\n';
  for (const MetricsRecord& r : records) {
    os << r.group << ',' << r.env << ',' << r.mode << ',' << r.row.seeds << ',' << format_real(r.row.learning_speed)
       << ',' << format_real(r.row.max_score) << ',' << format_real(r.row.learning_stability) << ','
       << format_real(r.row.robustness) << ',' << format_real(r.row.final_performance) << '\n';
  }
}

/// A trace CSV as read back from disk.
struct ParsedTrace {
  std::map<std::string, std::string> meta;  // from "# key=value" lines
  std::string env;
  std::string mode;
  ScoreSeries series;
};

/// Reads a trace CSV (header "seed,mode,env,step,episodic_test_return,...").
inline ParsedTrace read_trace_csv(std::istream& is) {
  ParsedTrace out;
  std::string line;
  bool header = false;
  std::vector<std::string> cols;
  const auto split = [](const std::string& s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    for (std::string c; std::getline(ss, c, ',');) f.push_back(c);
    return f;
  };
  std::size_t c_seed = 0, c_mode = 0, c_env = 0, c_step = 0, c_ret = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto body = line.substr(line.find_first_not_of("# "));
      const auto eq = body.find('=');
      if (eq != std::string::npos) out.meta[body.substr(0, eq)] = body.substr(eq + 1);
      continue;
    }
    if (!header) {
      cols = split(line);
      const auto find = [&](const char* name) {
        const auto it = std::find(cols.begin(), cols.end(), name);
        if (it == cols.end()) throw DataError(std::string("trace header lacks column '") + name + "'");
        return static_cast<std::size_t>(it - cols.begin());
      };
      c_seed = find("seed");
      c_mode = find("mode");
      c_env = find("env");
      c_step = find("step");
      c_ret = find("episodic_test_return");
      header = true;
      continue;
    }
    const auto f = split(line);
    if (f.size() != cols.size()) throw DataError("trace row has " + std::to_string(f.size()) + " fields");
    try {
      out.series.seed = std::stoull(f[c_seed]);
      out.mode = f[c_mode];
      out.env = f[c_env];
      out.series.steps.push_back(std::stod(f[c_step]));
      out.series.scores.push_back(std::stod(f[c_ret]));
    } catch (const std::logic_error&) {
      throw DataError("malformed trace row: " + line);
    }
  }
  if (!header) throw DataError("trace has no header");
  return out;
}

}  // namespace aes::harness
