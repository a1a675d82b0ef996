#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "aes/error.hpp"
#include "aes/format.hpp"
#include "aes/harness/metrics.hpp"
#include "aes/harness/studies.hpp"
#include "aes/simplex_sampler.hpp"
#include "aes/toy_rl/trainer.hpp"

namespace aes::harness {

enum class Family { regret_synthetic, rl_comparison, variance_study, bench };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::regret_synthetic: return "regret_synthetic";
    case Family::rl_comparison: return "rl_comparison";
    case Family::variance_study: return "variance_study";
    case Family::bench: return "bench";
  }
  return "?";
}

struct SweepVariant {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;
};

/// Everything a suite run needs. Defaults are the documented defaults of
/// every key; see `setting_keys()` for the schema.
struct ExperimentSpec {
  Family family = Family::rl_comparison;
  std::string name = "experiment";
  std::vector<std::uint64_t> seeds{2, 20, 200, 2000, 20000};
  std::string output_dir = "aes-out";
  std::size_t workers = 1;

  SamplerConfig sampler{.buffer_capacity = 1, .nu = 1000.0, .kappa = 0.1, .reset_period = 1000};
  double rho = 0.9;
  double rho_start = 0.8;
  double rho_end = 0.2;
  std::uint64_t anneal_steps = 1'000'000;
  std::string reset_mode = "hard";

  toy_rl::TrainingConfig training;
  std::vector<std::string> envs{"gridworld4x4", "chain5"};
  std::vector<toy_rl::SelectionMode> modes{toy_rl::SelectionMode::uniform, toy_rl::SelectionMode::td_priority,
                                           toy_rl::SelectionMode::aes_naive, toy_rl::SelectionMode::aes};
  RegretStudyConfig regret;
  VarianceStudyConfig variance;
  BenchConfig bench{.capacity = 1'000'000, .operations = 1'000'000, .batch = 1};
  MetricsOptions metrics;
  std::vector<SweepVariant> sweep;

  /// Sampler config with the reset mode assembled from the flat keys.
  [[nodiscard]] SamplerConfig sampler_config() const {
    SamplerConfig c = sampler;
    if (reset_mode == "hard") {
      c.reset_mode = HardReset{};
    } else if (reset_mode == "soft") {
      c.reset_mode = SoftReset{rho};
    } else {
      c.reset_mode = AnnealedSoftReset{rho_start, rho_end, anneal_steps};
    }
    return c;
  }

  [[nodiscard]] toy_rl::TrainingConfig training_config(toy_rl::SelectionMode mode, std::uint64_t seed) const {
    toy_rl::TrainingConfig c = training;
    c.sampler = sampler_config();
    c.mode = mode;
    c.seed = seed;
    return c;
  }

  [[nodiscard]] RegretStudyConfig regret_config() const {
    RegretStudyConfig c = regret;
    c.sampler = sampler_config();
    return c;
  }

  void validate() const;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

inline std::string format_double(double v) { return format_real(v); }

[[noreturn]] inline void bad_value(std::string_view key, std::string_view value, std::string_view why) {
  throw ConfigError(std::string(key) + ": '" + std::string(value) + "' " + std::string(why));
}

inline double parse_double(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  if (v == "inf") return std::numeric_limits<double>::infinity();
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, text, "is not a number");
  }
  return out;
}

inline std::uint64_t parse_uint(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, text, "is not a non-negative integer");
  return out;
}

inline double in_range(std::string_view key, std::string_view text, double lo, double hi, bool lo_open = false) {
  const double v = parse_double(key, text);
  if (v < lo || v > hi || (lo_open && v == lo)) {
    bad_value(key, text, "is outside " + std::string(lo_open ? "(" : "[") + format_double(lo) + ", " +
                             format_double(hi) + "]");
  }
  return v;
}

inline std::uint64_t at_least(std::string_view key, std::string_view text, std::uint64_t lo) {
  const std::uint64_t v = parse_uint(key, text);
  if (v < lo) bad_value(key, text, "must be at least " + std::to_string(lo));
  return v;
}

template <class T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += f(xs[i]);
  }
  return out;
}

inline std::string pick(std::string_view key, std::string_view text, std::initializer_list<std::string_view> allowed) {
  const std::string v = trim(text);
  for (auto a : allowed) {
    if (v == a) return v;
  }
  std::string list;
  for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
  bad_value(key, text, "is not one of {" + list + "}");
}

}  // namespace detail

/// One documented key: dotted name, default shown by `aes --help`, setter and getter.
struct SettingKey {
  std::string name;
  std::string help;
  std::function<void(ExperimentSpec&, std::string_view)> set;
  std::function<std::string(const ExperimentSpec&)> get;
};

inline const std::vector<SettingKey>& setting_keys() {
  using namespace detail;
  using S = ExperimentSpec;
  using toy_rl::SelectionMode;
  static const std::vector<SettingKey> keys = [] {
    std::vector<SettingKey> k;
    const auto dbl = [&k](std::string name, std::string help, auto ref, double lo, double hi,
                          bool lo_open) {
      k.push_back({name, std::move(help),
                   [=](S& s, std::string_view v) { ref(s) = in_range(name, v, lo, hi, lo_open); },
                   [=](const S& s) { return format_double(ref(const_cast<S&>(s))); }});
    };
    const auto uint = [&k](std::string name, std::string help, auto ref, std::uint64_t lo) {
      k.push_back({name, std::move(help),
                   [=](S& s, std::string_view v) { ref(s) = static_cast<std::decay_t<decltype(ref(s))>>(at_least(name, v, lo)); },
                   [=](const S& s) { return std::to_string(ref(const_cast<S&>(s))); }});
    };
    constexpr double inf = std::numeric_limits<double>::infinity();

    k.push_back({"experiment.family", "regret_synthetic | rl_comparison | variance_study | bench",
                 [](S& s, std::string_view v) {
                   const auto f = pick("experiment.family", v,
                                       {"regret_synthetic", "rl_comparison", "variance_study", "bench"});
                   s.family = f == "regret_synthetic" ? Family::regret_synthetic
                              : f == "rl_comparison"  ? Family::rl_comparison
                              : f == "variance_study" ? Family::variance_study
                                                      : Family::bench;
                 },
                 [](const S& s) { return std::string(to_string(s.family)); }});
    k.push_back({"experiment.name", "label used in output file names",
                 [](S& s, std::string_view v) {
                   const std::string t = trim(v);
                   if (t.empty() || t.find_first_of("/\\ ,") != std::string::npos) {
                     bad_value("experiment.name", v, "must be non-empty without '/', '\\', ',' or spaces");
                   }
                   s.name = t;
                 },
                 [](const S& s) { return s.name; }});
    k.push_back({"experiment.seeds", "comma-separated seed list",
                 [](S& s, std::string_view v) {
                   s.seeds.clear();
                   for (const auto& x : split_list(v)) s.seeds.push_back(parse_uint("experiment.seeds", x));
                   if (s.seeds.empty()) bad_value("experiment.seeds", v, "must list at least one seed");
                 },
                 [](const S& s) {
                   return join<std::uint64_t>(s.seeds, [](const std::uint64_t& x) { return std::to_string(x); });
                 }});
    k.push_back({"experiment.output_dir", "output root",
                 [](S& s, std::string_view v) {
                   s.output_dir = trim(v);
                   if (s.output_dir.empty()) bad_value("experiment.output_dir", v, "must not be empty");
                 },
                 [](const S& s) { return s.output_dir; }});
    uint("experiment.workers", "parallel cells", [](S& s) -> std::size_t& { return s.workers; }, 1);

    dbl("sampler.kappa", "uniform mixing weight in [0, 1]",
        [](S& s) -> double& { return s.sampler.kappa; }, 0.0, 1.0, false);
    dbl("sampler.nu", "regularizer offset, > 0", [](S& s) -> double& { return s.sampler.nu; }, 0.0, inf,
        true);
    uint("sampler.reset_period", "steps between resets (M)",
         [](S& s) -> std::uint64_t& { return s.sampler.reset_period; }, 1);
    k.push_back({"sampler.reset_mode", "hard | soft | anneal",
                 [](S& s, std::string_view v) { s.reset_mode = pick("sampler.reset_mode", v, {"hard", "soft", "anneal"}); },
                 [](const S& s) { return s.reset_mode; }});
    dbl("sampler.rho", "soft reset factor in [0, 1]", [](S& s) -> double& { return s.rho; }, 0.0, 1.0,
        false);
    dbl("sampler.rho_start", "annealed factor at step 0", [](S& s) -> double& { return s.rho_start; }, 0.0,
        1.0, false);
    dbl("sampler.rho_end", "annealed factor at anneal_steps", [](S& s) -> double& { return s.rho_end; },
        0.0, 1.0, false);
    uint("sampler.anneal_steps", "annealing length in sampler steps",
         [](S& s) -> std::uint64_t& { return s.anneal_steps; }, 1);
    dbl("sampler.feedback_bound", "G^2 used for the feedback clamp (inf disables)",
        [](S& s) -> double& { return s.sampler.feedback_bound; }, 0.0, inf, true);

    k.push_back({"training.envs", "comma list of gridworld4x4, chain5, two_state_bandit",
                 [](S& s, std::string_view v) {
                   s.envs.clear();
                   for (const auto& e : split_list(v)) {
                     s.envs.push_back(pick("training.envs", e, {"gridworld4x4", "chain5", "two_state_bandit"}));
                   }
                   if (s.envs.empty()) bad_value("training.envs", v, "must list at least one environment");
                 },
                 [](const S& s) { return join<std::string>(s.envs, [](const std::string& x) { return x; }); }});
    k.push_back({"training.modes", "comma list of uniform, td_priority, aes_naive, aes",
                 [](S& s, std::string_view v) {
                   s.modes.clear();
                   for (const auto& m : split_list(v)) {
                     s.modes.push_back(toy_rl::parse_mode(pick("training.modes", m, {"uniform", "td_priority", "aes_naive", "aes"})));
                   }
                   if (s.modes.empty()) bad_value("training.modes", v, "must list at least one mode");
                 },
                 [](const S& s) {
                   return join<SelectionMode>(s.modes, [](const SelectionMode& m) { return std::string(toy_rl::to_string(m)); });
                 }});
    uint("training.iterations", "episodes collected after warm-up",
         [](S& s) -> std::uint64_t& { return s.training.iterations; }, 1);
    uint("training.batch", "trajectories per update", [](S& s) -> std::size_t& { return s.training.batch; }, 1);
    uint("training.buffer", "buffer capacity", [](S& s) -> std::size_t& { return s.training.buffer; }, 1);
    dbl("training.learning_rate", "gradient ascent step",
        [](S& s) -> double& { return s.training.learning_rate; }, 0.0, inf, true);
    uint("training.warmup_episodes", "episodes before the first update (raised to buffer)",
         [](S& s) -> std::size_t& { return s.training.warmup_episodes; }, 0);
    uint("training.updates_per_episode", "updates per collected episode",
         [](S& s) -> std::size_t& { return s.training.updates_per_episode; }, 0);
    uint("training.eval_interval", "iterations between evaluations",
         [](S& s) -> std::uint64_t& { return s.training.eval_interval; }, 1);
    uint("training.eval_episodes", "greedy episodes per evaluation",
         [](S& s) -> std::size_t& { return s.training.eval_episodes; }, 1);
    dbl("training.logit_clip", "logit bound after each update (inf disables)",
        [](S& s) -> double& { return s.training.logit_clip; }, 0.0, inf, true);
    dbl("training.priority_exponent", "td_priority exponent",
        [](S& s) -> double& { return s.training.priority_exponent; }, 0.0, inf, false);
    dbl("training.log_ratio_cap", "cap on log importance ratios",
        [](S& s) -> double& { return s.training.log_ratio_cap; }, 0.0, inf, true);

    k.push_back({"regret.generator", "stationary | bounded_random | drifting",
                 [](S& s, std::string_view v) {
                   s.regret.generator = parse_generator(pick("regret.generator", v, {"stationary", "bounded_random", "drifting"}));
                 },
                 [](const S& s) { return std::string(to_string(s.regret.generator)); }});
    uint("regret.slots", "|B|", [](S& s) -> std::size_t& { return s.regret.slots; }, 1);
    k.push_back({"regret.horizons", "comma list of horizons T",
                 [](S& s, std::string_view v) {
                   s.regret.horizons.clear();
                   for (const auto& x : split_list(v)) s.regret.horizons.push_back(at_least("regret.horizons", x, 1));
                   if (s.regret.horizons.empty()) bad_value("regret.horizons", v, "must list at least one horizon");
                 },
                 [](const S& s) {
                   return join<std::uint64_t>(s.regret.horizons, [](const std::uint64_t& x) { return std::to_string(x); });
                 }});
    k.push_back({"regret.feedback", "full | bandit",
                 [](S& s, std::string_view v) {
                   s.regret.feedback = pick("regret.feedback", v, {"full", "bandit"}) == "full" ? FeedbackMode::full
                                                                                             : FeedbackMode::bandit;
                 },
                 [](const S& s) { return std::string(s.regret.feedback == FeedbackMode::full ? "full" : "bandit"); }});
    uint("regret.batch", "draws per step under bandit feedback", [](S& s) -> std::size_t& { return s.regret.batch; }, 1);
    k.push_back({"regret.pattern", "periodic | reinit_on_arrival",
                 [](S& s, std::string_view v) {
                   s.regret.pattern = pick("regret.pattern", v, {"periodic", "reinit_on_arrival"}) == "periodic"
                                          ? ResetPattern::periodic
                                          : ResetPattern::reinit_on_arrival;
                 },
                 [](const S& s) {
                   return std::string(s.regret.pattern == ResetPattern::periodic ? "periodic" : "reinit_on_arrival");
                 }});
    k.push_back({"regret.kappa_rule", "fixed | cube_root ((|B|/T)^(1/3))",
                 [](S& s, std::string_view v) {
                   s.regret.kappa_cube_root = pick("regret.kappa_rule", v, {"fixed", "cube_root"}) == "cube_root";
                 },
                 [](const S& s) { return std::string(s.regret.kappa_cube_root ? "cube_root" : "fixed"); }});
    dbl("regret.reset_scale", "> 0: reset period floor(sqrt(T) / scale); 0 keeps sampler.reset_period",
        [](S& s) -> double& { return s.regret.reset_scale; }, 0.0, inf, false);
    dbl("regret.low", "smallest loss level", [](S& s) -> double& { return s.regret.low; }, 0.0, inf, true);
    dbl("regret.high", "largest loss level", [](S& s) -> double& { return s.regret.high; }, 0.0, inf, true);
    dbl("regret.jitter", "relative per-step noise of drifting levels",
        [](S& s) -> double& { return s.regret.jitter; }, 0.0, 2.0, false);
    uint("regret.arrival_interval", "steps between arrivals (drifting)",
         [](S& s) -> std::uint64_t& { return s.regret.arrival_interval; }, 1);

    uint("variance.slots", "buffer size", [](S& s) -> std::size_t& { return s.variance.slots; }, 2);
    uint("variance.dim", "gradient dimension", [](S& s) -> std::size_t& { return s.variance.dim; }, 1);
    dbl("variance.decades", "orders of magnitude spanned by d",
        [](S& s) -> double& { return s.variance.decades; }, 0.0, 300.0, false);
    uint("variance.batch", "draws per estimate", [](S& s) -> std::size_t& { return s.variance.batch; }, 1);
    uint("variance.learn_steps", "bandit steps before measuring",
         [](S& s) -> std::uint64_t& { return s.variance.learn_steps; }, 0);
    uint("variance.repeats", "estimates per variance measurement",
         [](S& s) -> std::size_t& { return s.variance.repeats; }, 2);
    dbl("variance.nu", "regularizer offset", [](S& s) -> double& { return s.variance.nu; }, 0.0, inf, true);
    dbl("variance.kappa", "uniform mixing weight", [](S& s) -> double& { return s.variance.kappa; }, 0.0,
        1.0, false);

    uint("bench.capacity", "store size", [](S& s) -> std::size_t& { return s.bench.capacity; }, 1);
    uint("bench.operations", "timed sample+update operations",
         [](S& s) -> std::uint64_t& { return s.bench.operations; }, 1);
    uint("bench.batch", "draws per operation", [](S& s) -> std::size_t& { return s.bench.batch; }, 1);

    uint("metrics.window", "moving-average width in evaluation points",
         [](S& s) -> std::size_t& { return s.metrics.window; }, 1);
    return k;
  }();
  return keys;
}

/// Applies one dotted-key setting, naming the key in any error.
inline void apply_setting(ExperimentSpec& spec, std::string_view key, std::string_view value) {
  for (const SettingKey& k : setting_keys()) {
    if (k.name == key) {
      k.set(spec, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + std::string(key) + "'");
}

/// Canonical "key=value" lines for every key, in schema order.
inline std::string describe(const ExperimentSpec& spec) {
  std::string out;
  for (const SettingKey& k : setting_keys()) out += k.name + "=" + k.get(spec) + "\n";
  for (const SweepVariant& v : spec.sweep) {
    out += "sweep." + v.name + "=";
    for (std::size_t i = 0; i < v.overrides.size(); ++i) {
      out += (i ? "; " : "") + v.overrides[i].first + "=" + v.overrides[i].second;
    }
    out += "\n";
  }
  return out;
}

/// The spec with one sweep variant's overrides applied.
inline ExperimentSpec apply_variant(const ExperimentSpec& spec, const SweepVariant& v) {
  ExperimentSpec out = spec;
  out.sweep.clear();
  for (const auto& [k, val] : v.overrides) apply_setting(out, k, val);
  out.validate();
  return out;
}

inline void ExperimentSpec::validate() const {
  if (seeds.empty()) throw ConfigError("experiment.seeds must list at least one seed");
  if (workers == 0) throw ConfigError("experiment.workers must be positive");
  const SamplerConfig sc = sampler_config();
  SamplerConfig probe = sc;
  probe.buffer_capacity = 1;
  probe.validate();
  for (toy_rl::SelectionMode m : modes) training_config(m, 0).validate();
  regret_config().validate();
  variance.validate();
  if (bench.capacity == 0 || bench.operations == 0 || bench.batch == 0) throw ConfigError("bench sizes must be positive");
  if (metrics.window == 0) throw ConfigError("metrics.window must be positive");
  for (const SweepVariant& v : sweep) {
    ExperimentSpec copy = *this;
    copy.sweep.clear();
    for (const auto& [k, val] : v.overrides) apply_setting(copy, k, val);
    copy.validate();
  }
}

/// Parses the INI-style config: flat [sections] of key = value pairs, lists
/// comma-separated. A [sweep] section maps variant names to ';'-separated
/// "section.key=value" overrides. Unknown keys and out-of-range values are
/// rejected with the key named.
inline ExperimentSpec parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  ExperimentSpec spec;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' must be inside a [section]");
    if (section == "sweep") {
      for (const auto& [name, value] : body) {
        SweepVariant v;
        v.name = name;
        if (name.empty() || name.find_first_of("/\\ ,") != std::string::npos) {
          throw ConfigError("sweep." + name + ": invalid variant name");
        }
        for (const auto& item : detail::split_list(value.data(), ';')) {
          const auto eq = item.find('=');
          if (eq == std::string::npos) throw ConfigError("sweep." + name + ": override '" + item + "' lacks '='");
          v.overrides.emplace_back(detail::trim(item.substr(0, eq)), detail::trim(item.substr(eq + 1)));
        }
        spec.sweep.push_back(std::move(v));
      }
      continue;
    }
    for (const auto& [key, value] : body) apply_setting(spec, section + "." + key, value.data());
  }
  spec.validate();
  return spec;
}

inline ExperimentSpec parse_config_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

}  // namespace aes::harness
