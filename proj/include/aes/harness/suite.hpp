#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "aes/error.hpp"
#include "aes/format.hpp"
#include "aes/harness/config.hpp"
#include "aes/harness/metrics.hpp"
#include "aes/harness/studies.hpp"
#include "aes/regret.hpp"
#include "aes/rng.hpp"
#include "aes/toy_rl/environment.hpp"
#include "aes/toy_rl/trainer.hpp"

#ifndef AES_VERSION
#define AES_VERSION "0.0.0"
#endif

namespace aes::harness {

inline constexpr std::string_view kCodeVersion = AES_VERSION;
inline constexpr int kManifestVersion = 1;

inline toy_rl::Environment make_environment(std::string_view name) {
  if (name == "gridworld4x4") return toy_rl::Environment::gridworld4x4();
  if (name == "chain5") return toy_rl::Environment::chain(5);
  if (name == "two_state_bandit") return toy_rl::Environment::two_state_bandit();
  throw ConfigError("unknown environment '" + std::string(name) + "'");
}

/// Writes through a temporary file so a crash never leaves a truncated artifact.
inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + tmp.string());
    os << content;
    if (!os) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Runs `count` jobs on at most `workers` threads. Jobs must not share mutable state.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) job(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct CellStatus {
  std::string id;
  std::string path;  // relative to the run directory
  bool ok = false;
  std::string error;
};

struct SuiteResult {
  std::filesystem::path run_dir;
  std::vector<CellStatus> cells;
  std::vector<std::string> aggregates;  // relative paths
  std::string aggregate_error;          // empty when aggregation succeeded
  [[nodiscard]] std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const CellStatus& c) { return !c.ok; }));
  }
  [[nodiscard]] int exit_code() const { return failures() == 0 && aggregate_error.empty() ? 0 : 1; }
};

namespace detail {

struct Cell {
  std::string id;
  std::string path;
  std::function<std::string()> run;  // returns the artifact text
};

inline std::string seed_file(std::uint64_t seed) { return "seed-" + std::to_string(seed) + ".csv"; }

struct Variant {
  std::string name;
  ExperimentSpec spec;
};

inline std::vector<Variant> variants(const ExperimentSpec& spec) {
  std::vector<Variant> out;
  if (spec.sweep.empty()) {
    ExperimentSpec base = spec;
    out.push_back({"base", base});
    return out;
  }
  for (const SweepVariant& v : spec.sweep) out.push_back({v.name, apply_variant(spec, v)});
  return out;
}

inline std::string regret_csv(const RegretLedger& l) {
  std::ostringstream os;
  os << "# schema=aes-regret/1\n";
  write_ledger_csv(os, std::span<const RegretLedger>(&l, 1));
  return os.str();
}

inline constexpr std::string_view kVarianceCsvHeader =
    "seed,d_min,d_max,empirical_uniform,empirical_learned,analytic_uniform,analytic_learned";

inline std::string variance_csv(const VarianceStudyResult& r) {
  std::ostringstream os;
  os << "# schema=aes-variance/1\n" << kVarianceCsvHeader << '\n';
  os << r.seed << ',' << format_real(r.d_min) << ',' << format_real(r.d_max) << ','
     << format_real(r.empirical_uniform) << ',' << format_real(r.empirical_learned) << ','
     << format_real(r.analytic_uniform) << ',' << format_real(r.analytic_learned) << '\n';
  return os.str();
}

inline std::string bench_csv(const std::vector<BenchResult>& rows) {
  std::ostringstream os;
  os << "# schema=aes-bench/1\n" << kBenchCsvHeader << '\n';
  for (const BenchResult& b : rows) {
    os << b.operation << ',' << b.capacity << ',' << b.operations << ',' << format_real(b.seconds) << ','
       << format_real(b.ops_per_second()) << '\n';
  }
  return os.str();
}

}  // namespace detail

/// Trace CSV text of one toy-RL cell.
inline std::string trace_csv(const toy_rl::TrainingTrace& trace) {
  std::ostringstream os;
  toy_rl::write_trace_csv(os, trace);
  return os.str();
}

/// Runs every cell of the spec under `spec.output_dir / spec.name`, then
/// writes the family's aggregate CSV and manifest.json. A failed cell leaves
/// "<artifact>.FAILED" holding the error and makes the exit code nonzero;
/// other cells still run. Artifacts depend only on the spec, so reruns
/// reproduce them byte for byte (bench timings aside).
inline SuiteResult run_suite(const ExperimentSpec& spec) {
  spec.validate();
  namespace fs = std::filesystem;
  SuiteResult result;
  result.run_dir = fs::path(spec.output_dir) / spec.name;
  const auto vars = detail::variants(spec);

  std::vector<detail::Cell> cells;
  // Per-family results, indexed by cell.
  std::vector<std::optional<toy_rl::TrainingTrace>> traces;
  std::vector<std::optional<RegretLedger>> ledgers;
  std::vector<std::optional<VarianceStudyResult>> variance;
  std::vector<std::optional<std::vector<BenchResult>>> bench;
  struct Key {
    std::string variant, a, b;
    std::uint64_t seed;
  };
  std::vector<Key> keys;

  for (const auto& v : vars) {
    const ExperimentSpec& s = v.spec;
    switch (spec.family) {
      case Family::rl_comparison:
        for (const auto& env : s.envs) {
          for (auto mode : s.modes) {
            for (auto seed : s.seeds) {
              const std::size_t idx = cells.size();
              const std::string rel = "traces/" + v.name + "/" + env + "/" + std::string(toy_rl::to_string(mode)) + "/" +
                                      detail::seed_file(seed);
              cells.push_back({v.name + "/" + env + "/" + std::string(toy_rl::to_string(mode)) + "/seed-" +
                                   std::to_string(seed),
                               rel, [&s, &traces, idx, env, mode, seed] {
                                 const auto environment = make_environment(env);
                                 traces[idx] = toy_rl::train(environment, s.training_config(mode, seed));
                                 return trace_csv(*traces[idx]);
                               }});
              keys.push_back({v.name, env, std::string(toy_rl::to_string(mode)), seed});
            }
          }
        }
        break;
      case Family::regret_synthetic:
        for (auto horizon : s.regret.horizons) {
          for (auto seed : s.seeds) {
            const std::size_t idx = cells.size();
            cells.push_back({v.name + "/T" + std::to_string(horizon) + "/seed-" + std::to_string(seed),
                             "ledgers/" + v.name + "/T" + std::to_string(horizon) + "/" + detail::seed_file(seed),
                             [&s, &ledgers, idx, horizon, seed] {
                               ledgers[idx] = run_regret_cell(s.regret_config(), horizon, seed);
                               return detail::regret_csv(*ledgers[idx]);
                             }});
            keys.push_back({v.name, std::to_string(horizon), "", seed});
          }
        }
        break;
      case Family::variance_study:
        for (auto seed : s.seeds) {
          const std::size_t idx = cells.size();
          cells.push_back({v.name + "/seed-" + std::to_string(seed), "variance/" + v.name + "/" + detail::seed_file(seed),
                           [&s, &variance, idx, seed] {
                             variance[idx] = run_variance_cell(s.variance, seed);
                             return detail::variance_csv(*variance[idx]);
                           }});
          keys.push_back({v.name, "", "", seed});
        }
        break;
      case Family::bench:
        for (auto seed : s.seeds) {
          const std::size_t idx = cells.size();
          cells.push_back({v.name + "/seed-" + std::to_string(seed), "bench/" + v.name + "/" + detail::seed_file(seed),
                           [&s, &bench, idx, seed] {
                             bench[idx] = run_bench(s.bench, seed);
                             return detail::bench_csv(*bench[idx]);
                           }});
          keys.push_back({v.name, "", "", seed});
        }
        break;
    }
  }
  traces.resize(cells.size());
  ledgers.resize(cells.size());
  variance.resize(cells.size());
  bench.resize(cells.size());
  result.cells.resize(cells.size());

  parallel_for(cells.size(), spec.workers, [&](std::size_t i) {
    CellStatus& st = result.cells[i];
    st.id = cells[i].id;
    st.path = cells[i].path;
    const fs::path target = result.run_dir / cells[i].path;
    const fs::path marker = fs::path(target.string() + ".FAILED");
    try {
      write_file(target, cells[i].run());
      std::error_code ec;
      fs::remove(marker, ec);
      st.ok = true;
    } catch (const std::exception& e) {
      st.error = e.what();
      try {
        write_file(marker, st.error + "\n");
      } catch (const std::exception&) {
      }
    }
  });

  // Aggregation, after all cells.
  std::ostringstream agg;
  std::string agg_name = spec.family == Family::rl_comparison      ? "metrics.csv"
                         : spec.family == Family::regret_synthetic ? "regret_summary.csv"
                         : spec.family == Family::variance_study   ? "variance_summary.csv"
                                                                   : "bench_summary.csv";
  try {
    switch (spec.family) {
      case Family::rl_comparison: {
        std::map<std::tuple<std::string, std::string, std::string>, std::vector<ScoreSeries>> groups;
        std::vector<std::tuple<std::string, std::string, std::string>> order;
        for (std::size_t i = 0; i < cells.size(); ++i) {
          if (!traces[i]) continue;
          const auto key = std::make_tuple(keys[i].variant, keys[i].a, keys[i].b);
          if (!groups.count(key)) order.push_back(key);
          ScoreSeries ser;
          ser.seed = keys[i].seed;
          for (const auto& r : traces[i]->rows) {
            ser.steps.push_back(static_cast<double>(r.step));
            ser.scores.push_back(r.episodic_test_return);
          }
          groups[key].push_back(std::move(ser));
        }
        std::vector<MetricsRecord> records;
        for (const auto& key : order) {
          const auto& s = std::find_if(vars.begin(), vars.end(), [&](const auto& v) { return v.name == std::get<0>(key); })
                              ->spec;
          records.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), compute_metrics(groups[key], s.metrics)});
        }
        write_metrics_csv(agg, records);
        break;
      }
      case Family::regret_synthetic: {
        agg << "# schema=aes-regret-summary/1\n"
            << "variant,horizon,seeds,mean_regret_static,mean_regret_dynamic,mean_regret_static_per_step,"
               "mean_regret_dynamic_per_step,loglog_slope_static,loglog_slope_dynamic\n";
        for (const auto& v : vars) {
          std::vector<double> hs, rs, rd;
          std::vector<std::size_t> counts;
          for (auto h : v.spec.regret.horizons) {
            double s = 0.0, d = 0.0;
            std::size_t n = 0;
            for (std::size_t i = 0; i < cells.size(); ++i) {
              if (!ledgers[i] || keys[i].variant != v.name || keys[i].a != std::to_string(h)) continue;
              s += ledgers[i]->cumulative_static();
              d += ledgers[i]->cumulative_dynamic();
              ++n;
            }
            hs.push_back(static_cast<double>(h));
            rs.push_back(n ? s / static_cast<double>(n) : 0.0);
            rd.push_back(n ? d / static_cast<double>(n) : 0.0);
            counts.push_back(n);
          }
          const auto slope = [&](const std::vector<double>& y) {
            if (hs.size() < 2) return std::string("nan");
            for (double x : y) {
              if (!(x > 0.0)) return std::string("nan");
            }
            return format_real(loglog_slope(hs, y));
          };
          const std::string ss = slope(rs), sd = slope(rd);
          for (std::size_t k = 0; k < hs.size(); ++k) {
            agg << v.name << ',' << static_cast<std::uint64_t>(hs[k]) << ',' << counts[k] << ',' << format_real(rs[k]) << ','
                << format_real(rd[k]) << ',' << format_real(rs[k] / hs[k]) << ',' << format_real(rd[k] / hs[k]) << ','
                << ss << ',' << sd << '\n';
          }
        }
        break;
      }
      case Family::variance_study: {
        agg << "# schema=aes-variance-summary/1\nvariant,cells,learned_not_worse,fraction\n";
        for (const auto& v : vars) {
          std::size_t n = 0, wins = 0;
          for (std::size_t i = 0; i < cells.size(); ++i) {
            if (!variance[i] || keys[i].variant != v.name) continue;
            ++n;
            wins += variance[i]->empirical_learned <= variance[i]->empirical_uniform;
          }
          agg << v.name << ',' << n << ',' << wins << ','
              << format_real(n ? static_cast<double>(wins) / static_cast<double>(n) : 0.0) << '\n';
        }
        break;
      }
      case Family::bench: {
        agg << "# schema=aes-bench-summary/1\nvariant,seed," << kBenchCsvHeader << '\n';
        for (std::size_t i = 0; i < cells.size(); ++i) {
          if (!bench[i]) continue;
          for (const BenchResult& b : *bench[i]) {
            agg << keys[i].variant << ',' << keys[i].seed << ',' << b.operation << ',' << b.capacity << ','
                << b.operations << ',' << format_real(b.seconds) << ',' << format_real(b.ops_per_second()) << '\n';
          }
        }
        break;
      }
    }
    write_file(result.run_dir / agg_name, agg.str());
    std::error_code ec;
    fs::remove(result.run_dir / (agg_name + ".FAILED"), ec);
    result.aggregates.push_back(agg_name);
  } catch (const std::exception& e) {
    result.aggregate_error = e.what();
    write_file(result.run_dir / (agg_name + ".FAILED"), result.aggregate_error + "\n");
  }

  nlohmann::ordered_json manifest;
  manifest["format"] = "aes-manifest";
  manifest["version"] = kManifestVersion;
  manifest["code_version"] = kCodeVersion;
  manifest["generator"] = kGeneratorId;
  manifest["family"] = to_string(spec.family);
  manifest["name"] = spec.name;
  manifest["seeds"] = spec.seeds;
  auto& config = manifest["config"] = nlohmann::ordered_json::object();
  std::istringstream lines(describe(spec));
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    const std::string key = line.substr(0, eq);
    // Where and how wide a run executes does not change its artifacts.
    if (key == "experiment.output_dir" || key == "experiment.workers") continue;
    config[key] = line.substr(eq + 1);
  }
  manifest["aggregate"] = agg_name;
  auto& list = manifest["cells"] = nlohmann::ordered_json::array();
  for (const CellStatus& c : result.cells) {
    nlohmann::ordered_json e;
    e["id"] = c.id;
    e["path"] = c.path;
    e["status"] = c.ok ? "ok" : "failed";
    if (!c.ok) e["error"] = c.error;
    list.push_back(std::move(e));
  }
  manifest["failed"] = result.failures();
  if (!result.aggregate_error.empty()) manifest["aggregate_error"] = result.aggregate_error;
  write_file(result.run_dir / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

}  // namespace aes::harness
