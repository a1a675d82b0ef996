#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aes/harness/config.hpp"
#include "aes/harness/metrics.hpp"
#include "aes/harness/studies.hpp"
#include "aes/harness/suite.hpp"
#include "aes/verify.hpp"

namespace {

constexpr const char* kOutputEnv = "AES_OUTPUT_ROOT";

std::string key_table() {
  std::ostringstream os;
  os << "Config keys (INI sections, key = value, lists comma-separated):\n";
  const aes::harness::ExperimentSpec defaults;
  for (const auto& k : aes::harness::setting_keys()) {
    os << "  " << k.name << " = " << k.get(defaults) << "\n      " << k.help << "\n";
  }
  os << "  [sweep] <variant> = section.key=value; section.key=value\n"
        "      one output group per variant; without [sweep] a single group 'base'\n";
  return os.str();
}

/// --out wins, then $AES_OUTPUT_ROOT, then the fallback.
std::string output_root(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
  return fallback;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  aes::harness::ExperimentSpec tmp;
  aes::harness::apply_setting(tmp, "experiment.seeds", text);
  return tmp.seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive experience selection: experiments, checks and benchmarks"};
  app.require_subcommand(1);
  app.footer(std::string("Environment:\n  ") + kOutputEnv +
             "  output root used when --out is not given (overrides experiment.output_dir)\n");

  std::string seed_list, out;
  std::size_t workers = 0;

  auto* run = app.add_subcommand("run", "Run every cell of an experiment config and write CSV artifacts");
  std::string spec_path;
  run->add_option("spec", spec_path, "Experiment config file (INI)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed-list", seed_list, "Comma-separated seeds, replacing experiment.seeds");
  run->add_option("--out", out, "Output root, replacing experiment.output_dir");
  run->add_option("--workers", workers, "Parallel cells, replacing experiment.workers")->check(CLI::PositiveNumber);
  run->footer(key_table() +
              "\nArtifacts go to <output root>/<experiment.name>/: per-cell CSVs, an aggregate CSV,\n"
              "manifest.json, and <file>.FAILED markers for cells that raised.\n");

  auto* verify = app.add_subcommand("verify", "Run the acceptance checks, one pass/fail line each");
  std::size_t verify_capacity = 1'000'000;
  std::vector<int> only;
  verify->add_option("--out", out, "Scratch directory for suite reruns");
  verify->add_option("--bench-capacity", verify_capacity, "Store size for the throughput check");
  verify->add_option("--only", only, "Run only these criterion numbers");

  auto* bench = app.add_subcommand("bench", "Time store operations (fill, sample+update, overwrite, rebuild)");
  aes::harness::BenchConfig bench_cfg;
  bench->add_option("--capacity", bench_cfg.capacity, "Store size")->check(CLI::PositiveNumber);
  bench->add_option("--operations", bench_cfg.operations, "Timed sample+update operations")->check(CLI::PositiveNumber);
  bench->add_option("--batch", bench_cfg.batch, "Draws per operation")->check(CLI::PositiveNumber);
  bench->add_option("--seed-list", seed_list, "Comma-separated seeds, one timing run each (default 1)");
  bench->add_option("--out", out, "Write the CSV to this file instead of stdout");

  auto* metrics = app.add_subcommand("metrics", "Learning speed, stability, robustness and final score of traces");
  std::vector<std::string> trace_paths;
  std::size_t window = 10;
  metrics->add_option("trace", trace_paths, "Trace CSV files; runs are grouped by (env, mode)")
      ->required()
      ->check(CLI::ExistingFile);
  metrics->add_option("--window", window, "Moving-average width in evaluation points")->check(CLI::PositiveNumber);
  metrics->add_option("--out", out, "Write the CSV to this file instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      std::ifstream is(spec_path);
      auto spec = aes::harness::parse_config(is);
      if (!seed_list.empty()) spec.seeds = parse_seeds(seed_list);
      if (workers > 0) spec.workers = workers;
      spec.output_dir = output_root(out, spec.output_dir);
      spec.validate();
      const auto result = aes::harness::run_suite(spec);
      std::cout << result.cells.size() << " cells, " << result.failures() << " failed; artifacts in "
                << result.run_dir.string() << "\n";
      for (const auto& c : result.cells) {
        if (!c.ok) std::cerr << "FAILED " << c.id << ": " << c.error << "\n";
      }
      if (!result.aggregate_error.empty()) std::cerr << "aggregate failed: " << result.aggregate_error << "\n";
      return result.exit_code();
    }
    if (*verify) {
      const std::filesystem::path scratch =
          std::filesystem::path(output_root(out, (std::filesystem::temp_directory_path() / "aes-verify").string()));
      std::filesystem::create_directories(scratch);
      auto list = aes::verify::criteria(scratch, verify_capacity);
      if (!only.empty()) {
        std::erase_if(list, [&](const auto& c) { return std::find(only.begin(), only.end(), c.id) == only.end(); });
      }
      const auto results = aes::verify::run_all(list, std::cout);
      std::size_t passed = 0;
      for (const auto& r : results) passed += r.passed;
      std::cout << passed << "/" << results.size() << " criteria passed\n";
      return passed == results.size() ? 0 : 1;
    }
    if (*bench) {
      const auto seeds = seed_list.empty() ? std::vector<std::uint64_t>{1} : parse_seeds(seed_list);
      std::ostringstream os;
      os << "seed," << aes::harness::kBenchCsvHeader << '\n';
      for (auto seed : seeds) {
        for (const auto& b : aes::harness::run_bench(bench_cfg, seed)) {
          os << seed << ',' << b.operation << ',' << b.capacity << ',' << b.operations << ','
             << aes::format_real(b.seconds) << ',' << aes::format_real(b.ops_per_second()) << '\n';
        }
      }
      if (out.empty()) {
        std::cout << os.str();
      } else {
        aes::harness::write_file(out, os.str());
      }
      return 0;
    }
    if (*metrics) {
      std::map<std::pair<std::string, std::string>, std::vector<aes::harness::ScoreSeries>> groups;
      std::vector<std::pair<std::string, std::string>> order;
      for (const auto& path : trace_paths) {
        std::ifstream is(path);
        auto t = aes::harness::read_trace_csv(is);
        const auto key = std::make_pair(t.env, t.mode);
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(std::move(t.series));
      }
      std::vector<aes::harness::MetricsRecord> records;
      aes::harness::MetricsOptions opt;
      opt.window = window;
      for (const auto& key : order) {
        records.push_back({"cli", key.first, key.second, aes::harness::compute_metrics(groups[key], opt)});
      }
      std::ostringstream os;
      aes::harness::write_metrics_csv(os, records);
      if (out.empty()) {
        std::cout << os.str();
      } else {
        aes::harness::write_file(out, os.str());
      }
      return 0;
    }
  } catch (const aes::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
