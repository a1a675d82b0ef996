#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "aes/format.hpp"
#include "aes/harness/config.hpp"
#include "aes/harness/metrics.hpp"
#include "aes/harness/suite.hpp"

namespace aes::harness {
namespace {

namespace fs = std::filesystem;

ScoreSeries series(std::vector<double> scores, std::uint64_t seed = 0) {
  ScoreSeries s;
  s.seed = seed;
  for (std::size_t k = 0; k < scores.size(); ++k) s.steps.push_back(100.0 * static_cast<double>(k + 1));
  s.scores = std::move(scores);
  return s;
}

MetricsRow metrics_of(std::vector<ScoreSeries> runs, std::size_t window) {
  return compute_metrics(runs, MetricsOptions{.window = window});
}

TEST(Metrics, MovingAverageIsTrailing) {
  const auto m = moving_average(std::vector<double>{1, 2, 3, 4}, 2);
  EXPECT_EQ(m, (std::vector<double>{1, 1.5, 2.5, 3.5}));
}

TEST(Metrics, ConstantTrace) {
  const auto r = metrics_of({series(std::vector<double>(10, 2.0))}, 10);
  EXPECT_DOUBLE_EQ(r.max_score, 2.0);
  // The last 60% of ten points starts at the fifth, step 500.
  EXPECT_DOUBLE_EQ(r.learning_speed, 2.0 / 500.0);
  EXPECT_DOUBLE_EQ(r.learning_stability, 1.0);
  EXPECT_DOUBLE_EQ(r.robustness, 0.0);
  EXPECT_DOUBLE_EQ(r.final_performance, 2.0);
}

TEST(Metrics, PeakThenHalf) {
  const auto r = metrics_of({series({0, 0, 0, 0, 0, 4, 2, 2, 2, 2})}, 1);
  EXPECT_DOUBLE_EQ(r.max_score, 4.0);
  EXPECT_DOUBLE_EQ(r.learning_speed, 4.0 / 600.0);
  EXPECT_DOUBLE_EQ(r.learning_stability, 0.5);
  EXPECT_DOUBLE_EQ(r.final_performance, 2.0);
}

TEST(Metrics, LinearRampWithSmoothing) {
  const auto r = metrics_of({series({0, 1, 2, 3, 4, 5, 6, 7, 8, 9})}, 2);
  EXPECT_DOUBLE_EQ(r.max_score, 8.5);
  EXPECT_DOUBLE_EQ(r.learning_speed, 8.5 / 1000.0);
  EXPECT_DOUBLE_EQ(r.learning_stability, 8.0 / 8.5);
  EXPECT_DOUBLE_EQ(r.final_performance, 9.0);
}

TEST(Metrics, SpreadAcrossRuns) {
  const auto r = metrics_of({series(std::vector<double>(10, 1.0), 1), series(std::vector<double>(10, 3.0), 2)}, 1);
  EXPECT_EQ(r.seeds, 2u);
  EXPECT_DOUBLE_EQ(r.max_score, 2.0);
  EXPECT_DOUBLE_EQ(r.robustness, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(r.learning_stability, 1.0);
  EXPECT_DOUBLE_EQ(r.final_performance, 2.0);
}

TEST(Metrics, PlateauUsesFirstArgmax) {
  const auto r = metrics_of({series({0, 0, 0, 0, 3, 3, 3, 3, 3, 3})}, 1);
  EXPECT_DOUBLE_EQ(r.learning_speed, 3.0 / 500.0);
}

TEST(Metrics, RejectsBadInput) {
  EXPECT_THROW(metrics_of({}, 1), DataError);
  EXPECT_THROW(metrics_of({series({})}, 1), DataError);
  EXPECT_THROW(metrics_of({series({1, 2, 3})}, 10), DataError);
  auto backwards = series({1, 2, 3});
  backwards.steps = {300, 200, 100};
  EXPECT_THROW(metrics_of({backwards}, 1), DataError);
  EXPECT_THROW(metrics_of({series({1, 2, 3}), series({1, 2})}, 1), DataError);
}

TEST(Metrics, CsvHeaders) {
  EXPECT_EQ(kMetricsCsvHeader,
            "group,env,mode,seeds,learning_speed,max_score,learning_stability,robustness,final_performance");
  EXPECT_EQ(kBenchCsvHeader, "operation,capacity,operations,seconds,ops_per_second");
  EXPECT_EQ(detail::kVarianceCsvHeader,
            "seed,d_min,d_max,empirical_uniform,empirical_learned,analytic_uniform,analytic_learned");
}

TEST(Metrics, TraceRoundTrip) {
  const std::string text =
      "# schema=aes-trace/1\n# env=chain5\n"
      "seed,mode,env,step,episodic_test_return,variance_probe,p_entropy,reset_count\n"
      "7,aes,chain5,40,0.5,1,2,0\n7,aes,chain5,80,0.75,1,2,0\n";
  std::istringstream is(text);
  const auto t = read_trace_csv(is);
  EXPECT_EQ(t.meta.at("schema"), "aes-trace/1");
  EXPECT_EQ(t.env, "chain5");
  EXPECT_EQ(t.mode, "aes");
  EXPECT_EQ(t.series.seed, 7u);
  EXPECT_EQ(t.series.steps, (std::vector<double>{40, 80}));
  EXPECT_EQ(t.series.scores, (std::vector<double>{0.5, 0.75}));
}

TEST(Format, ShortestRoundTrip) {
  EXPECT_EQ(format_real(0.1), "0.1");
  EXPECT_EQ(format_real(2.0), "2");
  EXPECT_EQ(format_real(1e-300), "1e-300");
  EXPECT_EQ(format_real(std::nan("")), "nan");
  EXPECT_EQ(format_real(-INFINITY), "-inf");
  const double x = 1.0 / 3.0;
  EXPECT_EQ(std::stod(format_real(x)), x);
}

TEST(Config, EmptyFileGivesDefaults) {
  const auto spec = parse_config_text("");
  EXPECT_EQ(spec.sampler.kappa, 0.1);
  EXPECT_EQ(spec.sampler.nu, 1000.0);
  EXPECT_EQ(spec.sampler.reset_period, 1000u);
  EXPECT_EQ(spec.rho, 0.9);
  EXPECT_EQ(spec.reset_mode, "hard");
  EXPECT_EQ(spec.seeds, (std::vector<std::uint64_t>{2, 20, 200, 2000, 20000}));
  EXPECT_EQ(spec.modes.size(), 4u);
}

TEST(Config, AnnealedRowAccepted) {
  const auto spec = parse_config_text(
      "[sampler]\nkappa = 0.2\nnu = 10000\nreset_mode = anneal\nrho_start = 0.7\nrho_end = 0.2\n");
  const auto sc = spec.sampler_config();
  EXPECT_EQ(sc.kappa, 0.2);
  EXPECT_EQ(sc.nu, 10000.0);
  const auto* an = std::get_if<AnnealedSoftReset>(&sc.reset_mode);
  ASSERT_NE(an, nullptr);
  EXPECT_EQ(an->rho_start, 0.7);
  EXPECT_EQ(an->rho_end, 0.2);
}

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, OutOfRangeNamesTheKey) {
  const auto msg = error_of("[sampler]\nkappa = 1.5\n");
  EXPECT_NE(msg.find("sampler.kappa"), std::string::npos) << msg;
  EXPECT_NE(msg.find("1.5"), std::string::npos) << msg;
}

TEST(Config, RejectsUnknownAndMalformed) {
  EXPECT_NE(error_of("[sampler]\nkapa = 0.2\n").find("sampler.kapa"), std::string::npos);
  EXPECT_NE(error_of("[training]\nmodes = aes, greedy\n").find("training.modes"), std::string::npos);
  EXPECT_NE(error_of("[sampler]\nnu = abc\n").find("sampler.nu"), std::string::npos);
  EXPECT_NE(error_of("kappa = 0.2\n").find("section"), std::string::npos);
  EXPECT_FALSE(error_of("[sampler\nkappa = 0.2\n").empty());
  EXPECT_FALSE(error_of("[sweep]\nfast = training.iterations\n").empty());
}

TEST(Config, DescribeRoundTrips) {
  const auto spec = parse_config_text(
      "[experiment]\nfamily = regret_synthetic\nseeds = 1, 2, 3\n[regret]\nhorizons = 100,200\n"
      "[sweep]\nfast = sampler.reset_period=10; regret.slots=4\n");
  ASSERT_EQ(spec.sweep.size(), 1u);
  EXPECT_EQ(spec.sweep[0].overrides.size(), 2u);
  ExperimentSpec rebuilt;
  std::istringstream lines(describe(spec));
  for (std::string line; std::getline(lines, line);) {
    if (line.starts_with("sweep.")) continue;
    const auto eq = line.find('=');
    apply_setting(rebuilt, line.substr(0, eq), line.substr(eq + 1));
  }
  rebuilt.sweep = spec.sweep;
  EXPECT_EQ(describe(rebuilt), describe(spec));
  const auto variant = apply_variant(spec, spec.sweep[0]);
  EXPECT_EQ(variant.sampler.reset_period, 10u);
  EXPECT_EQ(variant.regret.slots, 4u);
}

TEST(Config, SampleConfigsParse) {
  std::size_t seen = 0;
  for (const auto& e : fs::directory_iterator(AES_SAMPLE_CONFIG_DIR)) {
    if (e.path().extension() != ".ini") continue;
    std::ifstream in(e.path());
    EXPECT_NO_THROW(parse_config(in)) << e.path();
    ++seen;
  }
  EXPECT_GE(seen, 5u);
}

class SuiteTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::path(::testing::TempDir()) / ("aes-suite-" + std::string(
        ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  ExperimentSpec rl_spec(const fs::path& out) const {
    auto spec = parse_config_text(
        "[experiment]\nfamily = rl_comparison\nname = small\n"
        "[training]\nenvs = chain5\niterations = 100\neval_interval = 10\nbuffer = 8\nbatch = 2\n"
        "eval_episodes = 2\n[sampler]\nnu = 10\nreset_period = 20\n");
    spec.output_dir = out.string();
    return spec;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  }

  fs::path root_;
};

TEST_F(SuiteTest, ComparisonEmitsOneTracePerCellAndOneAggregate) {
  const auto spec = rl_spec(root_ / "a");
  const auto result = run_suite(spec);
  EXPECT_EQ(result.exit_code(), 0) << result.aggregate_error;
  std::size_t traces = 0;
  for (const auto& e : fs::recursive_directory_iterator(result.run_dir / "traces")) {
    traces += e.is_regular_file() && e.path().extension() == ".csv";
  }
  EXPECT_EQ(traces, 20u);
  EXPECT_EQ(result.aggregates, std::vector<std::string>{"metrics.csv"});
  std::istringstream metrics(slurp(result.run_dir / "metrics.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(metrics, line)) rows += !line.empty() && line[0] != '#';
  EXPECT_EQ(rows, 1u + 4u);

  const auto manifest = nlohmann::json::parse(slurp(result.run_dir / "manifest.json"));
  EXPECT_EQ(manifest["generator"], std::string(kGeneratorId));
  EXPECT_EQ(manifest["seeds"].size(), 5u);
  EXPECT_EQ(manifest["cells"].size(), 20u);
  EXPECT_EQ(manifest["failed"], 0);
  EXPECT_EQ(manifest["config"]["sampler.nu"], "10");
}

TEST_F(SuiteTest, RerunsAreByteIdentical) {
  auto first = rl_spec(root_ / "a");
  auto second = rl_spec(root_ / "b");
  second.workers = 4;
  const auto a = run_suite(first);
  const auto b = run_suite(second);
  for (const auto& e : fs::recursive_directory_iterator(a.run_dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.run_dir);
    EXPECT_EQ(slurp(e.path()), slurp(b.run_dir / rel)) << rel;
  }
}

TEST_F(SuiteTest, AggregateFailureIsMarked) {
  auto spec = rl_spec(root_ / "a");
  spec.training.iterations = 20;  // three evaluation points, fewer than the smoothing window
  spec.seeds = {1};
  const auto result = run_suite(spec);
  EXPECT_EQ(result.failures(), 0u);
  EXPECT_NE(result.exit_code(), 0);
  EXPECT_TRUE(fs::exists(result.run_dir / "metrics.csv.FAILED"));
  EXPECT_FALSE(fs::exists(result.run_dir / "metrics.csv"));
  EXPECT_TRUE(fs::exists(result.run_dir / "traces/base/chain5/aes/seed-1.csv"));
}

TEST_F(SuiteTest, BenchEmitsTimings) {
  auto spec = parse_config_text("[experiment]\nfamily = bench\nseeds = 1\n[bench]\ncapacity = 1000\noperations = 1000\n");
  spec.output_dir = (root_ / "bench").string();
  const auto result = run_suite(spec);
  ASSERT_EQ(result.exit_code(), 0);
  std::istringstream cell(slurp(result.run_dir / "bench/base/seed-1.csv"));
  std::string line;
  std::getline(cell, line);
  EXPECT_EQ(line, "# schema=aes-bench/1");
  std::getline(cell, line);
  EXPECT_EQ(line, kBenchCsvHeader);
  std::size_t rows = 0;
  while (std::getline(cell, line)) rows += !line.empty();
  EXPECT_EQ(rows, 4u);
}

TEST_F(SuiteTest, RegretSweepWritesLedgersPerVariant) {
  auto spec = parse_config_text(
      "[experiment]\nfamily = regret_synthetic\nseeds = 1,2\n[regret]\nhorizons = 50,100\nslots = 4\n"
      "[sweep]\nfull = regret.feedback=full\nbandit = regret.feedback=bandit\n");
  spec.output_dir = (root_ / "regret").string();
  const auto result = run_suite(spec);
  ASSERT_EQ(result.exit_code(), 0) << result.aggregate_error;
  EXPECT_EQ(result.cells.size(), 8u);
  EXPECT_TRUE(fs::exists(result.run_dir / "ledgers/full/T100/seed-2.csv"));
  EXPECT_TRUE(fs::exists(result.run_dir / "ledgers/bandit/T50/seed-1.csv"));
  EXPECT_TRUE(fs::exists(result.run_dir / "regret_summary.csv"));
}

}  // namespace
}  // namespace aes::harness
