// Copyright 2026 The asyncdyna Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "asyncdyna/config.hpp"
#include "asyncdyna/csv.hpp"
#include "asyncdyna/harness.hpp"
#include "asyncdyna/svg_plot.hpp"

using namespace asyncdyna;
using namespace asyncdyna::harness;

namespace {

// Minimal well-formedness scan: tags balance, attributes quoted, one root.
// Good enough to catch malformed SVG output without an XML library.
bool looks_like_xml(const std::string& text) {
  size_t i = 0;
  int depth = 0;
  int roots = 0;
  bool seen_decl = false;
  while (i < text.size()) {
    const size_t open = text.find('<', i);
    if (open == std::string::npos) break;
    const size_t close = text.find('>', open);
    if (close == std::string::npos) return false;
    const std::string tag = text.substr(open + 1, close - open - 1);
    if (tag.empty()) return false;
    if (tag.front() == '?') {
      seen_decl = true;
    } else if (tag.front() == '/') {
      depth -= 1;
      if (depth < 0) return false;
      if (depth == 0) roots += 1;
    } else if (tag.back() == '/') {
      if (depth == 0) roots += 1;
    } else {
      depth += 1;
    }
    // Quotes inside the tag must pair up.
    int quotes = 0;
    for (char c : tag) {
      if (c == '"') quotes += 1;
    }
    if (quotes % 2 != 0) return false;
    i = close + 1;
  }
  return seen_decl && depth == 0 && roots == 1;
}

RunMetrics fake_metrics(const std::string& mode, uint64_t seed, int points,
                        double return_scale) {
  RunMetrics m;
  m.summary.env = "point_mass";
  m.summary.mode = mode;
  m.summary.seed = seed;
  for (int i = 1; i <= points; ++i) {
    MetricsRow row;
    row.wall_clock_s = 10.0 * i;
    row.virtual_time_s = 10.0 * i;
    row.real_env_steps = static_cast<uint64_t>(30 * i);
    row.trajectories = static_cast<uint64_t>(i);
    // Improving curve: climbs from return_scale toward zero.
    row.avg_eval_return = return_scale * std::exp(-0.5 * i);
    row.std_eval_return = 0.05 * std::abs(return_scale);
    row.model_val_loss = 1.0 / i;
    row.model_version = static_cast<uint64_t>(2 * i);
    row.policy_version = static_cast<uint64_t>(3 * i);
    row.imagined_steps = static_cast<uint64_t>(100 * i);
    m.rows.push_back(row);
  }
  m.summary.trajectories = points;
  return m;
}

}  // namespace

TEST_CASE("minimal config applies defaults") {
  const ExperimentConfig config = parse_config(
      "[experiment]\n"
      "env = point_mass\n"
      "mode = sync\n"
      "max_trajectories = 10\n");
  CHECK(config.env == "point_mass");
  CHECK(config.mode == workers::RunMode::kSync);
  CHECK(config.max_trajectories == 10);
  CHECK(config.seeds == std::vector<uint64_t>{0, 1, 2, 3});
  CHECK(config.gamma == doctest::Approx(0.99));
  CHECK(config.ensemble_k == 4);
}

TEST_CASE("config errors name the key and the allowed values") {
  CHECK_THROWS_WITH_AS(parse_config("[experiment]\nmode = asnc\n"),
                       doctest::Contains("experiment.mode"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("[experiment]\nmode = asnc\n"),
                       doctest::Contains("async_realtime"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("[experiment]\nbogus_key = 3\n"),
                       doctest::Contains("unknown key"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("[bogus]\nx = 1\n"),
                       doctest::Contains("unknown section"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("[train]\ngamma = 1.5\n"),
                       doctest::Contains("train.gamma"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("[train]\ngamma = abc\n"),
                       doctest::Contains("line 2"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("x = 1\n"), std::invalid_argument);
}

TEST_CASE("config round-trips through render and parse") {
  ExperimentConfig config = parse_config(
      "[experiment]\n"
      "env = reacher\n"
      "mode = partial_policy_data\n"
      "max_trajectories = 44\n"
      "seeds = 5,6\n"
      "[train]\n"
      "gamma = 0.97\n"
      "imagined_horizon = 21\n"
      "[ensemble]\n"
      "beta_ema = 0.25\n"
      "early_stopping = false\n"
      "[ablation]\n"
      "policy_steps = 7\n"
      "[cost]\n"
      "epoch_duration = 0.75\n");
  const ExperimentConfig back = parse_config(render_config(config));
  CHECK(back == config);
}

TEST_CASE("a sweep config with 4 seeds yields 4 distinct run plans") {
  const ExperimentConfig config = parse_config(
      "[experiment]\n"
      "env = pendulum\n"
      "mode = async_virtual\n"
      "max_trajectories = 20\n"
      "seeds = 10,11,12,13\n");
  REQUIRE(config.seeds.size() == 4);
  std::set<uint64_t> run_seeds;
  for (uint64_t seed : config.seeds) {
    const workers::RunConfig rc = config.to_run_config(seed);
    run_seeds.insert(rc.seed);
    CHECK(rc.mode == workers::RunMode::kAsyncVirtual);
  }
  CHECK(run_seeds.size() == 4);
}

TEST_CASE("overrides hit the same validation as the parser") {
  ExperimentConfig config;
  apply_override(&config, "experiment.mode=model_free");
  CHECK(config.mode == workers::RunMode::kModelFree);
  apply_override(&config, "ensemble.beta_ema=0.9");
  CHECK(config.beta_ema == doctest::Approx(0.9));
  apply_override(&config, "pacing.speed = 2.0");
  CHECK(config.speed == doctest::Approx(2.0));
  CHECK_THROWS_AS(apply_override(&config, "experiment.typo=1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(&config, "garbage"), std::invalid_argument);
}

TEST_CASE("evaluate_policy is deterministic and never perturbs the argument env") {
  auto env = envs::make_env("point_mass", 25, 0.0);
  policy::PolicyConfig pconf;
  pconf.hidden = {8};
  policy::GaussianPolicy pol(4, 2, pconf, 7);
  const auto a = evaluate_policy(*env, pol, 3, 99);
  const auto b = evaluate_policy(*env, pol, 3, 99);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("evaluate_policy on a zero-reward environment returns exactly zero") {
  // Point mass parked on the goal with zero actions: reward is exactly 0.
  class ZeroEnv : public envs::PointMassEnv {
   public:
    std::vector<double> reset(uint64_t) override {
      set_state(std::vector<double>{envs::PointMassEnv::kGoalX,
                                    envs::PointMassEnv::kGoalY},
                std::vector<double>{0.0, 0.0});
      return {envs::PointMassEnv::kGoalX, envs::PointMassEnv::kGoalY, 0.0, 0.0};
    }
  };
  ZeroEnv env;
  policy::PolicyConfig pconf;
  pconf.hidden = {4};
  // Zero-weight policy outputs zero actions.
  policy::GaussianPolicy pol(4, 2, pconf, 1);
  for (double& p : pol.mutable_params()) p = 0.0;
  const auto [mean, stddev] = evaluate_policy(env, pol, 2, 5);
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(stddev == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("scripted pendulum controller clears the calibration bar") {
  // The energy-shaping controller must reliably swing up and balance; its
  // return is the reference the solved threshold hangs off.
  const double ret = scripted_controller_return("pendulum", 10, 1234);
  CHECK(ret > -400.0);  // swing-up from arbitrary starts within a few seconds
  const double threshold = solved_threshold("pendulum", 10, 1234);
  CHECK(threshold < ret);  // the threshold allows 10% slack
}

TEST_CASE("scripted point mass controller parks on the goal") {
  const double ret = scripted_controller_return("point_mass", 10, 77);
  CHECK(ret > -40.0);
}

TEST_CASE("run CSV format is stable and parses back") {
  const RunMetrics metrics = fake_metrics("sync", 3, 5, -100.0);
  const std::string text = run_csv_text(metrics, 0.05, 200);
  CHECK(text.find(kRunCsvHeader) != std::string::npos);
  CHECK(text.find("# env = point_mass") != std::string::npos);
  CHECK(text.find("# dt = 0.05") != std::string::npos);

  const CsvFile parsed = parse_csv(text);
  CHECK(parsed.metadata.at("mode") == "sync");
  CHECK(parsed.columns.size() == 10);
  CHECK(parsed.rows.size() == 5);
  CHECK(parsed.column_values("trajectories").back() == doctest::Approx(5.0));
}

TEST_CASE("interpolation is linear between points and clamped outside") {
  const std::vector<double> xs = {1.0, 2.0, 4.0};
  const std::vector<double> ys = {10.0, 20.0, 40.0};
  CHECK(interpolate(xs, ys, 0.5) == doctest::Approx(10.0));
  CHECK(interpolate(xs, ys, 1.0) == doctest::Approx(10.0));
  CHECK(interpolate(xs, ys, 1.5) == doctest::Approx(15.0));
  CHECK(interpolate(xs, ys, 3.0) == doctest::Approx(30.0));
  CHECK(interpolate(xs, ys, 9.0) == doctest::Approx(40.0));
}

TEST_CASE("aggregate of identical runs is the run itself with zero std") {
  const RunMetrics metrics = fake_metrics("sync", 0, 6, -50.0);
  const CsvFile run = parse_csv(run_csv_text(metrics, 0.05, 30));
  const CsvFile agg = aggregate_runs({run, run, run});
  REQUIRE(agg.rows.size() == 6);
  const auto mean = agg.column_values("return_mean");
  const auto stddev = agg.column_values("return_std");
  const auto original = run.column_values("avg_eval_return");
  for (size_t i = 0; i < mean.size(); ++i) {
    CHECK(mean[i] == doctest::Approx(original[i]).epsilon(1e-12));
    CHECK(stddev[i] == doctest::Approx(0.0));
  }
}

TEST_CASE("aggregate equals the arithmetic mean of interpolated values") {
  const CsvFile a = parse_csv(run_csv_text(fake_metrics("sync", 0, 6, -50.0), 0.05, 30));
  const CsvFile b = parse_csv(run_csv_text(fake_metrics("sync", 1, 6, -80.0), 0.05, 30));
  const CsvFile agg = aggregate_runs({a, b});
  const auto t = agg.column_values("trajectories");
  const auto mean = agg.column_values("return_mean");
  for (size_t i = 0; i < t.size(); ++i) {
    const double va = interpolate(a.column_values("trajectories"),
                                  a.column_values("avg_eval_return"), t[i]);
    const double vb = interpolate(b.column_values("trajectories"),
                                  b.column_values("avg_eval_return"), t[i]);
    CHECK(mean[i] == doctest::Approx(0.5 * (va + vb)).epsilon(1e-12));
  }
}

TEST_CASE("emit_plot produces well-formed standalone SVG") {
  const CsvFile run = parse_csv(run_csv_text(fake_metrics("sync", 0, 8, -60.0), 0.05, 30));
  const CsvFile async_run =
      parse_csv(run_csv_text(fake_metrics("async_virtual", 0, 8, -55.0), 0.05, 30));
  for (auto axis : {PlotAxis::kWallClock, PlotAxis::kSamples}) {
    const std::string svg = emit_plot({run, async_run}, axis);
    CHECK(looks_like_xml(svg));
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
    // Dashed for sync, solid for async: exactly one dasharray'd curve.
    CHECK(svg.find("stroke-dasharray=\"8,5\"") != std::string::npos);
  }
  CHECK_THROWS_AS(emit_plot({}, PlotAxis::kSamples), std::invalid_argument);
}

TEST_CASE("plot axis names parse") {
  CHECK(plot_axis_from_name("wall_clock") == PlotAxis::kWallClock);
  CHECK(plot_axis_from_name("samples") == PlotAxis::kSamples);
  CHECK_THROWS_AS(plot_axis_from_name("minutes"), std::invalid_argument);
}

TEST_CASE("compare_summary of identical curves gives ratio 1") {
  const CsvFile run = parse_csv(run_csv_text(fake_metrics("sync", 0, 10, -60.0), 0.05, 30));
  const ComparisonTable table = compare_summary(run, run);
  REQUIRE(table.sample_efficiency_ratio.has_value());
  CHECK(*table.sample_efficiency_ratio == doctest::Approx(1.0));
  CHECK(table.async_row.final_return == table.sync_row.final_return);
}

TEST_CASE("compare_summary computes the sample-efficiency ratio") {
  // Async reaches the threshold earlier: ratio sync/async > 1.
  RunMetrics fast = fake_metrics("async_virtual", 0, 10, -60.0);
  RunMetrics slow = fake_metrics("sync", 0, 10, -60.0);
  // Compress the async curve so it converges in ~half the trajectories.
  for (size_t i = 0; i < fast.rows.size(); ++i) {
    fast.rows[i].avg_eval_return = -60.0 * std::exp(-1.2 * static_cast<double>(i + 1));
  }
  const CsvFile async_csv = parse_csv(run_csv_text(fast, 0.05, 30));
  const CsvFile sync_csv = parse_csv(run_csv_text(slow, 0.05, 30));
  const ComparisonTable table = compare_summary(async_csv, sync_csv);
  REQUIRE(table.sample_efficiency_ratio.has_value());
  CHECK(*table.sample_efficiency_ratio > 1.0);

  // The table's numbers must be recomputable from the raw curves.
  const auto sync_returns = sync_csv.column_values("avg_eval_return");
  const auto sync_traj = sync_csv.column_values("trajectories");
  const double thr = table.threshold;
  double expect_sync = -1;
  for (size_t i = 0; i < sync_returns.size(); ++i) {
    if (sync_returns[i] >= thr) {
      expect_sync = sync_traj[i];
      break;
    }
  }
  CHECK(*table.sync_row.trajectories_to_threshold == doctest::Approx(expect_sync));
  const std::string rendered = comparison_text(table);
  CHECK(rendered.find("sample_efficiency_ratio") != std::string::npos);
}

TEST_CASE("run_experiment writes per-seed CSVs plus one aggregate") {
  namespace fs = std::filesystem;
  const std::string dir = "test_harness_out";
  fs::remove_all(dir);

  ExperimentConfig config;
  config.env = "point_mass";
  config.mode = workers::RunMode::kSync;
  config.max_trajectories = 4;
  config.seeds = {0, 1};
  config.eval_every = 2;
  config.eval_episodes = 1;
  config.horizon = 20;
  config.out_dir = dir;
  config.policy_hidden = {8, 8};
  config.ensemble_hidden = {8, 8};
  config.ensemble_k = 2;
  config.imagined_horizon = 5;
  config.imagined_paths = 4;
  config.policy_steps = 2;
  config.max_epochs_per_iteration = 2;

  const ExperimentResult result = run_experiment(config);
  CHECK(result.failures.empty());
  REQUIRE(result.runs.size() == 2);
  CHECK(result.run_csvs.size() == 2);
  for (const std::string& path : result.run_csvs) {
    CHECK(fs::exists(path));
    const CsvFile csv = read_csv(path);
    CHECK(csv.rows.back()[3] == doctest::Approx(4.0));  // trajectories column
  }
  CHECK(fs::exists(result.aggregate_csv));
  const CsvFile agg = read_csv(result.aggregate_csv);
  CHECK(agg.metadata.at("aggregate_of") == "2");
  // Event traces exist for the deterministic mode.
  CHECK(fs::exists(dir + "/point_mass_sync_seed0.trace.csv"));
  fs::remove_all(dir);
}

TEST_CASE("evaluation does not perturb training sample accounting") {
  // Same seed, different eval_episodes: identical real-step counts.
  auto run_with_eval = [](int episodes) {
    ExperimentConfig config;
    config.env = "point_mass";
    config.mode = workers::RunMode::kSync;
    config.max_trajectories = 3;
    config.seeds = {4};
    config.eval_every = 1;
    config.eval_episodes = episodes;
    config.horizon = 15;
    config.out_dir = "test_harness_eval";
    config.policy_hidden = {8};
    config.ensemble_hidden = {8};
    config.ensemble_k = 1;
    config.imagined_horizon = 4;
    config.imagined_paths = 4;
    config.policy_steps = 1;
    config.max_epochs_per_iteration = 1;
    const ExperimentResult result = run_experiment(config);
    std::filesystem::remove_all("test_harness_eval");
    REQUIRE(result.runs.size() == 1);
    return result.runs[0].summary.real_env_steps;
  };
  CHECK(run_with_eval(1) == run_with_eval(5));
}
