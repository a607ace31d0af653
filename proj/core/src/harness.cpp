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

#include "asyncdyna/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

#include "asyncdyna/svg_plot.hpp"

namespace asyncdyna::harness {

namespace {
constexpr double kPi = std::numbers::pi;
}

std::pair<double, double> evaluate_policy(envs::Env& env,
                                          const policy::GaussianPolicy& policy,
                                          int episodes, uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate_policy: episodes must be >= 1");
  Rng seeder(seed);
  std::vector<double> returns;
  returns.reserve(episodes);
  for (int ep = 0; ep < episodes; ++ep) {
    const uint64_t ep_seed = seeder.next_u64();
    std::vector<double> obs = env.reset(ep_seed);
    double total = 0.0;
    bool done = false;
    while (!done) {
      envs::StepResult r = env.step(policy.mean_action(obs));
      total += r.reward;
      obs = std::move(r.obs);
      done = r.done;
    }
    returns.push_back(total);
  }
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= episodes;
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  return {mean, std::sqrt(var / episodes)};
}

workers::Evaluator make_evaluator(const envs::Env& env, int episodes, uint64_t seed) {
  std::shared_ptr<envs::Env> eval_env = env.clone();
  return [eval_env, episodes, seed](const policy::GaussianPolicy& pol) {
    return evaluate_policy(*eval_env, pol, episodes, seed);
  };
}

// -- scripted controllers --------------------------------------------------------

namespace {

// Energy-shaping swing-up with a PD balance takeover near the top.
std::vector<double> pendulum_controller(const std::vector<double>& obs) {
  const double cos_th = obs[0];
  const double sin_th = obs[1];
  const double thdot = obs[2];
  const double th = std::atan2(sin_th, cos_th);

  const double inertia =
      envs::PendulumEnv::kMass * envs::PendulumEnv::kLength * envs::PendulumEnv::kLength / 3.0;
  const double e_top = envs::PendulumEnv::kMass * envs::PendulumEnv::kGravity *
                       (envs::PendulumEnv::kLength / 2.0);
  const double energy = 0.5 * inertia * thdot * thdot + e_top * cos_th;

  double u;
  if (std::abs(th) < 0.35 && std::abs(thdot) < 2.5) {
    u = -14.0 * th - 3.2 * thdot;  // balance
  } else {
    // Pump energy toward the upright level along the current swing direction.
    u = 1.8 * (e_top - energy) * (thdot >= 0.0 ? 1.0 : -1.0);
    if (std::abs(thdot) < 1e-3 && std::abs(std::abs(th) - kPi) < 1e-2) {
      u = envs::PendulumEnv::kMaxTorque;  // kick out of the hanging equilibrium
    }
  }
  u = std::clamp(u, -envs::PendulumEnv::kMaxTorque, envs::PendulumEnv::kMaxTorque);
  return {u};
}

std::vector<double> point_mass_controller(const std::vector<double>& obs) {
  const double kp = 1.2, kd = 1.6;
  return {std::clamp(kp * (envs::PointMassEnv::kGoalX - obs[0]) - kd * obs[2], -1.0, 1.0),
          std::clamp(kp * (envs::PointMassEnv::kGoalY - obs[1]) - kd * obs[3], -1.0, 1.0)};
}

// Joint-space PD toward an inverse-kinematics solution for the target.
std::vector<double> reacher_controller(const std::vector<double>& obs) {
  const double tx = envs::ReacherEnv::kTargetX, ty = envs::ReacherEnv::kTargetY;
  const double l1 = envs::ReacherEnv::kLink1, l2 = envs::ReacherEnv::kLink2;
  const double r = std::sqrt(tx * tx + ty * ty);
  const double cos_q2 = std::clamp(
      (r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0);
  const double q2_star = std::acos(cos_q2);
  const double q1_star = std::atan2(ty, tx) -
                         std::atan2(l2 * std::sin(q2_star), l1 + l2 * std::cos(q2_star));
  auto err = [](double target, double q) {
    double e = std::fmod(target - q, 2.0 * kPi);
    if (e > kPi) e -= 2.0 * kPi;
    if (e < -kPi) e += 2.0 * kPi;
    return e;
  };
  const double kp = 4.0, kd = 1.8;
  return {std::clamp(kp * err(q1_star, obs[0]) - kd * obs[2], -1.0, 1.0),
          std::clamp(kp * err(q2_star, obs[1]) - kd * obs[3], -1.0, 1.0)};
}

}  // namespace

envs::PolicyFn scripted_controller(const std::string& env_name) {
  if (env_name == "pendulum") return pendulum_controller;
  if (env_name == "point_mass") return point_mass_controller;
  if (env_name == "reacher") return reacher_controller;
  throw std::invalid_argument("no scripted controller for env: " + env_name);
}

double scripted_controller_return(const std::string& env_name, int episodes,
                                  uint64_t seed, int horizon, double dt) {
  std::unique_ptr<envs::Env> env = envs::make_env(env_name, horizon, dt);
  const envs::PolicyFn controller = scripted_controller(env_name);
  Rng seeder(seed);
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    const envs::Trajectory traj =
        envs::collect_rollout(*env, controller, envs::Pacing{}, seeder.next_u64());
    total += traj.return_undiscounted;
  }
  return total / episodes;
}

double solved_threshold(const std::string& env_name, int episodes, uint64_t seed,
                        int horizon, double dt) {
  const double reference = scripted_controller_return(env_name, episodes, seed, horizon, dt);
  return reference - 0.1 * std::abs(reference);
}

// -- experiment runner -------------------------------------------------------------

ExperimentResult run_experiment(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  ExperimentResult result;
  fs::create_directories(config.out_dir);

  std::vector<CsvFile> run_files;
  for (const uint64_t seed : config.seeds) {
    workers::RunConfig rc = config.to_run_config(seed);
    const char* threads_env = std::getenv("ASYNCDYNA_THREADS");
    if (threads_env) rc.threads_cap = std::max(1, std::atoi(threads_env));
    std::unique_ptr<envs::Env> proto = envs::make_env(config.env, config.horizon, config.dt);
    rc.evaluator = make_evaluator(*proto, config.eval_episodes,
                                  Rng(seed).split(8).next_u64());
    try {
      RunMetrics metrics = workers::run(rc);
      const std::string stem =
          config.out_dir + "/" + config.run_name() + "_seed" + std::to_string(seed);
      write_run_csv(stem + ".csv", metrics, proto->spec().dt, proto->spec().horizon);
      result.run_csvs.push_back(stem + ".csv");
      if (config.mode != workers::RunMode::kAsyncRealtime) {
        write_trace(stem + ".trace.csv", metrics.events);
      }
      run_files.push_back(read_csv(stem + ".csv"));
      result.runs.push_back(std::move(metrics));
    } catch (const std::exception& e) {
      result.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
    }
  }

  if (!run_files.empty()) {
    CsvFile aggregate = aggregate_runs(run_files);
    result.aggregate_csv = config.out_dir + "/" + config.run_name() + "_aggregate.csv";
    write_csv(result.aggregate_csv, aggregate);
  }
  return result;
}

// -- comparison -----------------------------------------------------------------------

namespace {

struct Curve {
  std::vector<double> trajectories;
  std::vector<double> wall_clock;
  std::vector<double> returns;
  std::string label;
};

Curve load_curve(const CsvFile& csv) {
  Curve c;
  c.trajectories = csv.column_values("trajectories");
  c.wall_clock = csv.column_values("wall_clock_s");
  const bool aggregate = csv.column("return_mean") >= 0;
  c.returns = csv.column_values(aggregate ? "return_mean" : "avg_eval_return");
  if (auto it = csv.metadata.find("mode"); it != csv.metadata.end()) c.label = it->second;
  return c;
}

std::optional<size_t> first_crossing(const Curve& c, double threshold) {
  for (size_t i = 0; i < c.returns.size(); ++i) {
    if (std::isfinite(c.returns[i]) && c.returns[i] >= threshold) return i;
  }
  return std::nullopt;
}

ComparisonRow make_row(const Curve& c, double threshold) {
  ComparisonRow row;
  row.label = c.label;
  row.final_return = c.returns.back();
  if (auto idx = first_crossing(c, threshold)) {
    row.trajectories_to_threshold = c.trajectories[*idx];
    row.wall_clock_to_threshold = c.wall_clock[*idx];
  }
  return row;
}

}  // namespace

ComparisonTable compare_summary(const CsvFile& async_csv, const CsvFile& sync_csv) {
  const Curve async_curve = load_curve(async_csv);
  const Curve sync_curve = load_curve(sync_csv);
  if (async_curve.returns.empty() || sync_curve.returns.empty()) {
    throw std::invalid_argument("compare_summary: empty curve");
  }

  // Threshold: 90% of the way from the sync curve's first value to its final
  // value, so the bar is meaningful for negative returns as well.
  const double start = sync_curve.returns.front();
  const double final_sync = sync_curve.returns.back();
  ComparisonTable table;
  table.threshold = start + 0.9 * (final_sync - start);

  table.async_row = make_row(async_curve, table.threshold);
  table.sync_row = make_row(sync_curve, table.threshold);
  if (table.async_row.trajectories_to_threshold && table.sync_row.trajectories_to_threshold &&
      *table.async_row.trajectories_to_threshold > 0.0) {
    table.sample_efficiency_ratio =
        *table.sync_row.trajectories_to_threshold /
        *table.async_row.trajectories_to_threshold;
  }
  return table;
}

namespace {

std::string opt_str(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("n/a");
}

}  // namespace

std::string comparison_text(const ComparisonTable& t) {
  std::ostringstream out;
  auto line = [&](const std::string& label, const ComparisonRow& row) {
    std::string padded = label;
    padded.resize(8, ' ');
    out << "  " << padded << "final_return=" << format_double(row.final_return)
        << "  trajectories_to_threshold=" << opt_str(row.trajectories_to_threshold)
        << "  wall_clock_to_threshold=" << opt_str(row.wall_clock_to_threshold) << "\n";
  };
  out << "threshold (90% of sync progress): " << format_double(t.threshold) << "\n";
  line("async", t.async_row);
  line("sync", t.sync_row);
  out << "  sample_efficiency_ratio (sync/async trajectories): "
      << opt_str(t.sample_efficiency_ratio) << "\n";
  return out.str();
}

CsvFile comparison_csv(const ComparisonTable& t) {
  CsvFile out;
  out.columns = {"threshold", "async_final_return", "async_trajs_to_threshold",
                 "async_wall_clock_to_threshold", "sync_final_return",
                 "sync_trajs_to_threshold", "sync_wall_clock_to_threshold",
                 "sample_efficiency_ratio"};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.rows.push_back({t.threshold, t.async_row.final_return,
                      t.async_row.trajectories_to_threshold.value_or(nan),
                      t.async_row.wall_clock_to_threshold.value_or(nan),
                      t.sync_row.final_return,
                      t.sync_row.trajectories_to_threshold.value_or(nan),
                      t.sync_row.wall_clock_to_threshold.value_or(nan),
                      t.sample_efficiency_ratio.value_or(nan)});
  return out;
}

}  // namespace asyncdyna::harness
