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

#ifndef ASYNCDYNA_HARNESS_HPP_
#define ASYNCDYNA_HARNESS_HPP_

#include <optional>
#include <string>
#include <vector>

#include "asyncdyna/config.hpp"
#include "asyncdyna/csv.hpp"
#include "asyncdyna/envs.hpp"
#include "asyncdyna/policy.hpp"
#include "asyncdyna/run_metrics.hpp"

namespace asyncdyna::harness {

// Deterministic evaluation: mean actions (no sampling), `episodes` seeded
// resets, no pacing. Returns (mean, std) of the undiscounted return. The env
// is reset in place; pass a dedicated instance so evaluation never perturbs
// training.
std::pair<double, double> evaluate_policy(envs::Env& env,
                                          const policy::GaussianPolicy& policy,
                                          int episodes, uint64_t seed);

// Evaluator hook for run configs: owns a private env clone and a fixed seed
// set, so every call scores the same episode starts.
workers::Evaluator make_evaluator(const envs::Env& env, int episodes, uint64_t seed);

// Hand-written reference controllers used to calibrate solved thresholds:
// energy shaping + PD balance for the pendulum, PD regulators for the
// reacher and point mass.
envs::PolicyFn scripted_controller(const std::string& env_name);

// Mean deterministic return of the scripted controller over seeded episodes.
double scripted_controller_return(const std::string& env_name, int episodes,
                                  uint64_t seed, int horizon = 0, double dt = 0.0);

// Solved threshold: within 10% of the scripted controller's performance,
// i.e. scripted_return - 0.1 * |scripted_return|.
double solved_threshold(const std::string& env_name, int episodes, uint64_t seed,
                        int horizon = 0, double dt = 0.0);

struct ExperimentResult {
  std::vector<RunMetrics> runs;        // one per seed, in seed order
  std::vector<std::string> run_csvs;   // file paths
  std::string aggregate_csv;
  std::vector<std::string> failures;   // per-seed error messages
};

// Executes one run per seed sequentially, writes per-run CSVs (and event
// traces for deterministic modes) plus the aggregate CSV into
// config.out_dir. Seed failures are recorded, not fatal, unless every seed
// fails.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct ComparisonRow {
  std::string label;
  double final_return = 0.0;
  // Trajectories/wall-clock needed to reach the threshold; absent when the
  // curve never crosses it.
  std::optional<double> trajectories_to_threshold;
  std::optional<double> wall_clock_to_threshold;
};

struct ComparisonTable {
  double threshold = 0.0;  // 90% of the way from the sync curve's start to its final return
  ComparisonRow async_row;
  ComparisonRow sync_row;
  // sync trajectories-to-threshold / async trajectories-to-threshold;
  // > 1 means async needed fewer trajectories.
  std::optional<double> sample_efficiency_ratio;
};

// Builds the async-vs-sync summary from two run (or aggregate) CSVs.
ComparisonTable compare_summary(const CsvFile& async_csv, const CsvFile& sync_csv);

std::string comparison_text(const ComparisonTable& table);
CsvFile comparison_csv(const ComparisonTable& table);

}  // namespace asyncdyna::harness

#endif  // ASYNCDYNA_HARNESS_HPP_
