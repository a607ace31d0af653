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

#ifndef ASYNCDYNA_CONFIG_HPP_
#define ASYNCDYNA_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "asyncdyna/runners.hpp"

namespace asyncdyna::harness {

// Full experiment description, read from a flat `key = value` file with
// `[section]` headers. Every key is validated; unknown keys are errors so
// typos never pass silently.
struct ExperimentConfig {
  // [experiment]
  std::string env = "pendulum";
  workers::RunMode mode = workers::RunMode::kSync;
  uint64_t max_trajectories = 100;
  std::vector<uint64_t> seeds = {0, 1, 2, 3};
  int eval_every = 5;
  int eval_episodes = 5;
  std::string out_dir = "runs";
  std::string name;  // file stem; defaults to "<env>_<mode>"

  // [env]
  int horizon = 0;
  double dt = 0.0;

  // [policy]
  std::vector<int> policy_hidden = {64, 64};
  nn::Activation policy_activation = nn::Activation::kTanh;
  double log_std_init = -0.5;

  // [train]
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int imagined_horizon = 50;
  int imagined_paths = 32;
  double policy_lr = 3e-4;
  double value_lr = 1e-3;
  double entropy_coef = 0.0;

  // [ensemble]
  int ensemble_k = 4;
  std::vector<int> ensemble_hidden = {64, 64};
  nn::Activation ensemble_activation = nn::Activation::kRelu;
  double ensemble_lr = 1e-3;
  int minibatch = 64;
  int capacity_trajectories = 20;
  double validation_fraction = 0.1;
  double beta_ema = 0.6;
  bool early_stopping = true;
  int max_epochs_per_iteration = 50;
  double model_log_std_init = -1.0;

  // [ablation]
  int rollouts_per_phase = 1;
  int model_epochs = 1;
  int policy_steps = 20;
  int initial_rollouts = 0;

  // [pacing]
  double speed = 1.0;

  // [cost]
  double rollout_duration = 0.0;
  double epoch_duration = 0.25;
  double grad_step_duration = 0.05;

  bool operator==(const ExperimentConfig&) const = default;

  std::string run_name() const;

  // Per-seed run configuration (the evaluator is installed separately).
  workers::RunConfig to_run_config(uint64_t seed) const;
};

// Parses the documented config format. Errors name the offending key and
// line: unknown keys, type mismatches and out-of-range values all throw
// std::invalid_argument.
ExperimentConfig parse_config(const std::string& text);

// Canonical text form; parse_config(render_config(c)) == c.
std::string render_config(const ExperimentConfig& config);

// Applies one "section.key=value" override in place.
void apply_override(ExperimentConfig* config, const std::string& assignment);

}  // namespace asyncdyna::harness

#endif  // ASYNCDYNA_CONFIG_HPP_
