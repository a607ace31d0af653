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

#ifndef ASYNCDYNA_RUNNERS_HPP_
#define ASYNCDYNA_RUNNERS_HPP_

#include <cstdint>
#include <string>

#include "asyncdyna/workers.hpp"

namespace asyncdyna::workers {

// Everything one run needs. The harness builds this from an experiment
// config; tests build it directly.
struct RunConfig {
  std::string env_name = "pendulum";
  int horizon = 0;   // 0 keeps the environment default
  double dt = 0.0;   // 0 keeps the environment default

  RunMode mode = RunMode::kSync;
  uint64_t max_trajectories = 100;
  uint64_t seed = 0;

  policy::PolicyConfig policy;
  policy::TrainConfig train;
  model::EnsembleConfig ensemble;
  size_t buffer_capacity_trajectories = 20;
  double validation_fraction = 0.1;
  double beta_ema = 0.6;
  bool early_stopping = true;
  int max_model_epochs_per_iteration = 50;

  AblationParams ablation;
  double speed_multiplier = 1.0;
  CostModel cost;

  int eval_every = 5;
  int eval_episodes = 5;
  int threads_cap = 0;  // 0 = one thread per worker

  // Deterministic evaluation hook; the harness installs one built from
  // evaluate_policy. Rows record NaN returns when absent.
  Evaluator evaluator;

  void validate() const;
};

// Dispatches on config.mode.
RunMetrics run(const RunConfig& config);

// The three workers as parallel activities. async_realtime paces data
// collection against the wall clock; async_virtual replays the same loops
// under the deterministic discrete-event scheduler.
RunMetrics run_async(const RunConfig& config);

// Classic in-order baseline: N rollouts, train the model until early stop
// (capped), G policy gradient steps, repeat.
RunMetrics run_sync(const RunConfig& config);

// Interleaved model/policy updates: per iteration collect N rollouts, then
// alternate E model epochs with G policy steps until the model early-stops
// or hits the per-iteration epoch cap.
RunMetrics run_partial_model_policy(const RunConfig& config);

// Interleaved policy/data: fit the model, then N times take G policy steps
// and append one fresh rollout.
RunMetrics run_partial_policy_data(const RunConfig& config);

// Plain PPO on real trajectories; the model-free reference curve.
RunMetrics run_model_free(const RunConfig& config);

}  // namespace asyncdyna::workers

#endif  // ASYNCDYNA_RUNNERS_HPP_
