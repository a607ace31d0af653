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

#ifndef ASYNCDYNA_WORKERS_HPP_
#define ASYNCDYNA_WORKERS_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "asyncdyna/ensemble.hpp"
#include "asyncdyna/envs.hpp"
#include "asyncdyna/policy.hpp"
#include "asyncdyna/run_metrics.hpp"
#include "asyncdyna/servers.hpp"
#include "asyncdyna/virtual_scheduler.hpp"

namespace asyncdyna::workers {

// Global stop rule: once the data server has accepted this many trajectories,
// every worker terminates after finishing its current step. The data worker
// checks before starting a rollout, so the final count is exact.
struct StopCriterion {
  uint64_t max_trajectories = 0;
};

enum class RunMode {
  kAsyncRealtime,
  kAsyncVirtual,
  kSync,
  kPartialModelPolicy,
  kPartialPolicyData,
  kModelFree,
};

const char* run_mode_name(RunMode mode);
RunMode run_mode_from_name(const std::string& name);

// Virtual seconds charged per unit of work by the deterministic scheduler and
// by the single-threaded drivers. rollout_duration = 0 derives
// horizon * dt / speed from the environment.
struct CostModel {
  double rollout_duration = 0.0;
  double epoch_duration = 0.25;
  double grad_step_duration = 0.05;

  void validate() const;
};

// N rollouts per phase, E model epochs per alternation, G policy gradient
// steps per alternation. Sync and model-free runs use N and G as well.
struct AblationParams {
  int rollouts_per_phase = 1;       // N
  int model_epochs = 1;             // E
  int policy_steps = 20;            // G
  int initial_rollouts = 0;         // partial policy/data warm-up; 0 -> N

  void validate(RunMode mode) const;
};

// Deterministic policy evaluation hook supplied by the harness; returns
// (mean, std) of the undiscounted return.
using Evaluator = std::function<std::pair<double, double>(const policy::GaussianPolicy&)>;

// Collects rows, traces and summaries while a run progresses. Worker commits
// report here; evaluation happens every eval_every trajectories and once more
// at finalize. Thread-safe.
class MetricsRecorder {
 public:
  MetricsRecorder(const policy::GaussianPolicy& eval_policy_prototype,
                  coord::Servers* servers, Evaluator evaluator, int eval_every);

  // (wall seconds, virtual seconds) supplied by the active driver.
  void set_time_source(std::function<std::pair<double, double>()> now);

  void on_trajectory(const envs::Trajectory& traj, uint64_t total,
                     uint64_t policy_version_used);
  void on_model_push(uint64_t version, double val_loss);
  void on_policy_push(uint64_t version, uint64_t model_version_used,
                      uint64_t imagined_steps, bool skipped);
  void on_incident(const std::string& what);

  void add_busy_time(OpKind kind, double seconds);

  // Appends the end-of-run row and fills the summary.
  void finalize();

  RunMetrics take();

 private:
  void eval_row_locked();

  std::mutex mu_;
  policy::GaussianPolicy eval_policy_;
  coord::Servers* servers_;
  Evaluator evaluator_;
  int eval_every_;
  std::function<std::pair<double, double>()> now_;
  RunMetrics metrics_;
  uint64_t real_env_steps_ = 0;
  uint64_t trajectories_ = 0;
  uint64_t imagined_steps_ = 0;
  double last_val_loss_ = 0.0;
  uint64_t eval_policy_version_ = 0;
};

// Data-collection worker: pull policy parameters, collect one trajectory in
// the real environment, push it to the data buffer. Falls back to its seeded
// initial policy while the policy server is empty.
class DataWorker {
 public:
  DataWorker(std::unique_ptr<envs::Env> env, const policy::GaussianPolicy& initial_policy,
             coord::Servers* servers, StopCriterion stop, envs::Pacing pacing,
             double rollout_duration, MetricsRecorder* recorder, Rng action_rng,
             Rng env_seed_rng);

  bool stop_reached() const;
  WorkItem begin_iteration();

  // Single-threaded drivers: one pull + rollout + push, committed in place.
  // Returns false when the stop criterion forbids another rollout.
  bool collect_and_push();

  double rollout_duration() const { return rollout_duration_; }
  const envs::Env& env() const { return *env_; }

 private:
  void pull_policy();
  envs::Trajectory collect();

  std::unique_ptr<envs::Env> env_;
  policy::GaussianPolicy policy_;
  coord::Servers* servers_;
  StopCriterion stop_;
  envs::Pacing pacing_;
  double rollout_duration_;
  MetricsRecorder* recorder_;
  Rng action_rng_;
  Rng env_seed_rng_;
  uint64_t policy_version_ = 0;
};

// Model-learning worker: drain the data buffer into the local FIFO dataset
// (resetting the early-stopping tracker when anything arrives), train the
// ensemble for one epoch, track validation loss, push model parameters.
// After early stopping it idles until new data shows up.
class ModelWorker {
 public:
  ModelWorker(model::Ensemble ensemble, size_t buffer_capacity, double validation_fraction,
              double beta_ema, bool early_stopping_enabled, double epoch_duration,
              coord::Servers* servers, MetricsRecorder* recorder, Rng rng);

  WorkItem begin_iteration();

  // Single-threaded drivers call these directly.
  bool drain_new_data();
  bool can_train() const;
  // One epoch + validation + tracker update + push; returns false when
  // nothing can be trained (no data or early-stopped).
  bool train_epoch_and_push(double* val_loss_out = nullptr);

  bool early_stopped() const { return early_stopped_; }
  int epochs_run() const { return epochs_run_; }
  double last_validation_loss() const { return last_val_loss_; }
  const model::Ensemble& ensemble() const { return ensemble_; }
  const model::DatasetBuffer& buffer() const { return buffer_; }

 private:
  // Trains one epoch and updates the tracker; throws NumericError on failure.
  double train_once();
  void restore_last_good();

  model::Ensemble ensemble_;
  model::DatasetBuffer buffer_;
  model::ValidationTracker tracker_;
  bool early_stopping_enabled_;
  double epoch_duration_;
  coord::Servers* servers_;
  MetricsRecorder* recorder_;
  Rng rng_;
  std::vector<nn::AdamState> adam_states_;
  std::vector<uint8_t> last_good_blob_;
  bool early_stopped_ = false;
  int epochs_run_ = 0;
  double last_val_loss_ = 0.0;
};

// Policy-improvement worker: pull model parameters, collect imagined samples
// through the local ensemble copy, take exactly one PPO gradient step, push
// policy parameters. Idles until the first model push. Initial states for
// imagined rollouts are sampled from the data server's recent-state ring.
class PolicyWorker {
 public:
  PolicyWorker(policy::GaussianPolicy policy, policy::ValueFunction value_fn,
               model::Ensemble ensemble_template, policy::TrainConfig train,
               policy::RewardFn reward_fn, std::vector<double> action_low,
               std::vector<double> action_high, double grad_step_duration,
               coord::Servers* servers, MetricsRecorder* recorder, Rng rng);

  WorkItem begin_iteration();

  // Single-threaded drivers: returns true when a gradient step was taken and
  // pushed (false when no model is available yet or the update was skipped).
  bool try_one_step();

  const policy::GaussianPolicy& policy() const { return policy_; }
  uint64_t steps_taken() const { return steps_taken_; }

 private:
  // Pull + imagine + update; fills the item minus duration. Returns false
  // when the worker has to idle.
  bool prepare_step(WorkItem* item);

  policy::GaussianPolicy policy_;
  policy::ValueFunction value_fn_;
  model::Ensemble ensemble_;
  policy::TrainConfig train_;
  policy::RewardFn reward_fn_;
  std::vector<double> action_low_;
  std::vector<double> action_high_;
  double grad_step_duration_;
  coord::Servers* servers_;
  MetricsRecorder* recorder_;
  Rng rng_;
  nn::AdamState policy_adam_;
  nn::AdamState value_adam_;
  uint64_t model_version_ = 0;
  bool model_loaded_ = false;
  uint64_t states_seen_ = 0;
  std::vector<std::vector<double>> init_pool_;
  int consecutive_skips_ = 0;
  uint64_t steps_taken_ = 0;
};

}  // namespace asyncdyna::workers

#endif  // ASYNCDYNA_WORKERS_HPP_
