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

#include "asyncdyna/workers.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "asyncdyna/error.hpp"

namespace asyncdyna::workers {

const char* run_mode_name(RunMode mode) {
  switch (mode) {
    case RunMode::kAsyncRealtime: return "async_realtime";
    case RunMode::kAsyncVirtual: return "async_virtual";
    case RunMode::kSync: return "sync";
    case RunMode::kPartialModelPolicy: return "partial_model_policy";
    case RunMode::kPartialPolicyData: return "partial_policy_data";
    case RunMode::kModelFree: return "model_free";
  }
  return "unknown";
}

RunMode run_mode_from_name(const std::string& name) {
  if (name == "async_realtime") return RunMode::kAsyncRealtime;
  if (name == "async_virtual") return RunMode::kAsyncVirtual;
  if (name == "sync") return RunMode::kSync;
  if (name == "partial_model_policy") return RunMode::kPartialModelPolicy;
  if (name == "partial_policy_data") return RunMode::kPartialPolicyData;
  if (name == "model_free") return RunMode::kModelFree;
  throw std::invalid_argument(
      "unknown run mode '" + name +
      "' (expected async_realtime | async_virtual | sync | partial_model_policy | "
      "partial_policy_data | model_free)");
}

void CostModel::validate() const {
  if (rollout_duration < 0.0 || epoch_duration <= 0.0 || grad_step_duration <= 0.0) {
    throw std::invalid_argument("cost model durations must be positive");
  }
}

void AblationParams::validate(RunMode mode) const {
  const bool partial =
      mode == RunMode::kPartialModelPolicy || mode == RunMode::kPartialPolicyData;
  if (rollouts_per_phase < 1) {
    throw std::invalid_argument("ablation: rollouts_per_phase must be >= 1");
  }
  if (partial && model_epochs < 1) {
    throw std::invalid_argument("ablation: model_epochs must be >= 1");
  }
  if (mode == RunMode::kPartialModelPolicy && policy_steps < 1) {
    throw std::invalid_argument("ablation: policy_steps must be >= 1");
  }
  if (policy_steps < 0 || initial_rollouts < 0) {
    throw std::invalid_argument("ablation: negative counts");
  }
}

// -- MetricsRecorder -----------------------------------------------------------

MetricsRecorder::MetricsRecorder(const policy::GaussianPolicy& eval_policy_prototype,
                                 coord::Servers* servers, Evaluator evaluator,
                                 int eval_every)
    : eval_policy_(eval_policy_prototype),
      servers_(servers),
      evaluator_(std::move(evaluator)),
      eval_every_(eval_every > 0 ? eval_every : 1) {
  now_ = [] { return std::pair<double, double>{0.0, 0.0}; };
}

void MetricsRecorder::set_time_source(std::function<std::pair<double, double>()> now) {
  std::lock_guard<std::mutex> lock(mu_);
  now_ = std::move(now);
}

void MetricsRecorder::eval_row_locked() {
  // Evaluate the freshest policy available on the server; before the first
  // push this is the seeded initial policy.
  const uint64_t server_version = servers_->policy.version();
  if (server_version != eval_policy_version_) {
    if (auto pulled = servers_->policy.pull()) {
      eval_policy_.load_blob(*pulled->blob);
      eval_policy_version_ = pulled->version;
    }
  }
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stddev = std::numeric_limits<double>::quiet_NaN();
  if (evaluator_) {
    auto [m, s] = evaluator_(eval_policy_);
    mean = m;
    stddev = s;
  }
  auto [wall, vt] = now_();
  MetricsRow row;
  row.wall_clock_s = wall;
  row.virtual_time_s = vt;
  row.real_env_steps = real_env_steps_;
  row.trajectories = trajectories_;
  row.avg_eval_return = mean;
  row.std_eval_return = stddev;
  row.model_val_loss = last_val_loss_;
  row.model_version = servers_->model.version();
  row.policy_version = server_version;
  row.imagined_steps = imagined_steps_;
  metrics_.rows.push_back(row);
}

void MetricsRecorder::on_trajectory(const envs::Trajectory& traj, uint64_t total,
                                    uint64_t policy_version_used) {
  std::lock_guard<std::mutex> lock(mu_);
  trajectories_ = total;
  real_env_steps_ += static_cast<uint64_t>(traj.length());
  metrics_.data_policy_versions.push_back(policy_version_used);
  if (total % static_cast<uint64_t>(eval_every_) == 0) {
    eval_row_locked();
  }
}

void MetricsRecorder::on_model_push(uint64_t version, double val_loss) {
  std::lock_guard<std::mutex> lock(mu_);
  last_val_loss_ = val_loss;
  metrics_.model_val_losses.push_back(val_loss);
  metrics_.summary.model_pushes = version;
}

void MetricsRecorder::on_policy_push(uint64_t version, uint64_t model_version_used,
                                     uint64_t imagined_steps, bool skipped) {
  std::lock_guard<std::mutex> lock(mu_);
  imagined_steps_ += imagined_steps;
  if (!skipped) metrics_.policy_model_versions.push_back(model_version_used);
  metrics_.summary.policy_pushes = version;
}

void MetricsRecorder::on_incident(const std::string& what) {
  std::lock_guard<std::mutex> lock(mu_);
  metrics_.incidents.push_back(what);
}

void MetricsRecorder::add_busy_time(OpKind kind, double seconds) {
  std::lock_guard<std::mutex> lock(mu_);
  switch (kind) {
    case OpKind::kRollout: metrics_.summary.data_busy_s += seconds; break;
    case OpKind::kTrainEpoch: metrics_.summary.model_busy_s += seconds; break;
    case OpKind::kGradStep: metrics_.summary.policy_busy_s += seconds; break;
    case OpKind::kIdle: break;
  }
}

void MetricsRecorder::finalize() {
  std::lock_guard<std::mutex> lock(mu_);
  eval_row_locked();
  const MetricsRow& last = metrics_.rows.back();
  metrics_.summary.trajectories = trajectories_;
  metrics_.summary.real_env_steps = real_env_steps_;
  metrics_.summary.imagined_steps = imagined_steps_;
  metrics_.summary.final_return_mean = last.avg_eval_return;
  metrics_.summary.final_return_std = last.std_eval_return;
  metrics_.summary.wall_clock_s = last.wall_clock_s;
  metrics_.summary.virtual_time_s = last.virtual_time_s;
  metrics_.summary.incidents = metrics_.incidents.size();
}

RunMetrics MetricsRecorder::take() {
  std::lock_guard<std::mutex> lock(mu_);
  return std::move(metrics_);
}

// -- DataWorker ------------------------------------------------------------------

DataWorker::DataWorker(std::unique_ptr<envs::Env> env,
                       const policy::GaussianPolicy& initial_policy,
                       coord::Servers* servers, StopCriterion stop, envs::Pacing pacing,
                       double rollout_duration, MetricsRecorder* recorder, Rng action_rng,
                       Rng env_seed_rng)
    : env_(std::move(env)),
      policy_(initial_policy),
      servers_(servers),
      stop_(stop),
      pacing_(pacing),
      rollout_duration_(rollout_duration),
      recorder_(recorder),
      action_rng_(action_rng),
      env_seed_rng_(env_seed_rng) {
  if (rollout_duration_ <= 0.0) {
    rollout_duration_ = envs::rollout_virtual_duration(env_->spec(), pacing.speed_multiplier);
  }
}

bool DataWorker::stop_reached() const {
  return servers_->data.total_pushed() >= stop_.max_trajectories;
}

void DataWorker::pull_policy() {
  if (auto pulled = servers_->policy.pull()) {
    if (pulled->version != policy_version_) {
      policy_.load_blob(*pulled->blob);
      policy_version_ = pulled->version;
    }
  }
}

envs::Trajectory DataWorker::collect() {
  const uint64_t env_seed = env_seed_rng_.next_u64();
  envs::PolicyFn act = [this](const std::vector<double>& obs) {
    return policy_.sample_action(obs, action_rng_).first;
  };
  return envs::collect_rollout(*env_, act, pacing_, env_seed);
}

WorkItem DataWorker::begin_iteration() {
  WorkItem item;
  item.duration = 0.1 * rollout_duration_;
  if (stop_reached()) return item;

  pull_policy();
  envs::Trajectory traj;
  try {
    traj = collect();
  } catch (const NumericError& e) {
    recorder_->on_incident(std::string("data worker: ") + e.what());
    return item;
  }

  item.kind = OpKind::kRollout;
  item.duration = rollout_duration_;
  item.version_pulled = policy_version_;
  const uint64_t used_version = policy_version_;
  item.commit = [this, traj = std::move(traj), used_version]() mutable -> uint64_t {
    const uint64_t total = servers_->data.push(traj);
    recorder_->on_trajectory(traj, total, used_version);
    recorder_->add_busy_time(OpKind::kRollout, rollout_duration_);
    return total;
  };
  return item;
}

bool DataWorker::collect_and_push() {
  if (stop_reached()) return false;
  WorkItem item = begin_iteration();
  // A numeric failure leaves the item idle: the rollout was discarded but the
  // loop should continue.
  if (item.kind != OpKind::kIdle) item.commit();
  return true;
}

// -- ModelWorker ------------------------------------------------------------------

ModelWorker::ModelWorker(model::Ensemble ensemble, size_t buffer_capacity,
                         double validation_fraction, double beta_ema,
                         bool early_stopping_enabled, double epoch_duration,
                         coord::Servers* servers, MetricsRecorder* recorder, Rng rng)
    : ensemble_(std::move(ensemble)),
      buffer_(buffer_capacity, validation_fraction),
      early_stopping_enabled_(early_stopping_enabled),
      epoch_duration_(epoch_duration),
      servers_(servers),
      recorder_(recorder),
      rng_(rng) {
  tracker_.beta = beta_ema;
  adam_states_ = ensemble_.make_adam_states();
  last_good_blob_ = ensemble_.to_blob();
}

bool ModelWorker::drain_new_data() {
  std::vector<envs::Trajectory> arrived = servers_->data.drain();
  if (arrived.empty()) return false;
  for (const envs::Trajectory& traj : arrived) buffer_.append(traj);
  ensemble_.refit_normalizers(buffer_);
  tracker_.reset();
  early_stopped_ = false;
  return true;
}

bool ModelWorker::can_train() const {
  return !early_stopped_ && buffer_.train_size() > 0;
}

double ModelWorker::train_once() {
  const std::vector<double> train_losses = ensemble_.train_epoch(buffer_, &adam_states_, rng_);
  double val = 0.0;
  if (buffer_.validation_size() > 0) {
    val = ensemble_.validation_loss(buffer_);
  } else {
    // Degenerate tiny datasets: track the mean training loss instead.
    for (double l : train_losses) val += l;
    val /= static_cast<double>(train_losses.size());
  }
  if (early_stopping_enabled_ && tracker_.should_stop(val)) {
    early_stopped_ = true;
  }
  last_val_loss_ = val;
  epochs_run_ += 1;
  return val;
}

void ModelWorker::restore_last_good() {
  ensemble_.load_blob(last_good_blob_);
  adam_states_ = ensemble_.make_adam_states();
}

WorkItem ModelWorker::begin_iteration() {
  WorkItem item;
  item.duration = 0.1 * epoch_duration_;
  drain_new_data();
  if (!can_train()) return item;

  double val = 0.0;
  try {
    val = train_once();
  } catch (const NumericError& e) {
    recorder_->on_incident(std::string("model worker: ") + e.what());
    restore_last_good();
    return item;
  }

  item.kind = OpKind::kTrainEpoch;
  item.duration = epoch_duration_;
  item.commit = [this, val]() -> uint64_t {
    last_good_blob_ = ensemble_.to_blob();
    const uint64_t version = servers_->model.push(last_good_blob_);
    recorder_->on_model_push(version, val);
    recorder_->add_busy_time(OpKind::kTrainEpoch, epoch_duration_);
    return version;
  };
  return item;
}

bool ModelWorker::train_epoch_and_push(double* val_loss_out) {
  drain_new_data();
  if (!can_train()) return false;
  double val = 0.0;
  try {
    val = train_once();
  } catch (const NumericError& e) {
    recorder_->on_incident(std::string("model worker: ") + e.what());
    restore_last_good();
    return false;
  }
  last_good_blob_ = ensemble_.to_blob();
  const uint64_t version = servers_->model.push(last_good_blob_);
  recorder_->on_model_push(version, val);
  if (val_loss_out) *val_loss_out = val;
  return true;
}

// -- PolicyWorker ------------------------------------------------------------------

PolicyWorker::PolicyWorker(policy::GaussianPolicy policy, policy::ValueFunction value_fn,
                           model::Ensemble ensemble_template, policy::TrainConfig train,
                           policy::RewardFn reward_fn, std::vector<double> action_low,
                           std::vector<double> action_high, double grad_step_duration,
                           coord::Servers* servers, MetricsRecorder* recorder, Rng rng)
    : policy_(std::move(policy)),
      value_fn_(std::move(value_fn)),
      ensemble_(std::move(ensemble_template)),
      train_(train),
      reward_fn_(std::move(reward_fn)),
      action_low_(std::move(action_low)),
      action_high_(std::move(action_high)),
      grad_step_duration_(grad_step_duration),
      servers_(servers),
      recorder_(recorder),
      rng_(rng),
      policy_adam_(policy_.param_count(), {.lr = train.policy_lr}),
      value_adam_(value_fn_.param_count(), {.lr = train.value_lr}) {
  train_.validate();
}

bool PolicyWorker::prepare_step(WorkItem* item) {
  auto pulled = servers_->model.pull();
  if (!pulled) return false;
  if (!model_loaded_ || pulled->version != model_version_) {
    ensemble_.load_blob(*pulled->blob);
    model_version_ = pulled->version;
    model_loaded_ = true;
  }

  const uint64_t total = servers_->data.total_pushed();
  if (total != states_seen_ || init_pool_.empty()) {
    init_pool_ = servers_->data.recent_states();
    states_seen_ = total;
  }
  if (init_pool_.empty()) return false;

  std::vector<std::vector<double>> inits(train_.imagined_paths);
  for (int i = 0; i < train_.imagined_paths; ++i) {
    inits[i] = init_pool_[rng_.uniform_int(static_cast<int>(init_pool_.size()))];
  }

  policy::ImaginedBatch batch;
  try {
    batch = policy::imagine_rollouts(policy_, value_fn_, ensemble_, inits,
                                     train_.imagined_horizon, reward_fn_, action_low_,
                                     action_high_, train_, rng_);
  } catch (const NumericError& e) {
    recorder_->on_incident(std::string("policy worker (imagine): ") + e.what());
    return false;
  }

  const uint64_t steps = batch.size();
  const policy::PpoStats stats =
      policy::ppo_update(&policy_, &value_fn_, batch, train_, &policy_adam_, &value_adam_);
  if (stats.skipped) {
    recorder_->on_incident("policy worker: non-finite update skipped");
    consecutive_skips_ += 1;
    if (consecutive_skips_ >= 3) {
      // Force a fresh model pull and imagined batch next iteration.
      model_loaded_ = false;
      consecutive_skips_ = 0;
    }
    recorder_->on_policy_push(servers_->policy.version(), model_version_, steps,
                              /*skipped=*/true);
    return false;
  }
  consecutive_skips_ = 0;
  steps_taken_ += 1;

  item->kind = OpKind::kGradStep;
  item->version_pulled = model_version_;
  const uint64_t used_model = model_version_;
  item->commit = [this, used_model, steps]() -> uint64_t {
    const uint64_t version = servers_->policy.push(policy_.to_blob());
    recorder_->on_policy_push(version, used_model, steps, /*skipped=*/false);
    recorder_->add_busy_time(OpKind::kGradStep, grad_step_duration_);
    return version;
  };
  return true;
}

WorkItem PolicyWorker::begin_iteration() {
  WorkItem item;
  item.duration = 0.1 * grad_step_duration_;
  if (!prepare_step(&item)) return item;
  item.duration = grad_step_duration_;
  return item;
}

bool PolicyWorker::try_one_step() {
  WorkItem item = begin_iteration();
  if (item.kind == OpKind::kIdle) return false;
  item.commit();
  return true;
}

}  // namespace asyncdyna::workers
