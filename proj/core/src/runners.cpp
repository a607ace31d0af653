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

#include "asyncdyna/runners.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "asyncdyna/error.hpp"

namespace asyncdyna::workers {

namespace {

// Fixed salts for deriving independent random streams from the run seed.
// The env-seed stream is separate from the action stream so that two modes
// run from the same seed collect rollouts from identical initial states.
enum Salt : uint64_t {
  kSaltPolicyInit = 1,
  kSaltValueInit = 2,
  kSaltEnsembleInit = 3,
  kSaltDataActions = 4,
  kSaltEnvSeeds = 5,
  kSaltModelTrain = 6,
  kSaltPolicyTrain = 7,
  kSaltScheduler = 9,
};

uint64_t derive_seed(uint64_t run_seed, uint64_t salt) {
  return Rng(run_seed).split(salt).next_u64();
}

struct RunContext {
  explicit RunContext(const RunConfig& cfg) : config(cfg) {
    config.validate();

    std::unique_ptr<envs::Env> env = envs::make_env(cfg.env_name, cfg.horizon, cfg.dt);
    const int obs_dim = env->spec().obs_dim;
    const int act_dim = env->spec().act_dim;

    policy::GaussianPolicy initial_policy(obs_dim, act_dim, cfg.policy,
                                          derive_seed(cfg.seed, kSaltPolicyInit));
    policy::ValueFunction value_fn(obs_dim, cfg.policy,
                                   derive_seed(cfg.seed, kSaltValueInit));
    model::Ensemble ensemble(obs_dim, act_dim, cfg.ensemble,
                             derive_seed(cfg.seed, kSaltEnsembleInit));

    recorder = std::make_unique<MetricsRecorder>(initial_policy, &servers, cfg.evaluator,
                                                 cfg.eval_every);
    recorder->set_time_source([this] {
      return std::pair<double, double>{clock_s, clock_s};
    });

    const envs::Pacing pacing{cfg.mode == RunMode::kAsyncRealtime
                                  ? envs::PacingMode::kRealtime
                                  : envs::PacingMode::kUnpaced,
                              cfg.speed_multiplier};
    const double rollout_duration =
        cfg.cost.rollout_duration > 0.0
            ? cfg.cost.rollout_duration
            : envs::rollout_virtual_duration(env->spec(), cfg.speed_multiplier);

    // Reward function handed to the policy worker; it closes over a private
    // env clone but only ever calls the pure reward, never reset/step.
    std::shared_ptr<envs::Env> reward_env = env->clone();
    policy::RewardFn reward_fn = [reward_env](const std::vector<double>& obs,
                                              const std::vector<double>& action) {
      return reward_env->reward(obs, action);
    };

    const StopCriterion stop{cfg.max_trajectories};
    const std::vector<double> action_low = env->spec().action_low;
    const std::vector<double> action_high = env->spec().action_high;
    data = std::make_unique<DataWorker>(
        std::move(env), initial_policy, &servers, stop, pacing, rollout_duration,
        recorder.get(), Rng(derive_seed(cfg.seed, kSaltDataActions)),
        Rng(derive_seed(cfg.seed, kSaltEnvSeeds)));
    model = std::make_unique<ModelWorker>(
        std::move(ensemble), cfg.buffer_capacity_trajectories * spec_horizon(),
        cfg.validation_fraction, cfg.beta_ema, cfg.early_stopping, cfg.cost.epoch_duration,
        &servers, recorder.get(), Rng(derive_seed(cfg.seed, kSaltModelTrain)));
    policy_worker = std::make_unique<PolicyWorker>(
        std::move(initial_policy), std::move(value_fn),
        model::Ensemble(obs_dim, act_dim, cfg.ensemble,
                        derive_seed(cfg.seed, kSaltEnsembleInit)),
        cfg.train, std::move(reward_fn), action_low, action_high,
        cfg.cost.grad_step_duration, &servers, recorder.get(),
        Rng(derive_seed(cfg.seed, kSaltPolicyTrain)));
  }

  size_t spec_horizon() const {
    return static_cast<size_t>(data ? data->env().spec().horizon
                                    : (config.horizon > 0 ? config.horizon : 200));
  }

  bool stop() const {
    return servers.data.total_pushed() >= config.max_trajectories;
  }

  // Advances the single-threaded virtual clock, runs the commit, records the
  // trace line. Returns false when the worker had nothing to do.
  bool drive(const std::string& name, WorkItem item) {
    if (item.kind == OpKind::kIdle) return false;
    clock_s += item.duration;
    const uint64_t pushed = item.commit();
    events.push_back(EventRecord{clock_s, name, op_name(item.kind), item.version_pulled,
                                 pushed});
    return true;
  }

  bool drive_data() { return drive("data", data->begin_iteration()); }
  bool drive_model() { return drive("model", model->begin_iteration()); }
  bool drive_policy() { return drive("policy", policy_worker->begin_iteration()); }

  RunMetrics finish() {
    recorder->finalize();
    RunMetrics metrics = recorder->take();
    if (metrics.events.empty()) metrics.events = std::move(events);
    metrics.summary.env = config.env_name;
    metrics.summary.mode = run_mode_name(config.mode);
    metrics.summary.seed = config.seed;
    return metrics;
  }

  RunConfig config;
  coord::Servers servers;
  std::unique_ptr<MetricsRecorder> recorder;
  std::unique_ptr<DataWorker> data;
  std::unique_ptr<ModelWorker> model;
  std::unique_ptr<PolicyWorker> policy_worker;
  double clock_s = 0.0;
  std::vector<EventRecord> events;
};

// Buffer capacity must cover at least one trajectory.
size_t checked_capacity(const RunConfig& cfg) {
  if (cfg.buffer_capacity_trajectories == 0) {
    throw std::invalid_argument("buffer capacity must be >= 1 trajectory");
  }
  return cfg.buffer_capacity_trajectories;
}

RunMetrics run_async_virtual(RunContext& ctx) {
  VirtualScheduler scheduler(derive_seed(ctx.config.seed, kSaltScheduler));
  ctx.recorder->set_time_source([&scheduler] {
    const double t = scheduler.now_seconds();
    return std::pair<double, double>{t, t};
  });
  scheduler.add_worker("data", 0, [&ctx] { return ctx.data->begin_iteration(); });
  scheduler.add_worker("model", 1, [&ctx] { return ctx.model->begin_iteration(); });
  scheduler.add_worker("policy", 2, [&ctx] { return ctx.policy_worker->begin_iteration(); });

  std::vector<EventRecord> trace = scheduler.run([&ctx] { return ctx.stop(); });
  ctx.clock_s = scheduler.now_seconds();
  ctx.recorder->set_time_source([&ctx] {
    return std::pair<double, double>{ctx.clock_s, ctx.clock_s};
  });
  RunMetrics metrics = ctx.finish();
  metrics.events = std::move(trace);
  return metrics;
}

RunMetrics run_async_realtime(RunContext& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  ctx.recorder->set_time_source([t0] {
    const double elapsed = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
    return std::pair<double, double>{elapsed, elapsed};
  });

  struct Lane {
    std::vector<std::function<WorkItem()>> begins;
  };
  std::vector<std::function<WorkItem()>> all = {
      [&ctx] { return ctx.data->begin_iteration(); },
      [&ctx] { return ctx.model->begin_iteration(); },
      [&ctx] { return ctx.policy_worker->begin_iteration(); },
  };
  int lanes_count = 3;
  if (ctx.config.threads_cap > 0) {
    lanes_count = std::min<int>(3, ctx.config.threads_cap);
  }
  std::vector<Lane> lanes(lanes_count);
  for (size_t i = 0; i < all.size(); ++i) {
    lanes[i % lanes_count].begins.push_back(std::move(all[i]));
  }

  auto lane_loop = [&ctx](Lane lane) {
    while (!ctx.stop()) {
      bool did_work = false;
      for (auto& begin : lane.begins) {
        if (ctx.stop()) break;
        WorkItem item = begin();
        if (item.kind != OpKind::kIdle) {
          item.commit();
          did_work = true;
        }
      }
      if (!did_work) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(lanes.size());
  for (Lane& lane : lanes) threads.emplace_back(lane_loop, std::move(lane));
  for (std::thread& t : threads) t.join();

  return ctx.finish();
}

}  // namespace

void RunConfig::validate() const {
  if (max_trajectories == 0) {
    throw std::invalid_argument("max_trajectories must be >= 1");
  }
  if (speed_multiplier <= 0.0) {
    throw std::invalid_argument("speed multiplier must be positive");
  }
  if (eval_every < 1 || eval_episodes < 1) {
    throw std::invalid_argument("eval settings must be >= 1");
  }
  if (max_model_epochs_per_iteration < 1) {
    throw std::invalid_argument("max_model_epochs_per_iteration must be >= 1");
  }
  cost.validate();
  train.validate();
  ablation.validate(mode);
  checked_capacity(*this);
}

RunMetrics run(const RunConfig& config) {
  switch (config.mode) {
    case RunMode::kAsyncRealtime:
    case RunMode::kAsyncVirtual:
      return run_async(config);
    case RunMode::kSync:
      return run_sync(config);
    case RunMode::kPartialModelPolicy:
      return run_partial_model_policy(config);
    case RunMode::kPartialPolicyData:
      return run_partial_policy_data(config);
    case RunMode::kModelFree:
      return run_model_free(config);
  }
  throw std::invalid_argument("run: unknown mode");
}

RunMetrics run_async(const RunConfig& config) {
  RunContext ctx(config);
  if (config.mode == RunMode::kAsyncVirtual) return run_async_virtual(ctx);
  if (config.mode == RunMode::kAsyncRealtime) return run_async_realtime(ctx);
  throw std::invalid_argument("run_async: config.mode is not an async mode");
}

RunMetrics run_sync(const RunConfig& config) {
  if (config.mode != RunMode::kSync) {
    throw std::invalid_argument("run_sync: config.mode must be sync");
  }
  RunContext ctx(config);
  const int n = config.ablation.rollouts_per_phase;
  const int g = config.ablation.policy_steps;

  while (!ctx.stop()) {
    for (int i = 0; i < n && !ctx.stop(); ++i) ctx.drive_data();
    int epochs = 0;
    while (epochs < config.max_model_epochs_per_iteration && ctx.drive_model()) {
      epochs += 1;
    }
    for (int step = 0; step < g; ++step) {
      if (!ctx.drive_policy()) break;
    }
  }
  return ctx.finish();
}

RunMetrics run_partial_model_policy(const RunConfig& config) {
  if (config.mode != RunMode::kPartialModelPolicy) {
    throw std::invalid_argument("run_partial_model_policy: wrong mode");
  }
  RunContext ctx(config);
  const int n = config.ablation.rollouts_per_phase;
  const int e = config.ablation.model_epochs;
  const int g = config.ablation.policy_steps;

  while (!ctx.stop()) {
    for (int i = 0; i < n && !ctx.stop(); ++i) ctx.drive_data();

    // Alternate E model epochs with G policy steps until the ensemble
    // early-stops or the per-iteration epoch budget runs out. The block that
    // triggers the stop still gets its G policy steps.
    int epochs_this_iter = 0;
    while (epochs_this_iter < config.max_model_epochs_per_iteration &&
           !ctx.model->early_stopped()) {
      int block = 0;
      while (block < e && epochs_this_iter < config.max_model_epochs_per_iteration) {
        if (!ctx.drive_model()) break;
        block += 1;
        epochs_this_iter += 1;
      }
      if (block == 0) break;  // no data yet
      for (int step = 0; step < g; ++step) {
        if (!ctx.drive_policy()) break;
      }
    }
  }
  return ctx.finish();
}

RunMetrics run_partial_policy_data(const RunConfig& config) {
  if (config.mode != RunMode::kPartialPolicyData) {
    throw std::invalid_argument("run_partial_policy_data: wrong mode");
  }
  RunContext ctx(config);
  const int n = config.ablation.rollouts_per_phase;
  const int g = config.ablation.policy_steps;
  const int warmup = config.ablation.initial_rollouts > 0 ? config.ablation.initial_rollouts
                                                          : n;

  for (int i = 0; i < warmup && !ctx.stop(); ++i) ctx.drive_data();

  while (!ctx.stop()) {
    int epochs = 0;
    while (epochs < config.max_model_epochs_per_iteration && ctx.drive_model()) {
      epochs += 1;
    }
    for (int rep = 0; rep < n; ++rep) {
      for (int step = 0; step < g; ++step) {
        if (!ctx.drive_policy()) break;
      }
      if (ctx.stop()) break;
      ctx.drive_data();
    }
  }
  return ctx.finish();
}

RunMetrics run_model_free(const RunConfig& config) {
  if (config.mode != RunMode::kModelFree) {
    throw std::invalid_argument("run_model_free: wrong mode");
  }
  RunContext ctx(config);
  const int n = config.ablation.rollouts_per_phase;
  const int g = config.ablation.policy_steps;

  // Plain PPO: the policy worker's machinery is bypassed; updates run on real
  // trajectories with log-probs recorded at collection time.
  std::unique_ptr<envs::Env> env = envs::make_env(config.env_name, config.horizon, config.dt);
  const int obs_dim = env->spec().obs_dim;
  const int act_dim = env->spec().act_dim;
  policy::GaussianPolicy agent(obs_dim, act_dim, config.policy,
                               derive_seed(config.seed, kSaltPolicyInit));
  policy::ValueFunction value_fn(obs_dim, config.policy,
                                 derive_seed(config.seed, kSaltValueInit));
  nn::AdamState policy_adam(agent.param_count(), {.lr = config.train.policy_lr});
  nn::AdamState value_adam(value_fn.param_count(), {.lr = config.train.value_lr});
  Rng action_rng(derive_seed(config.seed, kSaltDataActions));
  Rng env_seed_rng(derive_seed(config.seed, kSaltEnvSeeds));
  const double rollout_duration =
      config.cost.rollout_duration > 0.0
          ? config.cost.rollout_duration
          : envs::rollout_virtual_duration(env->spec(), config.speed_multiplier);

  while (!ctx.stop()) {
    // Collect a batch of real trajectories. PPO needs the raw sampled actions
    // and their log-probs; the trajectory itself records the executed
    // (clipped) actions, so keep a parallel raw-action record.
    std::vector<envs::Trajectory> batch_trajs;
    std::vector<std::vector<std::vector<double>>> raw_actions;
    std::vector<std::vector<double>> log_probs;
    for (int i = 0; i < n && !ctx.stop(); ++i) {
      std::vector<double> lps;
      std::vector<std::vector<double>> raws;
      envs::PolicyFn act = [&](const std::vector<double>& obs) {
        auto [a, lp] = agent.sample_action(obs, action_rng);
        lps.push_back(lp);
        raws.push_back(a);
        return a;
      };
      envs::Trajectory traj =
          envs::collect_rollout(*env, act, envs::Pacing{}, env_seed_rng.next_u64());
      ctx.clock_s += rollout_duration;
      const uint64_t total = ctx.servers.data.push(traj);
      ctx.recorder->on_trajectory(traj, total, ctx.servers.policy.version());
      ctx.events.push_back(EventRecord{ctx.clock_s, "data", "rollout",
                                       ctx.servers.policy.version(), total});
      batch_trajs.push_back(std::move(traj));
      raw_actions.push_back(std::move(raws));
      log_probs.push_back(std::move(lps));
    }
    if (batch_trajs.empty()) break;

    // Assemble one PPO batch from the real transitions.
    size_t total_steps = 0;
    for (const auto& t : batch_trajs) total_steps += t.transitions.size();
    policy::ImaginedBatch batch;
    batch.states = nn::Matrix(static_cast<int>(total_steps), obs_dim);
    batch.actions = nn::Matrix(static_cast<int>(total_steps), act_dim);
    batch.rewards.reserve(total_steps);
    batch.old_log_probs.reserve(total_steps);
    batch.advantages.resize(total_steps);
    batch.value_targets.resize(total_steps);
    int row = 0;
    for (size_t ti = 0; ti < batch_trajs.size(); ++ti) {
      const envs::Trajectory& traj = batch_trajs[ti];
      const int len = traj.length();
      nn::Matrix states(len, obs_dim);
      for (int t = 0; t < len; ++t) states.set_row(t, traj.transitions[t].s);
      std::vector<double> values = value_fn.values(states);
      std::vector<double> rewards(len);
      for (int t = 0; t < len; ++t) rewards[t] = traj.transitions[t].r;
      const double bootstrap = value_fn.value(traj.transitions.back().s_next);
      auto [adv, tgt] = policy::compute_gae(rewards, values, bootstrap, config.train.gamma,
                                            config.train.gae_lambda);
      for (int t = 0; t < len; ++t) {
        batch.states.set_row(row, traj.transitions[t].s);
        batch.actions.set_row(row, raw_actions[ti][t]);
        batch.rewards.push_back(rewards[t]);
        batch.old_log_probs.push_back(log_probs[ti][t]);
        batch.advantages[row] = adv[t];
        batch.value_targets[row] = tgt[t];
        ++row;
      }
    }
    double mean = 0.0;
    for (double a : batch.advantages) mean += a;
    mean /= static_cast<double>(total_steps);
    double var = 0.0;
    for (double a : batch.advantages) var += (a - mean) * (a - mean);
    const double stddev = std::sqrt(var / static_cast<double>(total_steps));
    const double denom = stddev > 1e-12 ? stddev : 1.0;
    for (double& a : batch.advantages) a = (a - mean) / denom;

    for (int step = 0; step < g; ++step) {
      const policy::PpoStats stats = policy::ppo_update(&agent, &value_fn, batch,
                                                        config.train, &policy_adam,
                                                        &value_adam);
      ctx.clock_s += config.cost.grad_step_duration;
      if (stats.skipped) {
        ctx.recorder->on_incident("model-free update skipped (non-finite loss)");
        break;
      }
      const uint64_t version = ctx.servers.policy.push(agent.to_blob());
      ctx.recorder->on_policy_push(version, 0, 0, false);
      ctx.events.push_back(
          EventRecord{ctx.clock_s, "policy", "grad_step", 0, version});
    }
  }
  return ctx.finish();
}

}  // namespace asyncdyna::workers
