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

#include "asyncdyna/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "asyncdyna/error.hpp"

namespace asyncdyna::policy {

// -- GaussianPolicy -------------------------------------------------------------

GaussianPolicy::GaussianPolicy(int obs_dim, int act_dim, const PolicyConfig& config,
                               uint64_t seed)
    : obs_dim_(obs_dim), act_dim_(act_dim) {
  mean_spec_.layer_sizes.push_back(obs_dim);
  for (int h : config.hidden) mean_spec_.layer_sizes.push_back(h);
  mean_spec_.layer_sizes.push_back(act_dim);
  mean_spec_.activation = config.activation;
  mean_spec_.validate();

  Rng rng(seed);
  params_ = nn::init_params(mean_spec_, rng);
  params_.resize(params_.size() + act_dim, config.log_std_init);
  clamp_log_std();
}

std::span<const double> GaussianPolicy::log_std() const {
  return std::span<const double>(params_).subspan(mean_spec_.param_count());
}

std::vector<double> GaussianPolicy::mean_action(std::span<const double> obs) const {
  const std::span<const double> mlp =
      std::span<const double>(params_).subspan(0, mean_spec_.param_count());
  return nn::mlp_forward(mean_spec_, mlp, obs);
}

nn::Matrix GaussianPolicy::mean_actions(const nn::Matrix& obs, nn::ForwardTrace* trace) const {
  const std::span<const double> mlp =
      std::span<const double>(params_).subspan(0, mean_spec_.param_count());
  return nn::mlp_forward(mean_spec_, mlp, obs, trace);
}

std::pair<std::vector<double>, double> GaussianPolicy::sample_action(
    std::span<const double> obs, Rng& rng) const {
  std::vector<double> mean = mean_action(obs);
  const std::span<const double> ls = log_std();
  std::vector<double> action(act_dim_);
  for (int d = 0; d < act_dim_; ++d) {
    action[d] = mean[d] + std::exp(ls[d]) * rng.normal();
  }
  const double lp = nn::gaussian_log_density(mean, ls, action);
  return {std::move(action), lp};
}

double GaussianPolicy::log_prob(std::span<const double> obs,
                                std::span<const double> action) const {
  return nn::gaussian_log_density(mean_action(obs), log_std(), action);
}

void GaussianPolicy::clamp_log_std() {
  for (size_t i = mean_spec_.param_count(); i < params_.size(); ++i) {
    params_[i] = std::clamp(params_[i], kLogStdMin, kLogStdMax);
  }
}

std::vector<uint8_t> GaussianPolicy::to_blob() const {
  std::vector<uint8_t> blob;
  const std::span<const double> all(params_);
  nn::serialize_params(all.subspan(0, mean_spec_.param_count()), &blob);
  nn::serialize_params(all.subspan(mean_spec_.param_count()), &blob);
  return blob;
}

void GaussianPolicy::load_blob(std::span<const uint8_t> blob) {
  size_t off = 0;
  nn::ParamVector mean = nn::deserialize_params(blob, &off);
  nn::ParamVector ls = nn::deserialize_params(blob, &off);
  if (static_cast<int>(mean.size()) != mean_spec_.param_count() ||
      static_cast<int>(ls.size()) != act_dim_) {
    throw std::invalid_argument("GaussianPolicy::load_blob: size mismatch");
  }
  std::memcpy(params_.data(), mean.data(), sizeof(double) * mean.size());
  std::memcpy(params_.data() + mean.size(), ls.data(), sizeof(double) * ls.size());
}

// -- ValueFunction ----------------------------------------------------------------

ValueFunction::ValueFunction(int obs_dim, const PolicyConfig& config, uint64_t seed) {
  spec_.layer_sizes.push_back(obs_dim);
  for (int h : config.hidden) spec_.layer_sizes.push_back(h);
  spec_.layer_sizes.push_back(1);
  spec_.activation = config.activation;
  spec_.validate();
  Rng rng(seed);
  params_ = nn::init_params(spec_, rng);
}

double ValueFunction::value(std::span<const double> obs) const {
  return nn::mlp_forward(spec_, params_, obs)[0];
}

std::vector<double> ValueFunction::values(const nn::Matrix& obs) const {
  nn::Matrix out = nn::mlp_forward(spec_, params_, obs);
  return out.data;
}

// -- TrainConfig -------------------------------------------------------------------

void TrainConfig::validate() const {
  if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("gamma must be in (0, 1]");
  if (gae_lambda < 0.0 || gae_lambda > 1.0) {
    throw std::invalid_argument("gae_lambda must be in [0, 1]");
  }
  if (clip <= 0.0) throw std::invalid_argument("clip must be positive");
  if (imagined_horizon < 1) throw std::invalid_argument("imagined_horizon must be >= 1");
  if (imagined_paths < 1) throw std::invalid_argument("imagined_paths must be >= 1");
}

// -- GAE ----------------------------------------------------------------------------

std::pair<std::vector<double>, std::vector<double>> compute_gae(
    std::span<const double> rewards, std::span<const double> values,
    double bootstrap_value, double gamma, double gae_lambda) {
  if (rewards.size() != values.size()) {
    throw std::invalid_argument("compute_gae: length mismatch");
  }
  const int n = static_cast<int>(rewards.size());
  std::vector<double> advantages(n, 0.0), targets(n, 0.0);
  double running = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    const double next_v = (t == n - 1) ? bootstrap_value : values[t + 1];
    const double delta = rewards[t] + gamma * next_v - values[t];
    running = delta + gamma * gae_lambda * running;
    advantages[t] = running;
    targets[t] = running + values[t];
  }
  return {std::move(advantages), std::move(targets)};
}

// -- imagined rollouts ----------------------------------------------------------------

ImaginedBatch imagine_rollouts(const GaussianPolicy& policy, const ValueFunction& value_fn,
                               const model::DynamicsModel& ensemble,
                               const std::vector<std::vector<double>>& init_states,
                               int horizon, const RewardFn& reward_fn,
                               std::span<const double> action_low,
                               std::span<const double> action_high,
                               const TrainConfig& config, Rng& rng) {
  if (init_states.empty()) throw std::invalid_argument("imagine_rollouts: no init states");
  if (horizon < 1) throw std::invalid_argument("imagine_rollouts: horizon must be >= 1");
  const int paths = static_cast<int>(init_states.size());
  const int obs_dim = policy.obs_dim();
  const int act_dim = policy.act_dim();
  if (static_cast<int>(action_low.size()) != act_dim ||
      static_cast<int>(action_high.size()) != act_dim) {
    throw std::invalid_argument("imagine_rollouts: action bound dimension mismatch");
  }

  // Per-path storage; paths may truncate early on non-finite predictions.
  struct Path {
    std::vector<std::vector<double>> states;
    std::vector<std::vector<double>> actions;
    std::vector<double> rewards;
    std::vector<double> log_probs;
    bool truncated = false;
  };
  std::vector<Path> path_data(paths);
  for (int p = 0; p < paths; ++p) path_data[p].states.push_back(init_states[p]);

  std::vector<int> alive(paths);
  for (int p = 0; p < paths; ++p) alive[p] = p;
  const std::span<const double> log_std = policy.log_std();

  for (int t = 0; t < horizon && !alive.empty(); ++t) {
    const int n = static_cast<int>(alive.size());
    nn::Matrix obs(n, obs_dim);
    for (int i = 0; i < n; ++i) obs.set_row(i, path_data[alive[i]].states.back());

    nn::Matrix means = policy.mean_actions(obs);
    nn::Matrix acts(n, act_dim);  // executed (clipped) actions for the model
    for (int i = 0; i < n; ++i) {
      Path& path = path_data[alive[i]];
      std::vector<double> a(act_dim);
      for (int d = 0; d < act_dim; ++d) {
        a[d] = means(i, d) + std::exp(log_std[d]) * rng.normal();
        acts(i, d) = std::clamp(a[d], action_low[d], action_high[d]);
      }
      const double lp = nn::gaussian_log_density(means.row_vec(i), log_std, a);
      path.rewards.push_back(reward_fn(path.states.back(), a));
      path.log_probs.push_back(lp);
      path.actions.push_back(std::move(a));
    }

    nn::Matrix next = ensemble.predict_batch(obs, acts, rng);
    std::vector<int> still_alive;
    for (int i = 0; i < n; ++i) {
      Path& path = path_data[alive[i]];
      std::vector<double> s_next = next.row_vec(i);
      if (!nn::all_finite(s_next)) {
        // Drop the step that produced the bad state as well.
        path.rewards.pop_back();
        path.log_probs.pop_back();
        path.actions.pop_back();
        path.truncated = true;
        continue;
      }
      path.states.push_back(std::move(s_next));
      still_alive.push_back(alive[i]);
    }
    alive = std::move(still_alive);
  }

  // Assemble the batch with per-path GAE.
  ImaginedBatch batch;
  size_t total = 0;
  for (const Path& p : path_data) total += p.rewards.size();
  if (total == 0) throw NumericError("imagine_rollouts: all paths truncated immediately");

  batch.states = nn::Matrix(static_cast<int>(total), obs_dim);
  batch.actions = nn::Matrix(static_cast<int>(total), act_dim);
  batch.rewards.reserve(total);
  batch.old_log_probs.reserve(total);
  batch.advantages.resize(total);
  batch.value_targets.resize(total);

  int row = 0;
  for (Path& p : path_data) {
    const int len = static_cast<int>(p.rewards.size());
    if (p.truncated) batch.truncated_paths += 1;
    if (len == 0) continue;
    nn::Matrix state_mat(len, obs_dim);
    for (int t = 0; t < len; ++t) state_mat.set_row(t, p.states[t]);
    std::vector<double> vals = value_fn.values(state_mat);
    // Bootstrap from the state after the last step; truncated paths ended on
    // a bad prediction, so fall back to their final valid state.
    const std::vector<double>& boot_state =
        p.states.size() > static_cast<size_t>(len) ? p.states[len] : p.states.back();
    const double bootstrap = value_fn.value(boot_state);
    auto [adv, tgt] = compute_gae(p.rewards, vals, bootstrap, config.gamma,
                                  config.gae_lambda);
    for (int t = 0; t < len; ++t) {
      batch.states.set_row(row, p.states[t]);
      batch.actions.set_row(row, p.actions[t]);
      batch.rewards.push_back(p.rewards[t]);
      batch.old_log_probs.push_back(p.log_probs[t]);
      batch.advantages[row] = adv[t];
      batch.value_targets[row] = tgt[t];
      ++row;
    }
  }

  // Standardize advantages to mean 0, std 1.
  double mean = 0.0;
  for (double a : batch.advantages) mean += a;
  mean /= static_cast<double>(total);
  double var = 0.0;
  for (double a : batch.advantages) var += (a - mean) * (a - mean);
  const double std_dev = std::sqrt(var / static_cast<double>(total));
  const double denom = std_dev > 1e-12 ? std_dev : 1.0;
  for (double& a : batch.advantages) a = (a - mean) / denom;

  return batch;
}

// -- PPO ---------------------------------------------------------------------------

double clipped_surrogate(double rho, double advantage, double clip_eps) {
  const double clipped = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(rho * advantage, clipped * advantage);
}

nn::ParamVector ppo_policy_gradient(const GaussianPolicy& policy, const ImaginedBatch& batch,
                                    const TrainConfig& config, PpoStats* stats) {
  const int n = static_cast<int>(batch.size());
  if (n == 0) throw std::invalid_argument("ppo_policy_gradient: empty batch");
  const int act_dim = policy.act_dim();

  nn::ForwardTrace trace;
  nn::Matrix means = policy.mean_actions(batch.states, &trace);
  const std::span<const double> log_std = policy.log_std();

  nn::Matrix upstream(n, act_dim);
  std::vector<double> log_std_grad(act_dim, 0.0);
  double surrogate = 0.0;
  int clipped_count = 0;
  for (int i = 0; i < n; ++i) {
    const double lp_new =
        nn::gaussian_log_density(means.row_vec(i), log_std, batch.actions.row_vec(i));
    const double rho = std::exp(lp_new - batch.old_log_probs[i]);
    const double adv = batch.advantages[i];
    surrogate += clipped_surrogate(rho, adv, config.clip);

    // Gradient flows through the unclipped branch only while it is active:
    // clipping freezes rho when it would make the objective worse.
    const bool active = adv >= 0.0 ? rho <= 1.0 + config.clip : rho >= 1.0 - config.clip;
    if (!active) {
      clipped_count += 1;
      for (int d = 0; d < act_dim; ++d) upstream(i, d) = 0.0;
      continue;
    }
    // d(-surrogate)/d lp_new = -rho * adv / n, chained into mean and log_std.
    const double coef = -rho * adv / n;
    for (int d = 0; d < act_dim; ++d) {
      const double inv_var = std::exp(-2.0 * log_std[d]);
      const double diff = batch.actions(i, d) - means(i, d);
      upstream(i, d) = coef * diff * inv_var;
      log_std_grad[d] += coef * (diff * diff * inv_var - 1.0);
    }
  }
  surrogate /= n;
  if (stats) {
    stats->entropy = nn::gaussian_entropy(log_std);
    stats->clip_fraction = static_cast<double>(clipped_count) / n;
    stats->policy_loss = -(surrogate + config.entropy_coef * stats->entropy);
  }

  nn::ParamVector grad(policy.param_count(), 0.0);
  std::span<double> g(grad.data(), grad.size());
  nn::mlp_backward(policy.mean_spec(), policy.params(), trace, upstream,
                   g.subspan(0, policy.mean_spec().param_count()));
  for (int d = 0; d < act_dim; ++d) {
    // Entropy bonus: d(-coef*H)/d log_std = -coef.
    grad[policy.mean_spec().param_count() + d] = log_std_grad[d] - config.entropy_coef;
  }
  return grad;
}

PpoStats ppo_update(GaussianPolicy* policy, ValueFunction* value_fn,
                    const ImaginedBatch& batch, const TrainConfig& config,
                    nn::AdamState* policy_adam, nn::AdamState* value_adam) {
  config.validate();
  const int n = static_cast<int>(batch.size());
  if (n == 0) throw std::invalid_argument("ppo_update: empty batch");

  PpoStats stats;
  const nn::ParamVector grad = ppo_policy_gradient(*policy, batch, config, &stats);

  // Value pass (shared batch).
  std::vector<double> values = value_fn->values(batch.states);
  double value_loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double err = values[i] - batch.value_targets[i];
    value_loss += err * err;
  }
  value_loss /= n;
  stats.value_loss = value_loss;

  if (!std::isfinite(stats.policy_loss) || !std::isfinite(value_loss) ||
      !nn::all_finite(grad)) {
    stats.skipped = true;
    return stats;
  }

  // One Adam step on theta = [mean net, log_std].
  nn::adam_step(*policy_adam, policy->mutable_params(), grad);
  policy->clamp_log_std();

  // One Adam step on the value MSE.
  {
    nn::ForwardTrace vtrace;
    nn::Matrix v = nn::mlp_forward(value_fn->spec(), value_fn->params(), batch.states,
                                   &vtrace);
    nn::Matrix vup(n, 1);
    for (int i = 0; i < n; ++i) {
      vup(i, 0) = 2.0 * (v(i, 0) - batch.value_targets[i]) / n;
    }
    nn::ParamVector vgrad(value_fn->param_count(), 0.0);
    nn::mlp_backward(value_fn->spec(), value_fn->params(), vtrace, vup,
                     {vgrad.data(), vgrad.size()});
    if (!nn::all_finite(vgrad)) {
      stats.skipped = true;
      return stats;
    }
    nn::adam_step(*value_adam, value_fn->mutable_params(), vgrad);
  }

  return stats;
}

double discounted_return(const envs::Trajectory& traj, double gamma) {
  if (traj.transitions.empty()) {
    throw std::invalid_argument("discounted_return: empty trajectory");
  }
  double total = 0.0;
  double discount = 1.0;
  for (const envs::Transition& tr : traj.transitions) {
    total += discount * tr.r;
    discount *= gamma;
  }
  return total;
}

}  // namespace asyncdyna::policy
