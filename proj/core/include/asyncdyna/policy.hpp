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

#ifndef ASYNCDYNA_POLICY_HPP_
#define ASYNCDYNA_POLICY_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "asyncdyna/ensemble.hpp"
#include "asyncdyna/envs.hpp"
#include "asyncdyna/nn.hpp"
#include "asyncdyna/rng.hpp"

namespace asyncdyna::policy {

struct PolicyConfig {
  std::vector<int> hidden = {64, 64};
  nn::Activation activation = nn::Activation::kTanh;
  double log_std_init = -0.5;
};

// Diagonal Gaussian policy: an MLP mean head plus a state-independent
// log_std vector, stored as one flat parameter vector [mlp..., log_std].
// log_std is clamped to [-5, 1].
class GaussianPolicy {
 public:
  GaussianPolicy(int obs_dim, int act_dim, const PolicyConfig& config, uint64_t seed);

  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  const nn::MlpSpec& mean_spec() const { return mean_spec_; }

  std::span<const double> params() const { return {params_.data(), params_.size()}; }
  std::span<double> mutable_params() { return {params_.data(), params_.size()}; }
  std::span<const double> log_std() const;
  size_t param_count() const { return params_.size(); }

  std::vector<double> mean_action(std::span<const double> obs) const;
  nn::Matrix mean_actions(const nn::Matrix& obs, nn::ForwardTrace* trace = nullptr) const;

  // a = mean(s) + exp(log_std) * z with z standard normal; the returned
  // log-probability is gaussian_log_density(mean(s), log_std, a).
  std::pair<std::vector<double>, double> sample_action(std::span<const double> obs,
                                                       Rng& rng) const;

  double log_prob(std::span<const double> obs, std::span<const double> action) const;

  void clamp_log_std();

  // Policy parameter blob: serialized mean-net params, then log_std.
  std::vector<uint8_t> to_blob() const;
  void load_blob(std::span<const uint8_t> blob);

  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 1.0;

 private:
  int obs_dim_;
  int act_dim_;
  nn::MlpSpec mean_spec_;
  nn::ParamVector params_;
};

class ValueFunction {
 public:
  ValueFunction(int obs_dim, const PolicyConfig& config, uint64_t seed);

  const nn::MlpSpec& spec() const { return spec_; }
  std::span<const double> params() const { return {params_.data(), params_.size()}; }
  std::span<double> mutable_params() { return {params_.data(), params_.size()}; }
  size_t param_count() const { return params_.size(); }

  double value(std::span<const double> obs) const;
  std::vector<double> values(const nn::Matrix& obs) const;

 private:
  nn::MlpSpec spec_;
  nn::ParamVector params_;
};

struct TrainConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int imagined_horizon = 50;
  int imagined_paths = 32;
  double policy_lr = 3e-4;
  double value_lr = 1e-3;
  double entropy_coef = 0.0;

  void validate() const;
};

// Aligned arrays of imagined experience. Advantages are standardized to
// mean 0, std 1 per batch.
struct ImaginedBatch {
  nn::Matrix states;   // n x obs_dim
  nn::Matrix actions;  // n x act_dim
  std::vector<double> rewards;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> value_targets;
  int truncated_paths = 0;

  size_t size() const { return rewards.size(); }
};

using RewardFn =
    std::function<double(const std::vector<double>&, const std::vector<double>&)>;

// delta_t = r_t + gamma*V_{t+1} - V_t; A_t = sum_k (gamma*lambda)^k delta_{t+k};
// value_targets = A + V. `values` has one entry per reward; `bootstrap_value`
// stands in for V at the step after the last.
std::pair<std::vector<double>, std::vector<double>> compute_gae(
    std::span<const double> rewards, std::span<const double> values,
    double bootstrap_value, double gamma, double gae_lambda);

// Rolls the policy through the ensemble for `horizon` steps from each initial
// state, in lockstep batches. Rewards come from `reward_fn` applied to the
// (predicted) observation and sampled action; the rollout never touches a real
// environment. ImaginedBatch records the raw sampled actions (whose
// log-probabilities drive the PPO ratio), but the model is queried with
// actions clipped to [action_low, action_high] so imagination can never
// exploit dynamics extrapolated beyond what the actuators deliver. Paths
// whose prediction turns non-finite are truncated and counted.
// Advantages/value targets are GAE over each path with a bootstrap from
// `value_fn`.
ImaginedBatch imagine_rollouts(const GaussianPolicy& policy, const ValueFunction& value_fn,
                               const model::DynamicsModel& ensemble,
                               const std::vector<std::vector<double>>& init_states,
                               int horizon, const RewardFn& reward_fn,
                               std::span<const double> action_low,
                               std::span<const double> action_high,
                               const TrainConfig& config, Rng& rng);

// The PPO-clip objective for one (rho, advantage) pair:
// min(rho*adv, clamp(rho, 1-eps, 1+eps)*adv).
double clipped_surrogate(double rho, double advantage, double clip_eps);

struct PpoStats {
  double policy_loss = 0.0;   // negative clipped surrogate (minimized)
  double value_loss = 0.0;    // mean squared error
  double entropy = 0.0;
  double clip_fraction = 0.0;
  bool skipped = false;       // update dropped because the loss went non-finite
};

// Analytic gradient of the PPO policy loss
//   -( mean_i min(rho_i A_i, clip(rho_i) A_i) + entropy_coef * H[pi] )
// w.r.t. theta = [mean net params, log_std]. Stats (loss, entropy, clip
// fraction) are filled when requested. This is the gradient ppo_update feeds
// to Adam; it is exposed so oracles can check it against finite differences.
nn::ParamVector ppo_policy_gradient(const GaussianPolicy& policy, const ImaginedBatch& batch,
                                    const TrainConfig& config, PpoStats* stats = nullptr);

// Exactly one Adam step on the clipped-surrogate policy objective (plus
// entropy bonus) and one Adam step on the value MSE. A non-finite loss skips
// the update and reports it in the stats.
PpoStats ppo_update(GaussianPolicy* policy, ValueFunction* value_fn,
                    const ImaginedBatch& batch, const TrainConfig& config,
                    nn::AdamState* policy_adam, nn::AdamState* value_adam);

double discounted_return(const envs::Trajectory& traj, double gamma);

}  // namespace asyncdyna::policy

#endif  // ASYNCDYNA_POLICY_HPP_
