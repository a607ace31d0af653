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

#include <cmath>

#include "asyncdyna/envs.hpp"
#include "asyncdyna/policy.hpp"
#include "asyncdyna/rng.hpp"

using namespace asyncdyna;
using namespace asyncdyna::policy;

namespace {

GaussianPolicy small_policy(int obs_dim, int act_dim, uint64_t seed,
                            double log_std_init = -0.5) {
  PolicyConfig config;
  config.hidden = {8, 8};
  config.log_std_init = log_std_init;
  return GaussianPolicy(obs_dim, act_dim, config, seed);
}

model::Ensemble trained_linear_ensemble(int k, uint64_t seed, model::DatasetBuffer* buffer) {
  Rng rng(seed);
  for (int i = 0; i < 4; ++i) {
    envs::Trajectory traj;
    std::vector<double> s = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    for (int t = 0; t < 100; ++t) {
      const std::vector<double> a = {rng.uniform(-1, 1)};
      const std::vector<double> s_next = {0.9 * s[0] + 0.1 * a[0], 0.95 * s[1] - 0.05 * a[0]};
      traj.transitions.push_back({s, a, s_next, 0.0, t});
      s = s_next;
    }
    buffer->append(traj);
  }
  model::EnsembleConfig config;
  config.k = k;
  config.hidden = {16, 16};
  model::Ensemble ensemble(2, 1, config, seed + 1);
  ensemble.refit_normalizers(*buffer);
  auto adam = ensemble.make_adam_states();
  for (int epoch = 0; epoch < 30; ++epoch) ensemble.train_epoch(*buffer, &adam, rng);
  return ensemble;
}

// Scalar PPO policy loss recomputed from first principles; the finite
// difference oracle perturbs theta through this function only.
double surrogate_loss(const GaussianPolicy& policy, const ImaginedBatch& batch,
                      const TrainConfig& config) {
  const int n = static_cast<int>(batch.size());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double lp = nn::gaussian_log_density(policy.mean_action(batch.states.row_vec(i)),
                                               policy.log_std(), batch.actions.row_vec(i));
    const double rho = std::exp(lp - batch.old_log_probs[i]);
    total += clipped_surrogate(rho, batch.advantages[i], config.clip);
  }
  double entropy = 0.0;
  for (double ls : policy.log_std()) entropy += ls + 0.5 * std::log(2.0 * M_PI * std::exp(1.0));
  return -(total / n + config.entropy_coef * entropy);
}

const std::vector<double> kLow = {-1.0};
const std::vector<double> kHigh = {1.0};
}  // namespace

TEST_CASE("sample_action reduces to the mean at minimal log_std") {
  GaussianPolicy policy = small_policy(3, 2, 4, -5.0);
  Rng rng(9);
  const std::vector<double> obs = {0.2, -0.1, 0.5};
  const auto mean = policy.mean_action(obs);
  for (int i = 0; i < 50; ++i) {
    const auto [action, lp] = policy.sample_action(obs, rng);
    for (int d = 0; d < 2; ++d) {
      CHECK(std::abs(action[d] - mean[d]) < 3.0 * std::exp(-5.0) * 5.0);
    }
  }
}

TEST_CASE("sample_action log_prob matches gaussian_log_density exactly") {
  GaussianPolicy policy = small_policy(3, 2, 5);
  Rng rng(10);
  const std::vector<double> obs = {0.4, 0.0, -0.2};
  for (int i = 0; i < 20; ++i) {
    const auto [action, lp] = policy.sample_action(obs, rng);
    CHECK(lp == nn::gaussian_log_density(policy.mean_action(obs), policy.log_std(), action));
  }
}

TEST_CASE("sample_action empirical mean concentrates on the policy mean") {
  GaussianPolicy policy = small_policy(2, 1, 6, 0.0);  // std = 1
  Rng rng(11);
  const std::vector<double> obs = {0.3, -0.8};
  const double mean = policy.mean_action(obs)[0];
  double sum = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) sum += policy.sample_action(obs, rng).first[0];
  const double empirical = sum / n;
  CHECK(std::abs(empirical - mean) < 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("compute_gae degenerate cases") {
  const std::vector<double> rewards = {1.0, 2.0, 3.0};
  const std::vector<double> values = {0.5, 1.0, -0.5};

  SUBCASE("lambda = 0 gives one-step TD errors") {
    auto [adv, tgt] = compute_gae(rewards, values, 2.0, 0.99, 0.0);
    CHECK(adv[0] == doctest::Approx(1.0 + 0.99 * 1.0 - 0.5));
    CHECK(adv[1] == doctest::Approx(2.0 + 0.99 * -0.5 - 1.0));
    CHECK(adv[2] == doctest::Approx(3.0 + 0.99 * 2.0 + 0.5));
    for (int t = 0; t < 3; ++t) CHECK(tgt[t] == doctest::Approx(adv[t] + values[t]));
  }

  SUBCASE("gamma = 0 gives r - V") {
    auto [adv, tgt] = compute_gae(rewards, values, 2.0, 1e-12, 0.95);
    for (int t = 0; t < 3; ++t) {
      CHECK(adv[t] == doctest::Approx(rewards[t] - values[t]).epsilon(1e-9));
    }
  }
}

TEST_CASE("compute_gae matches the 3-step hand recursion") {
  // r = [1, 1, 1], V = [0.5, 0.5, 0.5], bootstrap V_3 = 0, gamma=0.99, lambda=0.95.
  const std::vector<double> rewards = {1.0, 1.0, 1.0};
  const std::vector<double> values = {0.5, 0.5, 0.5};
  const double gamma = 0.99, lambda = 0.95;

  const double d2 = 1.0 + gamma * 0.0 - 0.5;
  const double d1 = 1.0 + gamma * 0.5 - 0.5;
  const double d0 = d1;
  const double a2 = d2;
  const double a1 = d1 + gamma * lambda * a2;
  const double a0 = d0 + gamma * lambda * a1;

  auto [adv, tgt] = compute_gae(rewards, values, 0.0, gamma, lambda);
  CHECK(adv[0] == doctest::Approx(a0).epsilon(1e-12));
  CHECK(adv[1] == doctest::Approx(a1).epsilon(1e-12));
  CHECK(adv[2] == doctest::Approx(a2).epsilon(1e-12));
  CHECK(tgt[1] == doctest::Approx(a1 + 0.5).epsilon(1e-12));
}

TEST_CASE("clipped surrogate scalar cases") {
  CHECK(clipped_surrogate(2.0, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  // Inside the trust region the clip is inactive.
  for (double rho : {0.85, 0.95, 1.0, 1.1, 1.2}) {
    CHECK(clipped_surrogate(rho, 0.7, 0.2) == doctest::Approx(rho * 0.7));
    CHECK(clipped_surrogate(rho, -0.7, 0.2) == doctest::Approx(-rho * 0.7));
  }
}

TEST_CASE("imagine_rollouts horizon 1 produces one transition per init state") {
  model::DatasetBuffer buffer(1000, 0.1);
  model::Ensemble ensemble = trained_linear_ensemble(1, 21, &buffer);
  GaussianPolicy policy = small_policy(2, 1, 22);
  PolicyConfig vconf;
  vconf.hidden = {8, 8};
  ValueFunction value_fn(2, vconf, 23);
  TrainConfig config;
  config.imagined_paths = 5;

  std::vector<std::vector<double>> inits = {{0.1, 0.2}, {0.3, -0.1}, {0.0, 0.0},
                                            {-0.5, 0.5}, {0.7, 0.7}};
  RewardFn reward = [](const std::vector<double>& s, const std::vector<double>&) {
    return -s[0] * s[0];
  };
  Rng rng(24);
  const ImaginedBatch batch =
      imagine_rollouts(policy, value_fn, ensemble, inits, 1, reward, kLow, kHigh,
                       config, rng);
  CHECK(batch.size() == 5);
  CHECK(batch.truncated_paths == 0);
}

TEST_CASE("imagine_rollouts is deterministic for a fixed rng seed") {
  model::DatasetBuffer buffer(1000, 0.1);
  model::Ensemble ensemble = trained_linear_ensemble(1, 31, &buffer);
  GaussianPolicy policy = small_policy(2, 1, 32, -5.0);
  PolicyConfig vconf;
  ValueFunction value_fn(2, vconf, 33);
  TrainConfig config;
  RewardFn reward = [](const std::vector<double>& s, const std::vector<double>& a) {
    return -(s[0] * s[0] + 0.1 * a[0] * a[0]);
  };
  std::vector<std::vector<double>> inits = {{0.2, 0.1}, {-0.3, 0.4}};

  Rng r1(77), r2(77);
  const ImaginedBatch a = imagine_rollouts(policy, value_fn, ensemble, inits, 10, reward, kLow, kHigh,
                       config, r1);
  const ImaginedBatch b = imagine_rollouts(policy, value_fn, ensemble, inits, 10, reward, kLow, kHigh,
                       config, r2);
  CHECK(a.states.data == b.states.data);
  CHECK(a.actions.data == b.actions.data);
  CHECK(a.rewards == b.rewards);
  CHECK(a.old_log_probs == b.old_log_probs);
  CHECK(a.advantages == b.advantages);
}

TEST_CASE("imagined advantages are standardized per batch") {
  model::DatasetBuffer buffer(1000, 0.1);
  model::Ensemble ensemble = trained_linear_ensemble(2, 41, &buffer);
  GaussianPolicy policy = small_policy(2, 1, 42);
  PolicyConfig vconf;
  ValueFunction value_fn(2, vconf, 43);
  TrainConfig config;
  RewardFn reward = [](const std::vector<double>& s, const std::vector<double>&) {
    return -std::abs(s[1]);
  };
  std::vector<std::vector<double>> inits(8, std::vector<double>{0.1, -0.1});
  Rng rng(44);
  const ImaginedBatch batch =
      imagine_rollouts(policy, value_fn, ensemble, inits, 12, reward, kLow, kHigh,
                       config, rng);

  double mean = 0.0;
  for (double a : batch.advantages) mean += a;
  mean /= batch.advantages.size();
  double var = 0.0;
  for (double a : batch.advantages) var += (a - mean) * (a - mean);
  const double stddev = std::sqrt(var / batch.advantages.size());
  CHECK(std::abs(mean) < 1e-10);
  CHECK(std::abs(stddev - 1.0) < 1e-10);
}

TEST_CASE("ppo_update takes exactly one Adam step and pushes ratios toward clip") {
  model::DatasetBuffer buffer(1000, 0.1);
  model::Ensemble ensemble = trained_linear_ensemble(1, 51, &buffer);
  GaussianPolicy policy = small_policy(2, 1, 52);
  PolicyConfig vconf;
  ValueFunction value_fn(2, vconf, 53);
  TrainConfig config;
  RewardFn reward = [](const std::vector<double>& s, const std::vector<double>&) {
    return -s[0] * s[0];
  };
  std::vector<std::vector<double>> inits(16, std::vector<double>{0.2, 0.0});
  Rng rng(54);
  const ImaginedBatch batch =
      imagine_rollouts(policy, value_fn, ensemble, inits, 8, reward, kLow, kHigh,
                       config, rng);

  nn::AdamState policy_adam(policy.param_count(), {.lr = config.policy_lr});
  nn::AdamState value_adam(value_fn.param_count(), {.lr = config.value_lr});
  const std::vector<double> before(policy.params().begin(), policy.params().end());
  const PpoStats stats = ppo_update(&policy, &value_fn, batch, config, &policy_adam,
                                    &value_adam);
  CHECK_FALSE(stats.skipped);
  CHECK(policy_adam.t == 1);
  CHECK(value_adam.t == 1);
  const std::vector<double> after(policy.params().begin(), policy.params().end());
  CHECK(before != after);
}

TEST_CASE("ppo_update with lr = 0 leaves the policy unchanged") {
  model::DatasetBuffer buffer(1000, 0.1);
  model::Ensemble ensemble = trained_linear_ensemble(1, 61, &buffer);
  GaussianPolicy policy = small_policy(2, 1, 62);
  PolicyConfig vconf;
  ValueFunction value_fn(2, vconf, 63);
  TrainConfig config;
  config.policy_lr = 0.0;
  config.value_lr = 0.0;
  RewardFn reward = [](const std::vector<double>& s, const std::vector<double>&) {
    return s[0];
  };
  std::vector<std::vector<double>> inits(8, std::vector<double>{0.0, 0.3});
  Rng rng(64);
  const ImaginedBatch batch =
      imagine_rollouts(policy, value_fn, ensemble, inits, 5, reward, kLow, kHigh,
                       config, rng);

  nn::AdamState policy_adam(policy.param_count(), {.lr = 0.0});
  nn::AdamState value_adam(value_fn.param_count(), {.lr = 0.0});
  const std::vector<double> before(policy.params().begin(), policy.params().end());
  ppo_update(&policy, &value_fn, batch, config, &policy_adam, &value_adam);
  const std::vector<double> after(policy.params().begin(), policy.params().end());
  CHECK(before == after);

  // Identical rng states sample identical actions before and after.
  Rng ra(1), rb(1);
  const auto sa = policy.sample_action(std::vector<double>{0.1, 0.1}, ra);
  const auto sb = policy.sample_action(std::vector<double>{0.1, 0.1}, rb);
  CHECK(sa.first == sb.first);
}

TEST_CASE("fresh batch has rho = 1: surrogate gradient equals the plain estimator") {
  // With old_log_probs freshly recorded, rho = 1 for every sample, the clip
  // is inactive, and d surrogate / d lp = advantage.
  model::DatasetBuffer buffer(1000, 0.1);
  model::Ensemble ensemble = trained_linear_ensemble(1, 71, &buffer);
  GaussianPolicy policy = small_policy(2, 1, 72);
  PolicyConfig vconf;
  ValueFunction value_fn(2, vconf, 73);
  TrainConfig config;
  RewardFn reward = [](const std::vector<double>& s, const std::vector<double>&) {
    return -s[0];
  };
  std::vector<std::vector<double>> inits(4, std::vector<double>{0.1, 0.4});
  Rng rng(74);
  const ImaginedBatch batch =
      imagine_rollouts(policy, value_fn, ensemble, inits, 3, reward, kLow, kHigh,
                       config, rng);

  for (size_t i = 0; i < batch.size(); ++i) {
    const double lp = nn::gaussian_log_density(policy.mean_action(batch.states.row_vec(i)),
                                               policy.log_std(),
                                               batch.actions.row_vec(i));
    CHECK(std::exp(lp - batch.old_log_probs[i]) == doctest::Approx(1.0).epsilon(1e-12));
  }

  nn::AdamState policy_adam(policy.param_count(), {.lr = 1e-3});
  nn::AdamState value_adam(value_fn.param_count(), {.lr = 1e-3});
  const PpoStats stats = ppo_update(&policy, &value_fn, batch, config, &policy_adam,
                                    &value_adam);
  CHECK(stats.clip_fraction == 0.0);
}

TEST_CASE("surrogate gradient matches finite differences on a 4-sample batch") {
  model::DatasetBuffer buffer(1000, 0.1);
  model::Ensemble ensemble = trained_linear_ensemble(1, 81, &buffer);
  GaussianPolicy policy = small_policy(2, 1, 82);
  PolicyConfig vconf;
  vconf.hidden = {8, 8};
  ValueFunction value_fn(2, vconf, 83);
  TrainConfig config;
  config.entropy_coef = 0.01;
  RewardFn reward = [](const std::vector<double>& s, const std::vector<double>& a) {
    return -(s[0] * s[0]) - 0.01 * a[0] * a[0];
  };
  std::vector<std::vector<double>> inits = {{0.3, 0.1}, {-0.2, 0.5}, {0.0, -0.4},
                                            {0.6, 0.6}};
  Rng rng(84);
  ImaginedBatch batch =
      imagine_rollouts(policy, value_fn, ensemble, inits, 1, reward, kLow, kHigh,
                       config, rng);
  REQUIRE(batch.size() == 4);
  // Push some ratios into the clipped regime.
  for (size_t i = 0; i < batch.size(); ++i) {
    batch.old_log_probs[i] += (i % 2 == 0 ? 0.4 : -0.4);
  }

  const nn::ParamVector analytic = ppo_policy_gradient(policy, batch, config);

  // Central finite differences of the independently written scalar loss.
  const double h = 1e-6;
  GaussianPolicy probe = policy;
  double worst = 0.0;
  for (size_t i = 0; i < probe.param_count(); ++i) {
    auto params = probe.mutable_params();
    const double saved = params[i];
    params[i] = saved + h;
    const double hi = surrogate_loss(probe, batch, config);
    params[i] = saved - h;
    const double lo = surrogate_loss(probe, batch, config);
    params[i] = saved;
    const double fd = (hi - lo) / (2.0 * h);
    const double err = std::abs(analytic[i] - fd);
    const double scale = std::max({std::abs(analytic[i]), std::abs(fd), 1e-3});
    worst = std::max(worst, err / scale);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("discounted_return cases") {
  envs::Trajectory traj;
  for (int t = 0; t < 3; ++t) traj.transitions.push_back({{0.0}, {0.0}, {0.0}, 1.0, t});
  CHECK(discounted_return(traj, 0.99) == doctest::Approx(1.0 + 0.99 + 0.9801).epsilon(1e-12));
  CHECK(discounted_return(traj, 1.0) == doctest::Approx(3.0));

  envs::Trajectory random_traj;
  Rng rng(5);
  double hand = 0.0, discount = 1.0;
  for (int t = 0; t < 5; ++t) {
    const double r = rng.uniform(-2, 2);
    random_traj.transitions.push_back({{0.0}, {0.0}, {0.0}, r, t});
    hand += discount * r;
    discount *= 0.9;
  }
  CHECK(discounted_return(random_traj, 0.9) == doctest::Approx(hand).epsilon(1e-12));
  CHECK_THROWS_AS(discounted_return(envs::Trajectory{}, 0.99), std::invalid_argument);
}

TEST_CASE("policy blob round-trips") {
  GaussianPolicy a = small_policy(3, 2, 91);
  GaussianPolicy b = small_policy(3, 2, 92);
  b.load_blob(a.to_blob());
  CHECK(std::vector<double>(a.params().begin(), a.params().end()) ==
        std::vector<double>(b.params().begin(), b.params().end()));
}

TEST_CASE("log_std stays clamped to [-5, 1]") {
  GaussianPolicy policy = small_policy(2, 2, 93, -9.0);
  for (double ls : policy.log_std()) CHECK(ls == -5.0);
  GaussianPolicy hot = small_policy(2, 2, 94, 3.0);
  for (double ls : hot.log_std()) CHECK(ls == 1.0);
}
