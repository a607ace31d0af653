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

#include "asyncdyna/ensemble.hpp"
#include "asyncdyna/envs.hpp"
#include "asyncdyna/nn.hpp"
#include "asyncdyna/rng.hpp"

using namespace asyncdyna;
using namespace asyncdyna::model;

namespace {

// Noiseless linear system s' = A s + B a used as a learnability oracle.
envs::Trajectory linear_system_trajectory(int steps, Rng& rng) {
  const double a11 = 0.9, a12 = 0.1, a21 = -0.05, a22 = 0.95;
  const double b1 = 0.1, b2 = 0.2;
  envs::Trajectory traj;
  std::vector<double> s = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  for (int t = 0; t < steps; ++t) {
    const std::vector<double> act = {rng.uniform(-1, 1)};
    const std::vector<double> s_next = {a11 * s[0] + a12 * s[1] + b1 * act[0],
                                        a21 * s[0] + a22 * s[1] + b2 * act[0]};
    traj.transitions.push_back({s, act, s_next, 0.0, t});
    s = s_next;
  }
  return traj;
}

envs::Trajectory constant_trajectory(int steps, const std::vector<double>& s,
                                     const std::vector<double>& a,
                                     const std::vector<double>& s_next) {
  envs::Trajectory traj;
  for (int t = 0; t < steps; ++t) traj.transitions.push_back({s, a, s_next, 0.0, t});
  return traj;
}

}  // namespace

TEST_CASE("buffer keeps at most its capacity, FIFO") {
  DatasetBuffer buffer(400, 0.1);
  Rng rng(0);
  buffer.append(linear_system_trajectory(200, rng));
  buffer.append(linear_system_trajectory(200, rng));
  CHECK(buffer.size() == 400);

  // A third trajectory evicts the first: remaining rows are the suffix.
  envs::Trajectory third = linear_system_trajectory(200, rng);
  buffer.append(third);
  CHECK(buffer.size() == 400);
  const auto& rows = buffer.rows();
  for (int k = 0; k < 200; ++k) {
    CHECK(rows[200 + k].s == third.transitions[k].s);
  }
}

TEST_CASE("buffer FIFO equals the suffix of the pushed stream for any sequence") {
  Rng rng(3);
  DatasetBuffer buffer(57, 0.1);
  std::vector<std::vector<double>> pushed;
  for (int round = 0; round < 9; ++round) {
    envs::Trajectory traj = linear_system_trajectory(13 + (round * 7) % 23, rng);
    for (const auto& tr : traj.transitions) pushed.push_back(tr.s);
    buffer.append(traj);
    const size_t expect = std::min<size_t>(pushed.size(), 57);
    REQUIRE(buffer.size() == expect);
    const auto& rows = buffer.rows();
    for (size_t k = 0; k < expect; ++k) {
      CHECK(rows[k].s == pushed[pushed.size() - expect + k]);
    }
  }
}

TEST_CASE("validation split uses deterministic striding") {
  DatasetBuffer buffer(1000, 0.1);
  Rng rng(1);
  buffer.append(linear_system_trajectory(200, rng));
  // Exactly every 10th arrival is held out.
  CHECK(buffer.validation_size() == 20);
  CHECK(buffer.train_size() == 180);
  const auto& rows = buffer.rows();
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].validation == (i % 10 == 9));
  }
}

TEST_CASE("normalizer round-trips and floors tiny deviations") {
  nn::Matrix data(50, 3);
  Rng rng(4);
  for (int r = 0; r < 50; ++r) {
    data(r, 0) = rng.uniform(-5, 5);
    data(r, 1) = 42.0;  // constant column exercises the std floor
    data(r, 2) = rng.normal();
  }
  Normalizer norm;
  norm.fit(data);
  CHECK(norm.std[1] == Normalizer::kMinStd);

  nn::Matrix copy = data;
  norm.normalize(&copy);
  norm.denormalize(&copy);
  for (size_t i = 0; i < copy.data.size(); ++i) {
    CHECK(copy.data[i] == doctest::Approx(data.data[i]).epsilon(1e-12));
  }
}

namespace {

// Mean squared error of the mean heads over the training split, in
// normalized units. Independent of the NLL objective's entropy term.
double normalized_mse(const Ensemble& ensemble, const DatasetBuffer& buffer) {
  nn::Matrix inputs, targets;
  buffer.build_matrices(false, &inputs, &targets);
  ensemble.input_normalizer().normalize(&inputs);
  ensemble.target_normalizer().normalize(&targets);
  double total = 0.0;
  for (int k = 0; k < ensemble.k(); ++k) {
    const auto mlp = ensemble.model_params(k).subspan(0, ensemble.mlp_spec().param_count());
    const nn::Matrix mu = nn::mlp_forward(ensemble.mlp_spec(), mlp, inputs);
    for (size_t i = 0; i < mu.data.size(); ++i) {
      const double err = mu.data[i] - targets.data[i];
      total += err * err;
    }
  }
  return total / (static_cast<double>(inputs.rows) * targets.cols * ensemble.k());
}

}  // namespace

TEST_CASE("train_epoch reduces training error by 10x on a noiseless linear system") {
  Rng rng(7);
  EnsembleConfig config;
  config.k = 2;
  config.hidden = {32, 32};
  Ensemble ensemble(2, 1, config, 99);
  DatasetBuffer buffer(4000, 0.1);
  for (int i = 0; i < 6; ++i) buffer.append(linear_system_trajectory(200, rng));
  ensemble.refit_normalizers(buffer);

  const double before = normalized_mse(ensemble, buffer);
  auto adam = ensemble.make_adam_states();
  for (int epoch = 0; epoch < 60; ++epoch) ensemble.train_epoch(buffer, &adam, rng);
  const double after = normalized_mse(ensemble, buffer);
  CHECK(after < before / 10.0);
}

TEST_CASE("K=1 on one repeated transition converges toward the target") {
  EnsembleConfig config;
  config.k = 1;
  config.hidden = {16};
  Ensemble ensemble(2, 1, config, 5);
  DatasetBuffer buffer(1000, 0.1);
  // Exactly representable constants: the centered normalizer maps the inputs
  // to exactly zero and the single normalized target to exactly zero.
  buffer.append(constant_trajectory(40, {0.25, -0.5}, {0.5}, {0.375, -0.25}));
  ensemble.refit_normalizers(buffer);

  // A zero-bias relu net on a zero input already sits on the target, so kick
  // the output bias away from it; training must walk the mean prediction
  // back, strictly, over the first 5 epochs.
  {
    auto params = ensemble.mutable_model_params(0);
    const int mlp_count = ensemble.mlp_spec().param_count();
    params[mlp_count - 2] = 0.5;   // output bias, dim 0
    params[mlp_count - 1] = -0.3;  // output bias, dim 1
  }
  const auto normalized_error = [&] {
    const std::vector<double> x =
        ensemble.input_normalizer().normalize(std::vector<double>{0.25, -0.5, 0.5});
    const auto mlp = ensemble.model_params(0).subspan(0, ensemble.mlp_spec().param_count());
    const auto mu = nn::mlp_forward(ensemble.mlp_spec(), mlp, x);
    return std::hypot(mu[0], mu[1]);
  };

  Rng rng(8);
  auto adam = ensemble.make_adam_states();
  double prev_err = normalized_error();
  CHECK(prev_err > 0.5);
  for (int epoch = 0; epoch < 5; ++epoch) {
    ensemble.train_epoch(buffer, &adam, rng);
    const double err = normalized_error();
    CHECK(err < prev_err);
    prev_err = err;
  }
}

TEST_CASE("train_epoch with lr = 0 leaves parameters and loss unchanged") {
  Rng rng(9);
  EnsembleConfig config;
  config.k = 2;
  config.lr = 0.0;
  Ensemble ensemble(2, 1, config, 1);
  DatasetBuffer buffer(500, 0.1);
  buffer.append(linear_system_trajectory(100, rng));
  ensemble.refit_normalizers(buffer);

  std::vector<double> before(ensemble.model_params(0).begin(),
                             ensemble.model_params(0).end());
  auto adam = ensemble.make_adam_states();
  const auto loss1 = ensemble.train_epoch(buffer, &adam, rng);
  const auto loss2 = ensemble.train_epoch(buffer, &adam, rng);
  std::vector<double> after(ensemble.model_params(0).begin(),
                            ensemble.model_params(0).end());
  CHECK(before == after);
  for (size_t i = 0; i < loss1.size(); ++i) {
    CHECK(loss1[i] == doctest::Approx(loss2[i]).epsilon(1e-9));
  }
}

TEST_CASE("train_epoch demands a nonempty training split") {
  EnsembleConfig config;
  Ensemble ensemble(2, 1, config, 1);
  DatasetBuffer buffer(100, 0.1);
  auto adam = ensemble.make_adam_states();
  Rng rng(1);
  CHECK_THROWS_AS(ensemble.train_epoch(buffer, &adam, rng), std::invalid_argument);
}

TEST_CASE("validation_loss is deterministic and matches a hand computation") {
  EnsembleConfig config;
  config.k = 1;
  config.hidden = {4};
  Ensemble ensemble(1, 1, config, 3);
  DatasetBuffer buffer(100, 0.25);  // stride 4: arrivals 3, 7, 11, ... held out
  envs::Trajectory traj;
  for (int t = 0; t < 12; ++t) {
    traj.transitions.push_back({{0.1 * t}, {0.01 * t}, {0.1 * t + 0.05}, 0.0, t});
  }
  buffer.append(traj);
  ensemble.refit_normalizers(buffer);

  const double a = ensemble.validation_loss(buffer);
  const double b = ensemble.validation_loss(buffer);
  CHECK(a == b);

  // Hand evaluation through gaussian_log_density over the held-out rows.
  nn::Matrix inputs, targets;
  buffer.build_matrices(true, &inputs, &targets);
  ensemble.input_normalizer().normalize(&inputs);
  ensemble.target_normalizer().normalize(&targets);
  const auto full = ensemble.model_params(0);
  const auto mlp = full.subspan(0, ensemble.mlp_spec().param_count());
  const auto log_std = full.subspan(ensemble.mlp_spec().param_count());
  double hand = 0.0;
  for (int r = 0; r < inputs.rows; ++r) {
    const auto mu = nn::mlp_forward(ensemble.mlp_spec(), mlp, inputs.row_vec(r));
    hand += -nn::gaussian_log_density(mu, log_std, targets.row_vec(r));
  }
  hand /= inputs.rows;
  CHECK(a == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("should_stop follows the compare-then-update EMA recursion") {
  ValidationTracker tracker;
  tracker.beta = 0.5;
  // Hand recursion: ema starts 1.0, then 0.95, then 0.875; never stops.
  CHECK_FALSE(tracker.should_stop(1.0));
  CHECK(tracker.ema == doctest::Approx(1.0));
  CHECK_FALSE(tracker.should_stop(0.9));
  CHECK(tracker.ema == doctest::Approx(0.95));
  CHECK_FALSE(tracker.should_stop(0.8));
  CHECK(tracker.ema == doctest::Approx(0.875));
}

TEST_CASE("should_stop stops on an increase over the initial average") {
  for (double beta : {0.0, 0.5, 0.9}) {
    ValidationTracker tracker;
    tracker.beta = beta;
    CHECK_FALSE(tracker.should_stop(1.0));
    CHECK(tracker.should_stop(1.1));
  }
}

TEST_CASE("should_stop never stops on exactly equal losses") {
  ValidationTracker tracker;
  tracker.beta = 0.6;
  for (int i = 0; i < 10; ++i) CHECK_FALSE(tracker.should_stop(1.0));
}

TEST_CASE("beta = 0 compares against the previous loss only") {
  ValidationTracker tracker;
  tracker.beta = 0.0;
  std::vector<double> losses = {1.0, 0.9, 0.95, 0.8, 0.79, 0.8};
  std::vector<bool> expect = {false, false, true, false, false, true};
  for (size_t i = 0; i < losses.size(); ++i) {
    CHECK(tracker.should_stop(losses[i]) == expect[i]);
  }
}

TEST_CASE("tracker reset clears the state and is idempotent") {
  ValidationTracker tracker;
  tracker.beta = 0.5;
  tracker.should_stop(1.0);
  tracker.reset();
  tracker.reset();
  CHECK_FALSE(tracker.initialized);
  CHECK_FALSE(tracker.should_stop(5.0));  // fresh start never stops
}

TEST_CASE("predict with K=1 is deterministic given the rng state") {
  EnsembleConfig config;
  config.k = 1;
  Ensemble ensemble(2, 1, config, 10);
  DatasetBuffer buffer(500, 0.1);
  Rng rng(2);
  buffer.append(linear_system_trajectory(100, rng));
  ensemble.refit_normalizers(buffer);

  Rng a(55), b(55);
  const auto pa = ensemble.predict(std::vector<double>{0.1, 0.2}, std::vector<double>{0.3}, a);
  const auto pb = ensemble.predict(std::vector<double>{0.1, 0.2}, std::vector<double>{0.3}, b);
  CHECK(pa == pb);
}

TEST_CASE("predict draws models uniformly: binomial concentration") {
  EnsembleConfig config;
  config.k = 4;
  config.hidden = {8};
  Ensemble ensemble(1, 1, config, 20);
  DatasetBuffer buffer(500, 0.1);
  envs::Trajectory traj;
  for (int t = 0; t < 100; ++t) {
    traj.transitions.push_back({{0.01 * t}, {0.0}, {0.01 * t + 0.1}, 0.0, t});
  }
  buffer.append(traj);
  ensemble.refit_normalizers(buffer);

  // Make the models distinguishable by output: zero every weight and set the
  // output bias of model k to k, so model k predicts normalized delta k.
  const int mlp_count = ensemble.mlp_spec().param_count();
  for (int k = 0; k < 4; ++k) {
    auto p = ensemble.mutable_model_params(k);
    for (int i = 0; i < mlp_count; ++i) p[i] = 0.0;
    p[mlp_count - 1] = static_cast<double>(k);  // last bias = output bias
  }
  const auto& tgt = ensemble.target_normalizer();
  const auto& in = ensemble.input_normalizer();

  Rng rng(123);
  std::vector<int> counts(4, 0);
  const std::vector<double> s = {0.5}, a = {0.0};
  for (int i = 0; i < 10000; ++i) {
    const auto out = ensemble.predict(s, a, rng);
    // Invert s' = s + (mean + k*std), then undo the normalized-unit clipping.
    double delta_norm = (out[0] - s[0] - tgt.mean[0]) / tgt.std[0];
    const double hi = (in.mean[0] + Ensemble::kStateClip * in.std[0] - s[0] - tgt.mean[0]) /
                      tgt.std[0];
    int best = 0;
    double best_err = 1e18;
    for (int k = 0; k < 4; ++k) {
      const double expect = std::min(static_cast<double>(k), hi);
      const double err = std::abs(delta_norm - expect);
      if (err < best_err) {
        best_err = err;
        best = k;
      }
    }
    REQUIRE(best_err < 1e-9);
    counts[best] += 1;
  }
  for (int k = 0; k < 4; ++k) {
    CHECK(counts[k] > 2500 - 150);
    CHECK(counts[k] < 2500 + 150);
  }
}

TEST_CASE("trained ensemble reaches small one-step error on held-out linear data") {
  Rng rng(31);
  EnsembleConfig config;
  config.k = 4;
  config.hidden = {32, 32};
  Ensemble ensemble(2, 1, config, 77);
  DatasetBuffer buffer(4000, 0.1);
  for (int i = 0; i < 8; ++i) buffer.append(linear_system_trajectory(200, rng));
  ensemble.refit_normalizers(buffer);
  auto adam = ensemble.make_adam_states();
  for (int epoch = 0; epoch < 150; ++epoch) ensemble.train_epoch(buffer, &adam, rng);

  // Mean error over the validation split (never trained on), in normalized
  // target units.
  const auto& tgt_norm = ensemble.target_normalizer();
  Rng pick(1);
  double total = 0.0;
  int count = 0;
  for (const auto& row : buffer.rows()) {
    if (!row.validation) continue;
    const auto pred = ensemble.predict(row.s, row.a, pick);
    for (int d = 0; d < 2; ++d) {
      total += std::abs((pred[d] - row.s_next[d]) / tgt_norm.std[d]);
      count += 1;
    }
  }
  CHECK(total / count < 1e-2);
}

TEST_CASE("ensemble disagreement is zero when all models share parameters") {
  EnsembleConfig config;
  config.k = 3;
  Ensemble ensemble(2, 1, config, 50);
  DatasetBuffer buffer(400, 0.1);
  Rng rng(12);
  buffer.append(linear_system_trajectory(100, rng));
  ensemble.refit_normalizers(buffer);

  // Copy model 0 into every slot.
  std::vector<double> reference(ensemble.model_params(0).begin(),
                                ensemble.model_params(0).end());
  for (int k = 1; k < 3; ++k) {
    auto dst = ensemble.mutable_model_params(k);
    std::copy(reference.begin(), reference.end(), dst.begin());
  }
  std::vector<std::vector<double>> outputs;
  for (int draw = 0; draw < 20; ++draw) {
    Rng r(draw);
    outputs.push_back(
        ensemble.predict(std::vector<double>{0.3, -0.1}, std::vector<double>{0.2}, r));
  }
  for (const auto& out : outputs) CHECK(out == outputs[0]);
}

TEST_CASE("model blob round-trips through serialization") {
  EnsembleConfig config;
  config.k = 2;
  Ensemble a(2, 1, config, 42);
  DatasetBuffer buffer(400, 0.1);
  Rng rng(13);
  buffer.append(linear_system_trajectory(100, rng));
  a.refit_normalizers(buffer);

  const auto blob = a.to_blob();
  Ensemble b(2, 1, config, 43);  // different init, overwritten by the blob
  b.load_blob(blob);
  for (int k = 0; k < 2; ++k) {
    const auto pa = a.model_params(k);
    const auto pb = b.model_params(k);
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
  }
  Rng ra(9), rb(9);
  const auto outa = a.predict(std::vector<double>{0.1, 0.1}, std::vector<double>{0.0}, ra);
  const auto outb = b.predict(std::vector<double>{0.1, 0.1}, std::vector<double>{0.0}, rb);
  CHECK(outa == outb);
}

TEST_CASE("load_blob rejects mismatched shapes") {
  EnsembleConfig config;
  config.k = 2;
  Ensemble a(2, 1, config, 1);
  EnsembleConfig other = config;
  other.k = 3;
  Ensemble b(2, 1, other, 1);
  CHECK_THROWS_AS(b.load_blob(a.to_blob()), std::invalid_argument);
}
