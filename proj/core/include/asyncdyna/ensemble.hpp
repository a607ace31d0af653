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

#ifndef ASYNCDYNA_ENSEMBLE_HPP_
#define ASYNCDYNA_ENSEMBLE_HPP_

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "asyncdyna/envs.hpp"
#include "asyncdyna/nn.hpp"
#include "asyncdyna/rng.hpp"

namespace asyncdyna::model {

// Per-dimension affine normalization, fitted on data columns.
// Standard deviations are floored so the transform is always invertible.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;
  int64_t count = 0;

  static constexpr double kMinStd = 1e-6;

  void fit(const nn::Matrix& rows);
  void normalize(nn::Matrix* rows) const;
  void denormalize(nn::Matrix* rows) const;
  std::vector<double> normalize(std::span<const double> row) const;
  std::vector<double> denormalize(std::span<const double> row) const;
  bool fitted() const { return count > 0; }
};

// Fixed-capacity FIFO of transitions with a deterministic train/validation
// split: every stride-th arriving transition (stride = round(1/fraction))
// is held out, so split membership is reproducible across runs.
class DatasetBuffer {
 public:
  struct Row {
    std::vector<double> s;
    std::vector<double> a;
    std::vector<double> s_next;
    bool validation = false;
  };

  explicit DatasetBuffer(size_t capacity, double validation_fraction = 0.1);

  void append(const envs::Trajectory& traj);
  void append(const envs::Transition& tr);

  size_t size() const { return rows_.size(); }
  size_t capacity() const { return capacity_; }
  size_t train_size() const;
  size_t validation_size() const;
  const std::deque<Row>& rows() const { return rows_; }

  // Dense matrices over the requested split: inputs are (s, a) rows, targets
  // are state deltas s_next - s.
  void build_matrices(bool validation, nn::Matrix* inputs, nn::Matrix* targets) const;

 private:
  size_t capacity_;
  size_t stride_;
  uint64_t arrivals_ = 0;
  std::deque<Row> rows_;
};

// Early-stopping rule: keep an exponentially moving average of the validation
// loss; a new loss strictly above the running average stops training. The
// average is seeded with the first observation and updated compare-then-push:
//   stop = loss > ema;  ema <- beta*ema + (1-beta)*loss
// beta = 0 reduces to comparing against the previous loss. Reset whenever new
// data arrives.
struct ValidationTracker {
  double beta = 0.6;
  bool initialized = false;
  double ema = 0.0;

  bool should_stop(double new_val_loss);
  void reset();
};

struct EnsembleConfig {
  int k = 4;
  std::vector<int> hidden = {64, 64};
  nn::Activation activation = nn::Activation::kRelu;
  double lr = 1e-3;
  int minibatch = 64;
  double log_std_init = -1.0;
};

// What imagined rollouts need from a dynamics model. Ensemble is the real
// implementation; tests substitute exact oracles.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;
  virtual nn::Matrix predict_batch(const nn::Matrix& states, const nn::Matrix& actions,
                                   Rng& rng) const = 0;
};

// Ensemble of K delta-predicting dynamics models trained by maximum
// likelihood. Each model owns one flat parameter vector laid out as
// [mlp params..., log_std per obs dim]; the learned log_std serves the
// likelihood objective only, rollout-time predictions use the mean head.
// Ensemble diversity comes from independent initialization and independently
// shuffled epochs; there is no bootstrapping.
class Ensemble : public DynamicsModel {
 public:
  Ensemble(int obs_dim, int act_dim, const EnsembleConfig& config, uint64_t seed);

  int k() const { return config_.k; }
  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  const nn::MlpSpec& mlp_spec() const { return mlp_spec_; }
  const EnsembleConfig& config() const { return config_; }
  const Normalizer& input_normalizer() const { return input_norm_; }
  const Normalizer& target_normalizer() const { return target_norm_; }

  // Full parameter vector of model `i` (mlp params followed by log_std).
  std::span<const double> model_params(int i) const;
  std::span<double> mutable_model_params(int i);
  size_t model_param_count() const { return model_param_count_; }

  // Adam states sized for one model each, in ensemble order.
  std::vector<nn::AdamState> make_adam_states() const;

  // Refits input/target normalizers on the buffer's training split.
  void refit_normalizers(const DatasetBuffer& buffer);

  // One full pass over the training split in shuffled minibatches per model,
  // minimizing the negative Gaussian log-likelihood of normalized deltas.
  // Returns the mean training NLL per model. Throws NumericError if an update
  // diverges. Requires a nonempty training split.
  std::vector<double> train_epoch(const DatasetBuffer& buffer,
                                  std::vector<nn::AdamState>* adam_states, Rng& rng);

  // Mean NLL over the validation split averaged across models; deterministic.
  // Requires a nonempty validation split.
  double validation_loss(const DatasetBuffer& buffer) const;

  // Samples a model index uniformly and returns s + predicted delta.
  // The prediction is clipped to +-kStateClip in normalized observation units.
  std::vector<double> predict(std::span<const double> s, std::span<const double> a,
                              Rng& rng) const;

  // Batched variant: one uniform model draw per row.
  nn::Matrix predict_batch(const nn::Matrix& states, const nn::Matrix& actions,
                           Rng& rng) const override;

  // Model parameter blob: k, obs_dim, act_dim header, the K serialized
  // parameter vectors, then the normalizer statistics.
  std::vector<uint8_t> to_blob() const;
  void load_blob(std::span<const uint8_t> blob);

  static constexpr double kStateClip = 100.0;  // in normalized units
  static constexpr double kLogStdMin = -10.0;
  static constexpr double kLogStdMax = 2.0;

 private:
  double nll_batch(int model, const nn::Matrix& inputs, const nn::Matrix& targets,
                   nn::ParamVector* grad) const;

  int obs_dim_;
  int act_dim_;
  EnsembleConfig config_;
  nn::MlpSpec mlp_spec_;
  size_t model_param_count_;
  std::vector<nn::ParamVector> params_;  // one per model
  Normalizer input_norm_;
  Normalizer target_norm_;
};

}  // namespace asyncdyna::model

#endif  // ASYNCDYNA_ENSEMBLE_HPP_
