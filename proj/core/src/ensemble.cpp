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

#include "asyncdyna/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "asyncdyna/error.hpp"

namespace asyncdyna::model {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727417803297;
}

// -- Normalizer ---------------------------------------------------------------

void Normalizer::fit(const nn::Matrix& rows) {
  if (rows.rows == 0) throw std::invalid_argument("Normalizer::fit: empty data");
  mean.assign(rows.cols, 0.0);
  std.assign(rows.cols, 0.0);
  for (int r = 0; r < rows.rows; ++r) {
    const double* row = rows.row(r);
    for (int c = 0; c < rows.cols; ++c) mean[c] += row[c];
  }
  for (double& m : mean) m /= rows.rows;
  for (int r = 0; r < rows.rows; ++r) {
    const double* row = rows.row(r);
    for (int c = 0; c < rows.cols; ++c) {
      const double d = row[c] - mean[c];
      std[c] += d * d;
    }
  }
  for (double& s : std) s = std::max(std::sqrt(s / rows.rows), kMinStd);
  count = rows.rows;
}

void Normalizer::normalize(nn::Matrix* rows) const {
  for (int r = 0; r < rows->rows; ++r) {
    double* row = rows->row(r);
    for (int c = 0; c < rows->cols; ++c) row[c] = (row[c] - mean[c]) / std[c];
  }
}

void Normalizer::denormalize(nn::Matrix* rows) const {
  for (int r = 0; r < rows->rows; ++r) {
    double* row = rows->row(r);
    for (int c = 0; c < rows->cols; ++c) row[c] = row[c] * std[c] + mean[c];
  }
}

std::vector<double> Normalizer::normalize(std::span<const double> row) const {
  std::vector<double> out(row.size());
  for (size_t c = 0; c < row.size(); ++c) out[c] = (row[c] - mean[c]) / std[c];
  return out;
}

std::vector<double> Normalizer::denormalize(std::span<const double> row) const {
  std::vector<double> out(row.size());
  for (size_t c = 0; c < row.size(); ++c) out[c] = row[c] * std[c] + mean[c];
  return out;
}

// -- DatasetBuffer ------------------------------------------------------------

DatasetBuffer::DatasetBuffer(size_t capacity, double validation_fraction)
    : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("DatasetBuffer: zero capacity");
  if (validation_fraction <= 0.0 || validation_fraction >= 1.0) {
    throw std::invalid_argument("DatasetBuffer: validation fraction must be in (0, 1)");
  }
  stride_ = static_cast<size_t>(std::llround(1.0 / validation_fraction));
  if (stride_ < 2) stride_ = 2;
}

void DatasetBuffer::append(const envs::Transition& tr) {
  Row row{tr.s, tr.a, tr.s_next, arrivals_ % stride_ == stride_ - 1};
  arrivals_ += 1;
  rows_.push_back(std::move(row));
  while (rows_.size() > capacity_) rows_.pop_front();
}

void DatasetBuffer::append(const envs::Trajectory& traj) {
  for (const envs::Transition& tr : traj.transitions) append(tr);
}

size_t DatasetBuffer::train_size() const {
  return rows_.size() - validation_size();
}

size_t DatasetBuffer::validation_size() const {
  size_t n = 0;
  for (const Row& r : rows_) n += r.validation ? 1 : 0;
  return n;
}

void DatasetBuffer::build_matrices(bool validation, nn::Matrix* inputs,
                                   nn::Matrix* targets) const {
  if (rows_.empty()) throw std::invalid_argument("DatasetBuffer: empty buffer");
  const int obs_dim = static_cast<int>(rows_.front().s.size());
  const int act_dim = static_cast<int>(rows_.front().a.size());
  size_t n = validation ? validation_size() : train_size();
  *inputs = nn::Matrix(static_cast<int>(n), obs_dim + act_dim);
  *targets = nn::Matrix(static_cast<int>(n), obs_dim);
  int i = 0;
  for (const Row& row : rows_) {
    if (row.validation != validation) continue;
    double* in = inputs->row(i);
    std::memcpy(in, row.s.data(), sizeof(double) * obs_dim);
    std::memcpy(in + obs_dim, row.a.data(), sizeof(double) * act_dim);
    double* tgt = targets->row(i);
    for (int c = 0; c < obs_dim; ++c) tgt[c] = row.s_next[c] - row.s[c];
    ++i;
  }
}

// -- ValidationTracker ----------------------------------------------------------

bool ValidationTracker::should_stop(double new_val_loss) {
  if (!initialized) {
    ema = new_val_loss;
    initialized = true;
    return false;
  }
  const bool stop = new_val_loss > ema;
  ema = beta * ema + (1.0 - beta) * new_val_loss;
  return stop;
}

void ValidationTracker::reset() {
  initialized = false;
  ema = 0.0;
}

// -- Ensemble -------------------------------------------------------------------

Ensemble::Ensemble(int obs_dim, int act_dim, const EnsembleConfig& config, uint64_t seed)
    : obs_dim_(obs_dim), act_dim_(act_dim), config_(config) {
  if (config.k < 1) throw std::invalid_argument("Ensemble: k must be >= 1");
  mlp_spec_.layer_sizes.push_back(obs_dim + act_dim);
  for (int h : config.hidden) mlp_spec_.layer_sizes.push_back(h);
  mlp_spec_.layer_sizes.push_back(obs_dim);
  mlp_spec_.activation = config.activation;
  mlp_spec_.validate();
  model_param_count_ = static_cast<size_t>(mlp_spec_.param_count()) + obs_dim;

  Rng rng(seed);
  for (int i = 0; i < config.k; ++i) {
    Rng model_rng = rng.split(static_cast<uint64_t>(i) + 1);
    nn::ParamVector p = nn::init_params(mlp_spec_, model_rng);
    p.resize(model_param_count_, config.log_std_init);
    params_.push_back(std::move(p));
  }
}

std::span<const double> Ensemble::model_params(int i) const {
  return {params_[i].data(), params_[i].size()};
}

std::span<double> Ensemble::mutable_model_params(int i) {
  return {params_[i].data(), params_[i].size()};
}

std::vector<nn::AdamState> Ensemble::make_adam_states() const {
  nn::AdamConfig cfg;
  cfg.lr = config_.lr;
  std::vector<nn::AdamState> states;
  states.reserve(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    states.emplace_back(model_param_count_, cfg);
  }
  return states;
}

void Ensemble::refit_normalizers(const DatasetBuffer& buffer) {
  nn::Matrix inputs, targets;
  buffer.build_matrices(/*validation=*/false, &inputs, &targets);
  if (inputs.rows == 0) return;
  input_norm_.fit(inputs);
  target_norm_.fit(targets);
}

// Mean NLL of normalized targets for one model over a normalized input batch;
// accumulates the parameter gradient (mlp then log_std) when grad != nullptr.
double Ensemble::nll_batch(int model, const nn::Matrix& inputs, const nn::Matrix& targets,
                           nn::ParamVector* grad) const {
  const int n = inputs.rows;
  const std::span<const double> full = model_params(model);
  const std::span<const double> mlp = full.subspan(0, mlp_spec_.param_count());
  const std::span<const double> log_std = full.subspan(mlp_spec_.param_count());

  nn::ForwardTrace trace;
  nn::Matrix mu = nn::mlp_forward(mlp_spec_, mlp, inputs, grad ? &trace : nullptr);

  double total = 0.0;
  nn::Matrix upstream(grad ? n : 0, grad ? obs_dim_ : 0);
  std::vector<double> log_std_grad(grad ? obs_dim_ : 0, 0.0);
  for (int r = 0; r < n; ++r) {
    const double* m = mu.row(r);
    const double* y = targets.row(r);
    for (int d = 0; d < obs_dim_; ++d) {
      const double inv_std = std::exp(-log_std[d]);
      const double z = (y[d] - m[d]) * inv_std;
      total += log_std[d] + kHalfLog2Pi + 0.5 * z * z;
      if (grad) {
        // dNLL/dmu = (mu - y) * exp(-2*log_std), averaged over the batch.
        upstream(r, d) = (m[d] - y[d]) * inv_std * inv_std / n;
        log_std_grad[d] += (1.0 - z * z) / n;
      }
    }
  }
  total /= n;

  if (grad) {
    std::span<double> g(grad->data(), grad->size());
    nn::mlp_backward(mlp_spec_, mlp, trace, upstream, g.subspan(0, mlp_spec_.param_count()));
    for (int d = 0; d < obs_dim_; ++d) {
      (*grad)[mlp_spec_.param_count() + d] += log_std_grad[d];
    }
  }
  return total;
}

std::vector<double> Ensemble::train_epoch(const DatasetBuffer& buffer,
                                          std::vector<nn::AdamState>* adam_states,
                                          Rng& rng) {
  if (buffer.train_size() == 0) {
    throw std::invalid_argument("train_epoch: no training data");
  }
  if (!input_norm_.fitted()) refit_normalizers(buffer);

  nn::Matrix inputs, targets;
  buffer.build_matrices(/*validation=*/false, &inputs, &targets);
  input_norm_.normalize(&inputs);
  target_norm_.normalize(&targets);

  const int n = inputs.rows;
  const int batch = std::max(1, std::min(config_.minibatch, n));
  std::vector<double> losses(params_.size(), 0.0);

  for (size_t model = 0; model < params_.size(); ++model) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    double epoch_loss = 0.0;
    nn::ParamVector grad(model_param_count_, 0.0);
    for (int start = 0; start < n; start += batch) {
      const int len = std::min(batch, n - start);
      nn::Matrix bx(len, inputs.cols), by(len, targets.cols);
      for (int i = 0; i < len; ++i) {
        std::memcpy(bx.row(i), inputs.row(order[start + i]), sizeof(double) * inputs.cols);
        std::memcpy(by.row(i), targets.row(order[start + i]), sizeof(double) * targets.cols);
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      // Weight by batch size so the reported loss is the exact epoch mean,
      // independent of shuffle order.
      epoch_loss += nll_batch(static_cast<int>(model), bx, by, &grad) * len;
      nn::adam_step((*adam_states)[model], mutable_model_params(static_cast<int>(model)),
                    grad);
      // Keep the learned noise head in a sane band.
      std::span<double> p = mutable_model_params(static_cast<int>(model));
      for (int d = 0; d < obs_dim_; ++d) {
        double& ls = p[mlp_spec_.param_count() + d];
        ls = std::clamp(ls, kLogStdMin, kLogStdMax);
      }
    }
    losses[model] = epoch_loss / n;
    if (!std::isfinite(losses[model])) {
      throw NumericError("train_epoch: non-finite training loss");
    }
  }
  return losses;
}

double Ensemble::validation_loss(const DatasetBuffer& buffer) const {
  if (buffer.validation_size() == 0) {
    throw std::invalid_argument("validation_loss: empty validation split");
  }
  if (!input_norm_.fitted()) {
    throw std::invalid_argument("validation_loss: normalizers not fitted");
  }
  nn::Matrix inputs, targets;
  buffer.build_matrices(/*validation=*/true, &inputs, &targets);
  input_norm_.normalize(&inputs);
  target_norm_.normalize(&targets);

  double total = 0.0;
  for (size_t model = 0; model < params_.size(); ++model) {
    total += nll_batch(static_cast<int>(model), inputs, targets, nullptr);
  }
  return total / static_cast<double>(params_.size());
}

std::vector<double> Ensemble::predict(std::span<const double> s, std::span<const double> a,
                                      Rng& rng) const {
  nn::Matrix states(1, obs_dim_), actions(1, act_dim_);
  states.set_row(0, s);
  actions.set_row(0, a);
  nn::Matrix next = predict_batch(states, actions, rng);
  return next.row_vec(0);
}

nn::Matrix Ensemble::predict_batch(const nn::Matrix& states, const nn::Matrix& actions,
                                   Rng& rng) const {
  if (states.rows != actions.rows || states.cols != obs_dim_ || actions.cols != act_dim_) {
    throw std::invalid_argument("predict_batch: dimension mismatch");
  }
  if (!input_norm_.fitted()) {
    throw std::invalid_argument("predict_batch: normalizers not fitted");
  }
  const int n = states.rows;

  nn::Matrix inputs(n, obs_dim_ + act_dim_);
  for (int r = 0; r < n; ++r) {
    std::memcpy(inputs.row(r), states.row(r), sizeof(double) * obs_dim_);
    std::memcpy(inputs.row(r) + obs_dim_, actions.row(r), sizeof(double) * act_dim_);
  }
  input_norm_.normalize(&inputs);

  // Uniform prior on the ensemble: one model index per row.
  std::vector<int> pick(n);
  for (int r = 0; r < n; ++r) pick[r] = rng.uniform_int(config_.k);

  nn::Matrix next(n, obs_dim_);
  for (int model = 0; model < config_.k; ++model) {
    std::vector<int> rows;
    for (int r = 0; r < n; ++r) {
      if (pick[r] == model) rows.push_back(r);
    }
    if (rows.empty()) continue;
    nn::Matrix sub(static_cast<int>(rows.size()), inputs.cols);
    for (size_t i = 0; i < rows.size(); ++i) {
      std::memcpy(sub.row(static_cast<int>(i)), inputs.row(rows[i]),
                  sizeof(double) * inputs.cols);
    }
    const std::span<const double> mlp =
        model_params(model).subspan(0, mlp_spec_.param_count());
    nn::Matrix mu = nn::mlp_forward(mlp_spec_, mlp, sub);
    target_norm_.denormalize(&mu);
    for (size_t i = 0; i < rows.size(); ++i) {
      const int r = rows[i];
      double* out = next.row(r);
      const double* delta = mu.row(static_cast<int>(i));
      const double* s = states.row(r);
      for (int d = 0; d < obs_dim_; ++d) out[d] = s[d] + delta[d];
    }
  }

  // Clip to +-kStateClip in normalized observation units; the observation
  // statistics live in the first obs_dim input columns. Dimensions whose std
  // sits on the floor carry no scale information and are left unclipped.
  for (int r = 0; r < n; ++r) {
    double* out = next.row(r);
    for (int d = 0; d < obs_dim_; ++d) {
      if (input_norm_.std[d] > Normalizer::kMinStd) {
        const double lo = input_norm_.mean[d] - kStateClip * input_norm_.std[d];
        const double hi = input_norm_.mean[d] + kStateClip * input_norm_.std[d];
        out[d] = std::clamp(out[d], lo, hi);
      }
      if (!std::isfinite(out[d])) {
        throw NumericError("predict_batch: non-finite prediction");
      }
    }
  }
  return next;
}

std::vector<uint8_t> Ensemble::to_blob() const {
  std::vector<uint8_t> blob;
  const uint32_t header[3] = {static_cast<uint32_t>(config_.k),
                              static_cast<uint32_t>(obs_dim_),
                              static_cast<uint32_t>(act_dim_)};
  blob.resize(sizeof(header));
  std::memcpy(blob.data(), header, sizeof(header));
  for (const nn::ParamVector& p : params_) nn::serialize_params(p, &blob);
  nn::serialize_params(input_norm_.mean, &blob);
  nn::serialize_params(input_norm_.std, &blob);
  nn::serialize_params(target_norm_.mean, &blob);
  nn::serialize_params(target_norm_.std, &blob);
  return blob;
}

void Ensemble::load_blob(std::span<const uint8_t> blob) {
  if (blob.size() < 12) throw std::invalid_argument("Ensemble::load_blob: truncated");
  uint32_t header[3];
  std::memcpy(header, blob.data(), sizeof(header));
  if (static_cast<int>(header[0]) != config_.k || static_cast<int>(header[1]) != obs_dim_ ||
      static_cast<int>(header[2]) != act_dim_) {
    throw std::invalid_argument("Ensemble::load_blob: shape mismatch");
  }
  size_t off = sizeof(header);
  std::vector<nn::ParamVector> params;
  for (int i = 0; i < config_.k; ++i) {
    nn::ParamVector p = nn::deserialize_params(blob, &off);
    if (p.size() != model_param_count_) {
      throw std::invalid_argument("Ensemble::load_blob: parameter count mismatch");
    }
    params.push_back(std::move(p));
  }
  Normalizer in_norm, tgt_norm;
  in_norm.mean = nn::deserialize_params(blob, &off);
  in_norm.std = nn::deserialize_params(blob, &off);
  tgt_norm.mean = nn::deserialize_params(blob, &off);
  tgt_norm.std = nn::deserialize_params(blob, &off);
  in_norm.count = tgt_norm.count = 1;
  params_ = std::move(params);
  input_norm_ = std::move(in_norm);
  target_norm_ = std::move(tgt_norm);
}

}  // namespace asyncdyna::model
