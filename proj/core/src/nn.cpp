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

#include "asyncdyna/nn.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>
#include <string>

#include "asyncdyna/error.hpp"

namespace asyncdyna::nn {

namespace {

// C (m x n) += A (m x k) * B(n x k)^T, i.e. C[i][j] += dot(A.row(i), B.row(j)).
void gemm_nt(const double* a, int m, int k, const double* b, int n, double* c) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      double sum = 0.0;
      for (int l = 0; l < k; ++l) sum += ai[l] * bj[l];
      ci[j] += sum;
    }
  }
}

// C (m x n) += A (m x k) * B (k x n).
void gemm_nn(const double* a, int m, int k, const double* b, int n, double* c) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double coef = ai[l];
      const double* bl = b + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) ci[j] += coef * bl[j];
    }
  }
}

// C (m x n) += A (k x m)^T * B (k x n), used for dW = D^T * A.
void gemm_tn(const double* a, int k, int m, const double* b, int n, double* c) {
  for (int l = 0; l < k; ++l) {
    const double* al = a + static_cast<size_t>(l) * m;
    const double* bl = b + static_cast<size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      const double coef = al[i];
      if (coef == 0.0) continue;
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += coef * bl[j];
    }
  }
}

void apply_activation(Matrix* z, Activation act) {
  if (act == Activation::kTanh) {
    for (double& v : z->data) v = std::tanh(v);
  } else {
    for (double& v : z->data) v = v > 0.0 ? v : 0.0;
  }
}

// Multiplies `d` elementwise by the activation derivative, reconstructed from
// the post-activation values in `a` (tanh' = 1 - a^2, relu' = [a > 0]).
void apply_activation_grad(Matrix* d, const Matrix& a, Activation act) {
  if (act == Activation::kTanh) {
    for (size_t i = 0; i < d->data.size(); ++i) d->data[i] *= 1.0 - a.data[i] * a.data[i];
  } else {
    for (size_t i = 0; i < d->data.size(); ++i) {
      if (a.data[i] <= 0.0) d->data[i] = 0.0;
    }
  }
}

}  // namespace

void Matrix::set_row(int r, std::span<const double> values) {
  if (static_cast<int>(values.size()) != cols) {
    throw std::invalid_argument("Matrix::set_row: length mismatch");
  }
  std::memcpy(row(r), values.data(), sizeof(double) * values.size());
}

int MlpSpec::param_count() const {
  int total = 0;
  for (size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    total += layer_sizes[i] * layer_sizes[i + 1] + layer_sizes[i + 1];
  }
  return total;
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("MlpSpec: need at least input and output sizes");
  }
  for (int n : layer_sizes) {
    if (n < 1) throw std::invalid_argument("MlpSpec: layer sizes must be >= 1");
  }
}

ParamVector init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  ParamVector params(static_cast<size_t>(spec.param_count()), 0.0);
  size_t off = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int n_in = spec.layer_sizes[l];
    const int n_out = spec.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (n_in + n_out));
    for (int i = 0; i < n_in * n_out; ++i) params[off++] = rng.uniform(-bound, bound);
    off += static_cast<size_t>(n_out);  // biases stay zero
  }
  return params;
}

Matrix mlp_forward(const MlpSpec& spec, std::span<const double> params,
                   const Matrix& input, ForwardTrace* trace) {
  spec.validate();
  if (static_cast<int>(params.size()) < spec.param_count()) {
    throw std::invalid_argument("mlp_forward: parameter vector too short");
  }
  if (input.cols != spec.input_dim()) {
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(input.cols) +
                                " columns, spec expects " + std::to_string(spec.input_dim()));
  }
  if (trace) {
    trace->layer_outputs.clear();
    trace->layer_outputs.push_back(input);
  }
  Matrix a = input;
  size_t off = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int n_in = spec.layer_sizes[l];
    const int n_out = spec.layer_sizes[l + 1];
    const double* w = params.data() + off;
    const double* b = w + static_cast<size_t>(n_in) * n_out;
    off += static_cast<size_t>(n_in) * n_out + n_out;

    Matrix z(a.rows, n_out);
    for (int r = 0; r < z.rows; ++r) std::memcpy(z.row(r), b, sizeof(double) * n_out);
    gemm_nt(a.data.data(), a.rows, n_in, w, n_out, z.data.data());
    if (l + 1 < spec.num_layers()) apply_activation(&z, spec.activation);
    a = std::move(z);
    if (trace) trace->layer_outputs.push_back(a);
  }
  return a;
}

std::vector<double> mlp_forward(const MlpSpec& spec, std::span<const double> params,
                                std::span<const double> input) {
  Matrix in(1, static_cast<int>(input.size()));
  std::memcpy(in.row(0), input.data(), sizeof(double) * input.size());
  Matrix out = mlp_forward(spec, params, in);
  return out.data;
}

void mlp_backward(const MlpSpec& spec, std::span<const double> params,
                  const ForwardTrace& trace, const Matrix& upstream,
                  std::span<double> param_grad, Matrix* input_grad) {
  spec.validate();
  const int layers = spec.num_layers();
  if (static_cast<int>(trace.layer_outputs.size()) != layers + 1) {
    throw std::invalid_argument("mlp_backward: trace does not match spec");
  }
  if (upstream.cols != spec.output_dim() || upstream.rows != trace.layer_outputs.back().rows) {
    throw std::invalid_argument("mlp_backward: upstream gradient shape mismatch");
  }
  if (static_cast<int>(param_grad.size()) < spec.param_count()) {
    throw std::invalid_argument("mlp_backward: param_grad too short");
  }

  // Parameter offsets per layer.
  std::vector<size_t> offsets(layers);
  size_t off = 0;
  for (int l = 0; l < layers; ++l) {
    offsets[l] = off;
    off += static_cast<size_t>(spec.layer_sizes[l]) * spec.layer_sizes[l + 1] +
           spec.layer_sizes[l + 1];
  }

  Matrix d = upstream;  // gradient w.r.t. the current layer's pre-activation
  for (int l = layers - 1; l >= 0; --l) {
    const int n_in = spec.layer_sizes[l];
    const int n_out = spec.layer_sizes[l + 1];
    const double* w = params.data() + offsets[l];
    double* dw = param_grad.data() + offsets[l];
    double* db = dw + static_cast<size_t>(n_in) * n_out;
    const Matrix& a_prev = trace.layer_outputs[l];

    // dW = d^T * a_prev, db = column sums of d.
    gemm_tn(d.data.data(), d.rows, n_out, a_prev.data.data(), n_in, dw);
    for (int r = 0; r < d.rows; ++r) {
      const double* dr = d.row(r);
      for (int j = 0; j < n_out; ++j) db[j] += dr[j];
    }

    if (l > 0 || input_grad) {
      Matrix prev(d.rows, n_in);
      gemm_nn(d.data.data(), d.rows, n_out, w, n_in, prev.data.data());
      if (l > 0) {
        apply_activation_grad(&prev, trace.layer_outputs[l], spec.activation);
        d = std::move(prev);
      } else if (input_grad) {
        *input_grad = std::move(prev);
      }
    }
  }
}

std::pair<ParamVector, std::vector<double>> mlp_backward(
    const MlpSpec& spec, std::span<const double> params,
    std::span<const double> input, std::span<const double> upstream_grad) {
  Matrix in(1, static_cast<int>(input.size()));
  std::memcpy(in.row(0), input.data(), sizeof(double) * input.size());
  ForwardTrace trace;
  mlp_forward(spec, params, in, &trace);
  Matrix up(1, static_cast<int>(upstream_grad.size()));
  std::memcpy(up.row(0), upstream_grad.data(), sizeof(double) * upstream_grad.size());

  ParamVector param_grad(static_cast<size_t>(spec.param_count()), 0.0);
  Matrix input_grad;
  mlp_backward(spec, params, trace, up, param_grad, &input_grad);
  return {std::move(param_grad), std::move(input_grad.data)};
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: length mismatch");
  }
  if (!all_finite(grad)) {
    throw NumericError("adam_step: non-finite gradient");
  }
  const AdamConfig& h = state.hyper;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

double gaussian_log_density(std::span<const double> mean, std::span<const double> log_std,
                            std::span<const double> x) {
  if (mean.size() != log_std.size() || mean.size() != x.size()) {
    throw std::invalid_argument("gaussian_log_density: length mismatch");
  }
  constexpr double kHalfLog2Pi = 0.9189385332046727417803297;  // 0.5*log(2*pi)
  double total = 0.0;
  for (size_t d = 0; d < x.size(); ++d) {
    const double z = (x[d] - mean[d]) * std::exp(-log_std[d]);
    total += -log_std[d] - kHalfLog2Pi - 0.5 * z * z;
  }
  return total;
}

double gaussian_entropy(std::span<const double> log_std) {
  constexpr double kHalfLog2PiE = 1.4189385332046727417803297;  // 0.5*log(2*pi*e)
  double total = 0.0;
  for (double ls : log_std) total += ls + kHalfLog2PiE;
  return total;
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void serialize_params(std::span<const double> params, std::vector<uint8_t>* out) {
  const uint32_t n = static_cast<uint32_t>(params.size());
  const size_t base = out->size();
  out->resize(base + 4 + sizeof(double) * n);
  uint8_t* p = out->data() + base;
  std::memcpy(p, &n, 4);
  std::memcpy(p + 4, params.data(), sizeof(double) * n);
}

ParamVector deserialize_params(std::span<const uint8_t> bytes, size_t* offset) {
  if (*offset + 4 > bytes.size()) {
    throw std::invalid_argument("deserialize_params: truncated header");
  }
  uint32_t n = 0;
  std::memcpy(&n, bytes.data() + *offset, 4);
  *offset += 4;
  if (*offset + sizeof(double) * n > bytes.size()) {
    throw std::invalid_argument("deserialize_params: truncated payload");
  }
  ParamVector params(n);
  std::memcpy(params.data(), bytes.data() + *offset, sizeof(double) * n);
  *offset += sizeof(double) * n;
  return params;
}

}  // namespace asyncdyna::nn
