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

#ifndef ASYNCDYNA_NN_HPP_
#define ASYNCDYNA_NN_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "asyncdyna/rng.hpp"

namespace asyncdyna::nn {

enum class Activation { kTanh, kRelu };

// Dense multi-layer perceptron shape. Hidden layers use `activation`,
// the output layer is affine.
struct MlpSpec {
  std::vector<int> layer_sizes;  // input dim, hidden dims..., output dim
  Activation activation = Activation::kTanh;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

  // Total parameter count: per layer, n_in*n_out weights plus n_out biases.
  int param_count() const;

  // Throws std::invalid_argument unless there are >= 2 layer sizes, all >= 1.
  void validate() const;
};

// Flat parameter storage. Layout is fixed: for each layer in order, the
// weight matrix row-major (one row per output unit), then the bias vector.
// Parameter blobs cross worker boundaries, so this layout is a wire contract.
using ParamVector = std::vector<double>;

// Row-major dense matrix; the only tensor type in the project.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  std::vector<double> row_vec(int r) const {
    return std::vector<double>(row(r), row(r) + cols);
  }
  void set_row(int r, std::span<const double> values);
};

// Post-activation values per layer recorded by the forward pass;
// layer_outputs[0] is the input, layer_outputs[num_layers] the output.
struct ForwardTrace {
  std::vector<Matrix> layer_outputs;
};

// Uniform(-b, b) weights with b = sqrt(6 / (fan_in + fan_out)), zero biases.
ParamVector init_params(const MlpSpec& spec, Rng& rng);

// Batched forward pass. input is batch x input_dim. Throws
// std::invalid_argument on any dimension mismatch.
Matrix mlp_forward(const MlpSpec& spec, std::span<const double> params,
                   const Matrix& input, ForwardTrace* trace = nullptr);

// Single-sample convenience wrapper.
std::vector<double> mlp_forward(const MlpSpec& spec, std::span<const double> params,
                                std::span<const double> input);

// Exact reverse-mode gradients of <upstream, mlp_forward(input)> w.r.t.
// parameters and inputs. `trace` must come from a forward pass with the same
// spec/params/input. param_grad is accumulated into (callers zero it first
// when they want plain gradients); its length must equal spec.param_count().
void mlp_backward(const MlpSpec& spec, std::span<const double> params,
                  const ForwardTrace& trace, const Matrix& upstream,
                  std::span<double> param_grad, Matrix* input_grad = nullptr);

// Single-sample wrapper returning (param_grad, input_grad).
std::pair<ParamVector, std::vector<double>> mlp_backward(
    const MlpSpec& spec, std::span<const double> params,
    std::span<const double> input, std::span<const double> upstream_grad);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamState() = default;
  explicit AdamState(size_t n, AdamConfig cfg = {})
      : hyper(cfg), m(n, 0.0), v(n, 0.0) {}

  AdamConfig hyper;
  std::vector<double> m;
  std::vector<double> v;
  int64_t t = 0;
};

// Standard bias-corrected Adam update, in place. Throws NumericError if the
// gradient contains non-finite entries.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad);

// Log density of a diagonal Gaussian:
//   sum_d [ -log_std_d - 0.5*log(2*pi) - 0.5*((x_d - mean_d)/exp(log_std_d))^2 ]
double gaussian_log_density(std::span<const double> mean, std::span<const double> log_std,
                            std::span<const double> x);

// Entropy of a diagonal Gaussian: sum_d (log_std_d + 0.5*log(2*pi*e)).
double gaussian_entropy(std::span<const double> log_std);

bool all_finite(std::span<const double> values);

// -- wire format -------------------------------------------------------------
// A serialized ParamVector is a little-endian u32 element count followed by
// that many little-endian IEEE-754 doubles. Round-trips bit-exactly.

void serialize_params(std::span<const double> params, std::vector<uint8_t>* out);

// Reads one ParamVector starting at *offset and advances it. Throws
// std::invalid_argument on truncated input.
ParamVector deserialize_params(std::span<const uint8_t> bytes, size_t* offset);

}  // namespace asyncdyna::nn

#endif  // ASYNCDYNA_NN_HPP_
