// include/iqstream/numkernel.hpp

// Copyright 2026 The iqstream Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense numeric substrate: row-major double matrices, affine maps, an LSTM
// cell, stable log-space reductions and the two optimizers. Every model in
// the repo is built on these primitives and every gradient is produced by
// the explicit backward passes declared here; there is no autodiff graph.

#ifndef IQSTREAM_NUMKERNEL_HPP_
#define IQSTREAM_NUMKERNEL_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iqstream/rng.hpp"

namespace iqstream {

using Vec = std::vector<double>;

// Row-major dense matrix of 64-bit floats.
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v) { data_.assign(data_.size(), v); }
  bool all_finite() const;

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_, cols_;
  Vec data_;
};

// ---------------------------------------------------------------------------
// Affine maps

// Returns w*x + b. Throws ShapeError on dimension mismatch.
Vec affine(const Vec& x, const Matrix& w, const Vec& b);

// y = w*x (+ y if accumulate). Low-level kernel shared by the models.
void gemv(const Matrix& w, const double* x, double* y, bool accumulate = false);

// x_grad += w^T * dy
void gemv_transposed_add(const Matrix& w, const double* dy, double* x_grad);

// w_grad += dy * x^T, b_grad += dy
void affine_param_grads(const double* dy, const double* x, Matrix* w_grad,
                        double* b_grad);

// ---------------------------------------------------------------------------
// Log-space reductions

// Numerically stable log of sum of exponentials. Throws ArgumentError when
// values is empty.
double logsumexp(const Vec& values);
double logadd(double a, double b);

// Max-shifted log softmax; exp of the result sums to 1. Throws ArgumentError
// when logits is empty.
Vec log_softmax(const Vec& logits);

// In-place variant over a raw buffer (hot path in the lattice loss).
void log_softmax_inplace(double* logits, std::size_t n);

// ---------------------------------------------------------------------------
// LSTM cell

// Gate blocks are stored stacked in the order input, forget, cell, output.
struct LstmParams {
  Matrix w_input;  // (4*width) x input_dim
  Matrix w_recur;  // (4*width) x width
  Vec bias;        // 4*width

  std::size_t width() const { return bias.size() / 4; }
  std::size_t input_dim() const { return w_input.cols(); }
};

struct RecurrentState {
  Vec hidden;
  Vec cell;

  RecurrentState() = default;
  explicit RecurrentState(std::size_t width)
      : hidden(width, 0.0), cell(width, 0.0) {}
};

// Everything the backward pass needs from one forward step.
struct LstmStepCache {
  Vec input;
  Vec prev_hidden, prev_cell;
  Vec gate_i, gate_f, gate_g, gate_o;  // post-activation
  Vec cell, cell_tanh;
};

// Standard LSTM recurrence; output is the new hidden state. When cache is
// non-null the step records what the backward pass needs.
RecurrentState lstm_step(const RecurrentState& state, const Vec& input,
                         const LstmParams& params,
                         LstmStepCache* cache = nullptr);

struct LstmGrads {
  Matrix w_input;
  Matrix w_recur;
  Vec bias;

  explicit LstmGrads(const LstmParams& p)
      : w_input(p.w_input.rows(), p.w_input.cols()),
        w_recur(p.w_recur.rows(), p.w_recur.cols()),
        bias(p.bias.size(), 0.0) {}
};

// One step of backpropagation through time. d_hidden/d_cell are the incoming
// gradients for this step's outputs; d_prev_* and d_input are overwritten.
void lstm_step_backward(const LstmParams& params, const LstmStepCache& cache,
                        const Vec& d_hidden, const Vec& d_cell,
                        LstmGrads* grads, Vec* d_prev_hidden, Vec* d_prev_cell,
                        Vec* d_input);

// ---------------------------------------------------------------------------
// Optimizers

enum class OptMethod { kSgd, kAdam };

struct OptimizerConfig {
  OptMethod method = OptMethod::kAdam;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::optional<double> clip_norm = 5.0;

  void validate() const;
};

// Named view over one parameter tensor; the full model is a list of these.
struct ParamSlice {
  std::string name;
  double* data;
  std::size_t size;
};
using ParamView = std::vector<ParamSlice>;

// First-moment/second-moment buffers for Adam, laid out to match the
// concatenation of the view's slices.
struct OptimizerState {
  Vec m, v;
};

// Applies one update step in place. step_index is 1-based and drives Adam's
// bias correction. Global-norm clipping runs first when cfg.clip_norm is set.
// Throws TrainingError naming the slice if a gradient is non-finite.
void optimizer_step(const ParamView& params, const ParamView& grads,
                    const OptimizerConfig& cfg, uint64_t step_index,
                    OptimizerState* state);

// ---------------------------------------------------------------------------
// Small helpers shared by the models

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill_uniform(Rng& rng, double radius, double* data, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
bool all_finite(const double* data, std::size_t n);

}  // namespace iqstream

#endif  // IQSTREAM_NUMKERNEL_HPP_
