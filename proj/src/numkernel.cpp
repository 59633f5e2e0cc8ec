// src/numkernel.cpp

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

#include "iqstream/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iqstream/errors.hpp"

namespace iqstream {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  return iqstream::all_finite(data(), size());
}

bool all_finite(const double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(data[i])) return false;
  }
  return true;
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void gemv(const Matrix& w, const double* x, double* y, bool accumulate) {
  const std::size_t rows = w.rows(), cols = w.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double v = dot(w.row(r), x, cols);
    y[r] = accumulate ? y[r] + v : v;
  }
}

void gemv_transposed_add(const Matrix& w, const double* dy, double* x_grad) {
  const std::size_t rows = w.rows(), cols = w.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double s = dy[r];
    if (s == 0.0) continue;
    const double* wr = w.row(r);
    for (std::size_t c = 0; c < cols; ++c) x_grad[c] += s * wr[c];
  }
}

void affine_param_grads(const double* dy, const double* x, Matrix* w_grad,
                        double* b_grad) {
  const std::size_t rows = w_grad->rows(), cols = w_grad->cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double s = dy[r];
    b_grad[r] += s;
    if (s == 0.0) continue;
    double* gr = w_grad->row(r);
    for (std::size_t c = 0; c < cols; ++c) gr[c] += s * x[c];
  }
}

Vec affine(const Vec& x, const Matrix& w, const Vec& b) {
  if (x.size() != w.cols()) {
    throw ShapeError("affine: len(x)=" + std::to_string(x.size()) +
                     " but w.cols=" + std::to_string(w.cols()));
  }
  if (b.size() != w.rows()) {
    throw ShapeError("affine: len(b)=" + std::to_string(b.size()) +
                     " but w.rows=" + std::to_string(w.rows()));
  }
  Vec y = b;
  const std::size_t rows = w.rows(), cols = w.cols();
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot(w.row(r), x.data(), cols);
  return y;
}

double logadd(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

double logsumexp(const Vec& values) {
  if (values.empty()) throw ArgumentError("logsumexp: empty input");
  const double hi = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(hi)) return hi;  // all -inf, or a +inf/nan dominates
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

void log_softmax_inplace(double* logits, std::size_t n) {
  const double hi = *std::max_element(logits, logits + n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(logits[i] - hi);
  const double lse = hi + std::log(acc);
  for (std::size_t i = 0; i < n; ++i) logits[i] -= lse;
}

Vec log_softmax(const Vec& logits) {
  if (logits.empty()) throw ArgumentError("log_softmax: empty input");
  Vec out = logits;
  log_softmax_inplace(out.data(), out.size());
  return out;
}

// ---------------------------------------------------------------------------
// LSTM

RecurrentState lstm_step(const RecurrentState& state, const Vec& input,
                         const LstmParams& params, LstmStepCache* cache) {
  const std::size_t width = params.width();
  if (input.size() != params.input_dim()) {
    throw ShapeError("lstm_step: input length " + std::to_string(input.size()) +
                     " != " + std::to_string(params.input_dim()));
  }
  if (state.hidden.size() != width || state.cell.size() != width) {
    throw ShapeError("lstm_step: state width mismatch");
  }
  if (params.w_input.rows() != 4 * width || params.w_recur.rows() != 4 * width ||
      params.w_recur.cols() != width) {
    throw ShapeError("lstm_step: parameter shapes inconsistent");
  }

  Vec z(4 * width);
  gemv(params.w_input, input.data(), z.data());
  gemv(params.w_recur, state.hidden.data(), z.data(), /*accumulate=*/true);
  for (std::size_t i = 0; i < 4 * width; ++i) z[i] += params.bias[i];

  RecurrentState next(width);
  Vec gi(width), gf(width), gg(width), go(width), ct(width);
  for (std::size_t i = 0; i < width; ++i) {
    gi[i] = sigmoid(z[i]);
    gf[i] = sigmoid(z[width + i]);
    gg[i] = std::tanh(z[2 * width + i]);
    go[i] = sigmoid(z[3 * width + i]);
    next.cell[i] = gf[i] * state.cell[i] + gi[i] * gg[i];
    ct[i] = std::tanh(next.cell[i]);
    next.hidden[i] = go[i] * ct[i];
  }

  if (cache != nullptr) {
    cache->input = input;
    cache->prev_hidden = state.hidden;
    cache->prev_cell = state.cell;
    cache->gate_i = std::move(gi);
    cache->gate_f = std::move(gf);
    cache->gate_g = std::move(gg);
    cache->gate_o = std::move(go);
    cache->cell = next.cell;
    cache->cell_tanh = std::move(ct);
  }
  return next;
}

void lstm_step_backward(const LstmParams& params, const LstmStepCache& cache,
                        const Vec& d_hidden, const Vec& d_cell,
                        LstmGrads* grads, Vec* d_prev_hidden, Vec* d_prev_cell,
                        Vec* d_input) {
  const std::size_t width = params.width();
  Vec dz(4 * width);
  d_prev_cell->assign(width, 0.0);
  for (std::size_t i = 0; i < width; ++i) {
    const double i_g = cache.gate_i[i], f_g = cache.gate_f[i];
    const double g_g = cache.gate_g[i], o_g = cache.gate_o[i];
    const double ct = cache.cell_tanh[i];
    const double dout = d_hidden[i];
    const double dct = dout * o_g;
    const double dc = d_cell[i] + dct * (1.0 - ct * ct);
    const double di = dc * g_g;
    const double df = dc * cache.prev_cell[i];
    const double dg = dc * i_g;
    const double do_ = dout * ct;
    dz[i] = di * i_g * (1.0 - i_g);
    dz[width + i] = df * f_g * (1.0 - f_g);
    dz[2 * width + i] = dg * (1.0 - g_g * g_g);
    dz[3 * width + i] = do_ * o_g * (1.0 - o_g);
    (*d_prev_cell)[i] = dc * f_g;
  }

  affine_param_grads(dz.data(), cache.input.data(), &grads->w_input,
                     grads->bias.data());
  // w_recur shares the bias accumulator with w_input; add the rank-1 term only.
  {
    const std::size_t rows = grads->w_recur.rows(), cols = grads->w_recur.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      const double s = dz[r];
      if (s == 0.0) continue;
      double* gr = grads->w_recur.row(r);
      for (std::size_t c = 0; c < cols; ++c) gr[c] += s * cache.prev_hidden[c];
    }
  }

  d_input->assign(params.input_dim(), 0.0);
  gemv_transposed_add(params.w_input, dz.data(), d_input->data());
  d_prev_hidden->assign(width, 0.0);
  gemv_transposed_add(params.w_recur, dz.data(), d_prev_hidden->data());
}

// ---------------------------------------------------------------------------
// Optimizers

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw ArgumentError("optimizer: learning_rate must be positive");
  }
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw ArgumentError("optimizer: adam betas must lie in (0, 1)");
  }
  if (clip_norm.has_value() && !(*clip_norm > 0.0)) {
    throw ArgumentError("optimizer: clip_norm must be positive when set");
  }
}

void optimizer_step(const ParamView& params, const ParamView& grads,
                    const OptimizerConfig& cfg, uint64_t step_index,
                    OptimizerState* state) {
  cfg.validate();
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer_step: view slice counts differ");
  }
  std::size_t total = 0;
  for (std::size_t s = 0; s < params.size(); ++s) {
    if (params[s].size != grads[s].size) {
      throw ShapeError("optimizer_step: slice '" + params[s].name +
                       "' size mismatch");
    }
    if (!all_finite(grads[s].data, grads[s].size)) {
      throw TrainingError("non-finite gradient in parameter '" +
                          params[s].name + "'");
    }
    total += params[s].size;
  }

  double scale = 1.0;
  if (cfg.clip_norm.has_value()) {
    double sq = 0.0;
    for (const auto& g : grads) {
      for (std::size_t i = 0; i < g.size; ++i) sq += g.data[i] * g.data[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > *cfg.clip_norm) scale = *cfg.clip_norm / norm;
  }

  if (cfg.method == OptMethod::kSgd) {
    for (std::size_t s = 0; s < params.size(); ++s) {
      double* p = params[s].data;
      const double* g = grads[s].data;
      for (std::size_t i = 0; i < params[s].size; ++i) {
        p[i] -= cfg.learning_rate * scale * g[i];
      }
    }
    return;
  }

  if (state->m.size() != total) {
    state->m.assign(total, 0.0);
    state->v.assign(total, 0.0);
  }
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step_index));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step_index));
  std::size_t off = 0;
  for (std::size_t s = 0; s < params.size(); ++s) {
    double* p = params[s].data;
    const double* g = grads[s].data;
    for (std::size_t i = 0; i < params[s].size; ++i) {
      const double gi = scale * g[i];
      double& m = state->m[off + i];
      double& v = state->v[off + i];
      m = b1 * m + (1.0 - b1) * gi;
      v = b2 * v + (1.0 - b2) * gi * gi;
      const double mhat = m / corr1;
      const double vhat = v / corr2;
      p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
    }
    off += params[s].size;
  }
}

void fill_uniform(Rng& rng, double radius, double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = rng.next_uniform(-radius, radius);
  }
}

}  // namespace iqstream
