// src/baselines.cpp

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

#include "iqstream/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "iqstream/errors.hpp"
#include "iqstream/logging.hpp"
#include "iqstream/parallel.hpp"
#include "iqstream/rng.hpp"

namespace iqstream {

namespace {

void fill_tensor(Rng* rng, double* data, std::size_t n, std::size_t fan_in) {
  fill_uniform(*rng, 1.0 / std::sqrt(static_cast<double>(fan_in)), data, n);
}

std::vector<LstmParams> make_stack(std::size_t layers, std::size_t input_dim,
                                   std::size_t width) {
  std::vector<LstmParams> stack(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? input_dim : width;
    stack[l].w_input = Matrix(4 * width, in);
    stack[l].w_recur = Matrix(4 * width, width);
    stack[l].bias.assign(4 * width, 0.0);
  }
  return stack;
}

void init_stack(Rng* rng, std::vector<LstmParams>* stack) {
  for (LstmParams& layer : *stack) {
    fill_tensor(rng, layer.w_input.data(), layer.w_input.size(),
                layer.w_input.cols());
    fill_tensor(rng, layer.w_recur.data(), layer.w_recur.size(),
                layer.w_recur.cols());
    fill_tensor(rng, layer.bias.data(), layer.bias.size(), layer.width());
  }
}

void append_stack_slices(const std::string& prefix,
                         std::vector<LstmParams>* stack, ParamView* view) {
  for (std::size_t l = 0; l < stack->size(); ++l) {
    LstmParams& layer = (*stack)[l];
    const std::string base = prefix + ".l" + std::to_string(l);
    view->push_back(
        {base + ".w_input", layer.w_input.data(), layer.w_input.size()});
    view->push_back(
        {base + ".w_recur", layer.w_recur.data(), layer.w_recur.size()});
    view->push_back({base + ".bias", layer.bias.data(), layer.bias.size()});
  }
}

void append_stack_grad_slices(const std::string& prefix,
                              std::vector<LstmGrads>* stack, ParamView* view) {
  for (std::size_t l = 0; l < stack->size(); ++l) {
    LstmGrads& layer = (*stack)[l];
    const std::string base = prefix + ".l" + std::to_string(l);
    view->push_back(
        {base + ".w_input", layer.w_input.data(), layer.w_input.size()});
    view->push_back(
        {base + ".w_recur", layer.w_recur.data(), layer.w_recur.size()});
    view->push_back({base + ".bias", layer.bias.data(), layer.bias.size()});
  }
}

// Runs the stack over all frames; returns per-layer states after the last
// frame. Caches are filled per layer and frame when requested.
std::vector<RecurrentState> run_stack(
    const Utterance& u, const std::vector<LstmParams>& layers,
    std::vector<std::vector<LstmStepCache>>* caches,
    std::vector<Vec>* top_hidden) {
  const std::size_t T = u.frame_count();
  const std::size_t L = layers.size();
  if (u.feature_dim != layers.front().input_dim()) {
    throw ShapeError("utterance feature dim does not match the detector");
  }
  if (caches) caches->assign(L, std::vector<LstmStepCache>(T));
  if (top_hidden) top_hidden->assign(T, Vec());

  std::vector<RecurrentState> states(L);
  for (std::size_t l = 0; l < L; ++l) {
    states[l] = RecurrentState(layers[l].width());
  }
  for (std::size_t t = 0; t < T; ++t) {
    Vec x(u.feature_dim);
    for (std::size_t d = 0; d < u.feature_dim; ++d) {
      x[d] = static_cast<double>(u.features[t * u.feature_dim + d]);
    }
    for (std::size_t l = 0; l < L; ++l) {
      states[l] = lstm_step(states[l], x, layers[l],
                            caches ? &(*caches)[l][t] : nullptr);
      x = states[l].hidden;
    }
    if (top_hidden) (*top_hidden)[t] = x;
  }
  return states;
}

// Reverse pass over the whole stack. d_top[t] is the incoming gradient for
// the top layer's hidden state at frame t (may be empty for zero).
void stack_backward(const std::vector<LstmParams>& layers,
                    const std::vector<std::vector<LstmStepCache>>& caches,
                    const std::vector<Vec>& d_top,
                    std::vector<LstmGrads>* grads) {
  const std::size_t L = layers.size();
  const std::size_t T = caches.front().size();
  std::vector<Vec> dh(L), dc(L);
  for (std::size_t l = 0; l < L; ++l) {
    dh[l].assign(layers[l].width(), 0.0);
    dc[l].assign(layers[l].width(), 0.0);
  }
  Vec d_prev_hidden, d_prev_cell, d_input;
  for (std::size_t t = T; t-- > 0;) {
    if (!d_top[t].empty()) {
      for (std::size_t i = 0; i < dh[L - 1].size(); ++i) {
        dh[L - 1][i] += d_top[t][i];
      }
    }
    for (std::size_t l = L; l-- > 0;) {
      lstm_step_backward(layers[l], caches[l][t], dh[l], dc[l],
                         &(*grads)[l], &d_prev_hidden, &d_prev_cell, &d_input);
      dh[l] = d_prev_hidden;
      dc[l] = d_prev_cell;
      if (l > 0) {
        for (std::size_t i = 0; i < d_input.size(); ++i) {
          dh[l - 1][i] += d_input[i];
        }
      }
    }
  }
}

std::size_t class_label(const Utterance& u) {
  return u.intent == Intent::kIntended ? kIntendedClass : kUnintendedClass;
}

// Everything the text pathway backward pass needs from the forward pass.
struct TextForward {
  std::vector<Vec> windows;        // per position: padded window input
  std::vector<std::size_t> argmax; // per filter: winning position
  Vec pooled;                      // per filter: max pre-activation
};

Vec text_embedding_forward(const std::vector<int>& ids,
                           const AcousticTextParams& params,
                           TextForward* cache) {
  const std::size_t filters = params.conv.rows();
  const std::size_t word_dim = params.word_embedding.cols();
  const std::size_t window = params.conv.cols() / word_dim;
  const std::size_t left = (window - 1) / 2;
  const std::size_t n = ids.size();

  Vec text(filters, 0.0);
  if (n == 0) return text;  // zero-length pooling fallback

  for (int id : ids) {
    if (id <= 0 || id >= static_cast<int>(params.word_embedding.rows())) {
      throw ArgumentError("hypothesis id " + std::to_string(id) +
                          " is not a wordpiece");
    }
  }

  std::vector<Vec> windows(n, Vec(window * word_dim, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < window; ++k) {
      const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i + k) -
                               static_cast<std::ptrdiff_t>(left);
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) continue;
      const double* row = params.word_embedding.row(
          static_cast<std::size_t>(ids[static_cast<std::size_t>(j)]));
      std::copy(row, row + word_dim, windows[i].begin() + k * word_dim);
    }
  }

  Vec pooled(filters, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> argmax(filters, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec pre = affine(windows[i], params.conv, params.conv_bias);
    for (std::size_t f = 0; f < filters; ++f) {
      if (pre[f] > pooled[f]) {
        pooled[f] = pre[f];
        argmax[f] = i;
      }
    }
  }
  for (std::size_t f = 0; f < filters; ++f) {
    text[f] = pooled[f] > 0.0 ? pooled[f] : 0.0;
  }
  if (cache) {
    cache->windows = std::move(windows);
    cache->argmax = std::move(argmax);
    cache->pooled = std::move(pooled);
  }
  return text;
}

void text_embedding_backward(const std::vector<int>& ids,
                             const AcousticTextParams& params,
                             const TextForward& cache, const Vec& d_text,
                             AcousticTextGrads* grads) {
  const std::size_t filters = params.conv.rows();
  const std::size_t word_dim = params.word_embedding.cols();
  const std::size_t window = params.conv.cols() / word_dim;
  const std::size_t left = (window - 1) / 2;
  const std::size_t n = ids.size();
  if (n == 0) return;

  for (std::size_t f = 0; f < filters; ++f) {
    if (cache.pooled[f] <= 0.0) continue;  // clipped by the rectifier
    const double d = d_text[f];
    if (d == 0.0) continue;
    const std::size_t i = cache.argmax[f];
    const Vec& x = cache.windows[i];
    double* w_row = grads->conv.row(f);
    for (std::size_t c = 0; c < x.size(); ++c) w_row[c] += d * x[c];
    grads->conv_bias[f] += d;
    const double* conv_row = params.conv.row(f);
    for (std::size_t k = 0; k < window; ++k) {
      const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i + k) -
                               static_cast<std::ptrdiff_t>(left);
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) continue;
      double* emb_row = grads->word_embedding.row(
          static_cast<std::size_t>(ids[static_cast<std::size_t>(j)]));
      for (std::size_t c = 0; c < word_dim; ++c) {
        emb_row[c] += d * conv_row[k * word_dim + c];
      }
    }
  }
}

void zero_view(const ParamView& view) {
  for (const ParamSlice& s : view) std::fill(s.data, s.data + s.size, 0.0);
}

void scale_view(const ParamView& view, double factor) {
  for (const ParamSlice& s : view) {
    for (std::size_t i = 0; i < s.size; ++i) s.data[i] *= factor;
  }
}

template <typename LossFn>
void run_baseline_epochs(const char* tag, std::size_t n_utts,
                         const BaselineTrainConfig& tcfg,
                         const ParamView& pview, const ParamView& gview,
                         LossFn&& loss_fn) {
  OptimizerState state;
  uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const std::vector<std::size_t> order =
        epoch_shuffle_order(n_utts, tcfg.seed, epoch, tcfg.shuffle);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n_utts; start += tcfg.batch_size) {
      const std::size_t end = std::min(start + tcfg.batch_size, n_utts);
      zero_view(gview);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        batch_loss += loss_fn(order[i]);
      }
      ++step;
      if (!std::isfinite(batch_loss)) {
        throw TrainingError(std::string(tag) + " diverged at step " +
                            std::to_string(step) +
                            ": batch loss is not finite");
      }
      scale_view(gview, 1.0 / static_cast<double>(end - start));
      optimizer_step(pview, gview, tcfg.optimizer, step, &state);
      epoch_loss += batch_loss;
      if (tcfg.eval_every != 0 && step % tcfg.eval_every == 0) {
        log::info(std::string(tag) + " step " + std::to_string(step) +
                  " batch loss " +
                  std::to_string(batch_loss /
                                 static_cast<double>(end - start)));
      }
    }
    log::debug(std::string(tag) + " epoch " + std::to_string(epoch + 1) +
               " mean loss " +
               std::to_string(epoch_loss / static_cast<double>(n_utts)));
  }
}

}  // namespace

void StateMachineConfig::validate() const {
  if (frame_threshold < 0.0 || frame_threshold > 1.0) {
    throw ArgumentError("frame_threshold must be in [0, 1]");
  }
  if (k_on == 0) throw ArgumentError("k_on must be at least 1");
}

void AcousticDetectorConfig::validate() const {
  if (feature_dim == 0) throw ArgumentError("feature_dim must be positive");
  if (layers == 0) throw ArgumentError("layers must be positive");
  if (width == 0) throw ArgumentError("width must be positive");
}

void AcousticTextConfig::validate() const {
  acoustic.validate();
  if (vocab_size < 2) {
    throw ArgumentError("vocab_size must cover at least one wordpiece");
  }
  if (word_embedding_dim == 0) {
    throw ArgumentError("word_embedding_dim must be positive");
  }
  if (conv_window == 0) throw ArgumentError("conv_window must be positive");
  if (conv_filters == 0) throw ArgumentError("conv_filters must be positive");
  if (fc_hidden == 0) throw ArgumentError("fc_hidden must be positive");
}

void BaselineTrainConfig::validate() const {
  if (batch_size == 0) throw ArgumentError("batch_size must be positive");
  optimizer.validate();
}

AcousticDetectorGrads::AcousticDetectorGrads(const AcousticDetectorParams& p)
    : w_out(p.w_out.rows(), p.w_out.cols()), b_out(p.b_out.size(), 0.0) {
  layers.reserve(p.layers.size());
  for (const LstmParams& layer : p.layers) layers.emplace_back(layer);
}

void AcousticDetectorGrads::zero() {
  zero_view(acoustic_grad_slices(this));
}

AcousticTextGrads::AcousticTextGrads(const AcousticTextParams& p)
    : word_embedding(p.word_embedding.rows(), p.word_embedding.cols()),
      conv(p.conv.rows(), p.conv.cols()),
      conv_bias(p.conv_bias.size(), 0.0),
      w_hidden(p.w_hidden.rows(), p.w_hidden.cols()),
      b_hidden(p.b_hidden.size(), 0.0),
      w_out(p.w_out.rows(), p.w_out.cols()),
      b_out(p.b_out.size(), 0.0) {
  layers.reserve(p.layers.size());
  for (const LstmParams& layer : p.layers) layers.emplace_back(layer);
}

void AcousticTextGrads::zero() {
  zero_view(acoustic_text_grad_slices(this));
}

AcousticDetectorParams init_acoustic_detector(
    const AcousticDetectorConfig& config, uint64_t seed) {
  config.validate();
  AcousticDetectorParams p;
  p.layers = make_stack(config.layers, config.feature_dim, config.width);
  p.w_out = Matrix(2, config.width);
  p.b_out.assign(2, 0.0);

  Rng rng(seed);
  init_stack(&rng, &p.layers);
  fill_tensor(&rng, p.w_out.data(), p.w_out.size(), config.width);
  fill_tensor(&rng, p.b_out.data(), p.b_out.size(), config.width);
  return p;
}

AcousticTextParams init_acoustic_text(const AcousticTextConfig& config,
                                      uint64_t seed) {
  config.validate();
  AcousticTextParams p;
  p.layers = make_stack(config.acoustic.layers, config.acoustic.feature_dim,
                        config.acoustic.width);
  p.word_embedding = Matrix(config.vocab_size, config.word_embedding_dim);
  p.conv =
      Matrix(config.conv_filters, config.conv_window * config.word_embedding_dim);
  p.conv_bias.assign(config.conv_filters, 0.0);
  p.w_hidden = Matrix(config.fc_hidden, config.joint_input_width());
  p.b_hidden.assign(config.fc_hidden, 0.0);
  p.w_out = Matrix(2, config.fc_hidden);
  p.b_out.assign(2, 0.0);

  Rng rng(seed);
  init_stack(&rng, &p.layers);
  fill_tensor(&rng, p.word_embedding.data(), p.word_embedding.size(),
              config.word_embedding_dim);
  fill_tensor(&rng, p.conv.data(), p.conv.size(), p.conv.cols());
  fill_tensor(&rng, p.conv_bias.data(), p.conv_bias.size(), p.conv.cols());
  fill_tensor(&rng, p.w_hidden.data(), p.w_hidden.size(),
              config.joint_input_width());
  fill_tensor(&rng, p.b_hidden.data(), p.b_hidden.size(),
              config.joint_input_width());
  fill_tensor(&rng, p.w_out.data(), p.w_out.size(), config.fc_hidden);
  fill_tensor(&rng, p.b_out.data(), p.b_out.size(), config.fc_hidden);
  return p;
}

ParamView acoustic_param_slices(AcousticDetectorParams* params) {
  ParamView view;
  append_stack_slices("acoustic", &params->layers, &view);
  view.push_back({"acoustic.w_out", params->w_out.data(), params->w_out.size()});
  view.push_back({"acoustic.b_out", params->b_out.data(), params->b_out.size()});
  return view;
}

ParamView acoustic_grad_slices(AcousticDetectorGrads* grads) {
  ParamView view;
  append_stack_grad_slices("acoustic", &grads->layers, &view);
  view.push_back({"acoustic.w_out", grads->w_out.data(), grads->w_out.size()});
  view.push_back({"acoustic.b_out", grads->b_out.data(), grads->b_out.size()});
  return view;
}

ParamView acoustic_text_param_slices(AcousticTextParams* params) {
  ParamView view;
  append_stack_slices("at.acoustic", &params->layers, &view);
  view.push_back({"at.word_embedding", params->word_embedding.data(),
                  params->word_embedding.size()});
  view.push_back({"at.conv", params->conv.data(), params->conv.size()});
  view.push_back(
      {"at.conv_bias", params->conv_bias.data(), params->conv_bias.size()});
  view.push_back(
      {"at.w_hidden", params->w_hidden.data(), params->w_hidden.size()});
  view.push_back(
      {"at.b_hidden", params->b_hidden.data(), params->b_hidden.size()});
  view.push_back({"at.w_out", params->w_out.data(), params->w_out.size()});
  view.push_back({"at.b_out", params->b_out.data(), params->b_out.size()});
  return view;
}

ParamView acoustic_text_grad_slices(AcousticTextGrads* grads) {
  ParamView view;
  append_stack_grad_slices("at.acoustic", &grads->layers, &view);
  view.push_back({"at.word_embedding", grads->word_embedding.data(),
                  grads->word_embedding.size()});
  view.push_back({"at.conv", grads->conv.data(), grads->conv.size()});
  view.push_back(
      {"at.conv_bias", grads->conv_bias.data(), grads->conv_bias.size()});
  view.push_back(
      {"at.w_hidden", grads->w_hidden.data(), grads->w_hidden.size()});
  view.push_back(
      {"at.b_hidden", grads->b_hidden.data(), grads->b_hidden.size()});
  view.push_back({"at.w_out", grads->w_out.data(), grads->w_out.size()});
  view.push_back({"at.b_out", grads->b_out.data(), grads->b_out.size()});
  return view;
}

double acoustic_frame_loss(const Utterance& u,
                           const AcousticDetectorParams& params,
                           AcousticDetectorGrads* grads) {
  const std::size_t T = u.frame_count();
  if (T == 0) throw ArgumentError("acoustic loss needs at least one frame");
  const std::size_t label = class_label(u);

  std::vector<std::vector<LstmStepCache>> caches;
  std::vector<Vec> top_hidden;
  run_stack(u, params.layers, grads ? &caches : nullptr, &top_hidden);

  double loss = 0.0;
  std::vector<Vec> d_top;
  if (grads) d_top.assign(T, Vec());

  for (std::size_t t = 0; t < T; ++t) {
    const Vec& h = top_hidden[t];
    Vec logits = affine(h, params.w_out, params.b_out);
    log_softmax_inplace(logits.data(), logits.size());
    loss -= logits[label];
    if (grads) {
      Vec dlogits(2);
      for (std::size_t j = 0; j < 2; ++j) {
        dlogits[j] = (std::exp(logits[j]) - (j == label ? 1.0 : 0.0)) /
                     static_cast<double>(T);
      }
      affine_param_grads(dlogits.data(), h.data(), &grads->w_out,
                         grads->b_out.data());
      Vec dh(h.size(), 0.0);
      gemv_transposed_add(params.w_out, dlogits.data(), dh.data());
      d_top[t] = std::move(dh);
    }
  }
  loss /= static_cast<double>(T);

  if (grads) {
    stack_backward(params.layers, caches, d_top, &grads->layers);
  }
  return loss;
}

double acoustic_text_utterance_loss(const Utterance& u,
                                    const std::vector<int>& hypothesis,
                                    const AcousticTextParams& params,
                                    AcousticTextGrads* grads) {
  const std::size_t T = u.frame_count();
  if (T == 0) {
    throw ArgumentError("acoustic-text loss needs at least one frame");
  }
  const std::size_t label = class_label(u);
  const std::size_t width = params.layers.back().width();
  const std::size_t filters = params.conv.rows();

  std::vector<std::vector<LstmStepCache>> caches;
  const std::vector<RecurrentState> states =
      run_stack(u, params.layers, grads ? &caches : nullptr, nullptr);
  const Vec& acoustic = states.back().hidden;

  TextForward tf;
  const Vec text =
      text_embedding_forward(hypothesis, params, grads ? &tf : nullptr);

  Vec z(filters + width);
  std::copy(text.begin(), text.end(), z.begin());
  std::copy(acoustic.begin(), acoustic.end(), z.begin() + filters);

  Vec hidden = affine(z, params.w_hidden, params.b_hidden);
  for (double& h : hidden) h = std::tanh(h);
  Vec logits = affine(hidden, params.w_out, params.b_out);
  log_softmax_inplace(logits.data(), logits.size());
  const double loss = -logits[label];

  if (grads) {
    Vec dlogits(2);
    for (std::size_t j = 0; j < 2; ++j) {
      dlogits[j] = std::exp(logits[j]) - (j == label ? 1.0 : 0.0);
    }
    affine_param_grads(dlogits.data(), hidden.data(), &grads->w_out,
                       grads->b_out.data());
    Vec d_hidden(hidden.size(), 0.0);
    gemv_transposed_add(params.w_out, dlogits.data(), d_hidden.data());
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      d_hidden[i] *= 1.0 - hidden[i] * hidden[i];
    }
    affine_param_grads(d_hidden.data(), z.data(), &grads->w_hidden,
                       grads->b_hidden.data());
    Vec dz(z.size(), 0.0);
    gemv_transposed_add(params.w_hidden, d_hidden.data(), dz.data());

    const Vec d_text(dz.begin(), dz.begin() + filters);
    text_embedding_backward(hypothesis, params, tf, d_text, grads);

    std::vector<Vec> d_top(T, Vec());
    d_top[T - 1] = Vec(dz.begin() + filters, dz.end());
    stack_backward(params.layers, caches, d_top, &grads->layers);
  }
  return loss;
}

AcousticDetectorParams train_acoustic_detector(
    const std::vector<Utterance>& corpus, const AcousticDetectorConfig& config,
    const BaselineTrainConfig& train_config) {
  config.validate();
  train_config.validate();
  if (corpus.empty()) throw ArgumentError("training corpus is empty");

  AcousticDetectorParams params =
      init_acoustic_detector(config, train_config.seed);
  AcousticDetectorGrads grads(params);
  const ParamView pview = acoustic_param_slices(&params);
  const ParamView gview = acoustic_grad_slices(&grads);

  run_baseline_epochs("acoustic detector", corpus.size(), train_config, pview,
                      gview, [&](std::size_t i) {
                        return acoustic_frame_loss(corpus[i], params, &grads);
                      });
  return params;
}

AcousticTextParams train_acoustic_text_detector(
    const std::vector<Utterance>& corpus, const Checkpoint& asr_checkpoint,
    const AcousticTextConfig& config, const BaselineTrainConfig& train_config) {
  config.validate();
  train_config.validate();
  asr_checkpoint.config.validate();
  if (corpus.empty()) throw ArgumentError("training corpus is empty");
  if (config.vocab_size != asr_checkpoint.config.vocab_size) {
    throw ArgumentError(
        "detector vocab_size does not match the ASR checkpoint");
  }

  // The ASR stays frozen, so each utterance's hypothesis is fixed.
  std::vector<std::vector<int>> hypotheses(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    const Matrix enc = encode(features_matrix(corpus[i]),
                              asr_checkpoint.params, asr_checkpoint.config);
    hypotheses[i] = asr_greedy_hypothesis(enc, asr_checkpoint.params,
                                          asr_checkpoint.config);
  });

  AcousticTextParams params = init_acoustic_text(config, train_config.seed);
  AcousticTextGrads grads(params);
  const ParamView pview = acoustic_text_param_slices(&params);
  const ParamView gview = acoustic_text_grad_slices(&grads);

  run_baseline_epochs(
      "acoustic-text detector", corpus.size(), train_config, pview, gview,
      [&](std::size_t i) {
        return acoustic_text_utterance_loss(corpus[i], hypotheses[i], params,
                                            &grads);
      });
  return params;
}

std::optional<std::size_t> state_machine_decision(
    const std::vector<double>& posteriors, const StateMachineConfig& sm) {
  sm.validate();
  std::size_t run = 0;
  for (std::size_t t = 0; t < posteriors.size(); ++t) {
    run = posteriors[t] > sm.frame_threshold ? run + 1 : 0;
    if (run == sm.k_on) return t + 1;
  }
  return std::nullopt;
}

DetectionResult acoustic_detect(const Utterance& u,
                                const AcousticDetectorParams& params,
                                const StateMachineConfig& sm,
                                double frame_period_ms) {
  sm.validate();
  if (!(frame_period_ms > 0.0)) {
    throw ArgumentError("frame_period_ms must be positive");
  }
  const std::size_t T = u.frame_count();
  if (T == 0) throw ArgumentError("cannot detect on an empty utterance");
  if (u.feature_dim != params.layers.front().input_dim()) {
    throw ShapeError("utterance feature dim does not match the detector");
  }

  std::vector<RecurrentState> states(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    states[l] = RecurrentState(params.layers[l].width());
  }

  DetectionResult result;
  result.events.reserve(T);
  std::vector<double> posteriors;
  posteriors.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    Vec x(u.feature_dim);
    for (std::size_t d = 0; d < u.feature_dim; ++d) {
      x[d] = static_cast<double>(u.features[t * u.feature_dim + d]);
    }
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      states[l] = lstm_step(states[l], x, params.layers[l]);
      x = states[l].hidden;
    }
    Vec logits = affine(x, params.w_out, params.b_out);
    log_softmax_inplace(logits.data(), logits.size());
    const double posterior = std::exp(logits[kIntendedClass]);
    posteriors.push_back(posterior);

    DecisionEvent event;
    event.encoder_step = t + 1;  // frame index for this detector
    event.time_ms = static_cast<double>(t + 1) * frame_period_ms;
    event.intended_posterior = posterior;
    event.crossed = posterior > sm.frame_threshold;
    result.events.push_back(event);
  }

  if (const auto frame = state_machine_decision(posteriors, sm)) {
    result.final_decision = Intent::kIntended;
    result.decision_time_ms = static_cast<double>(*frame) * frame_period_ms;
  }
  return result;
}

std::vector<int> asr_greedy_hypothesis(const Matrix& enc,
                                       const TransducerParams& params,
                                       const ModelConfig& config,
                                       std::size_t max_symbols_per_step) {
  DecisionConfig dconfig;
  dconfig.beam_size = 1;
  dconfig.max_symbols_per_step = max_symbols_per_step;
  std::vector<BeamHypothesis> beams(1);
  for (std::size_t t = 0; t < enc.rows(); ++t) {
    const Vec row(enc.row(t), enc.row(t) + enc.cols());
    beams = beam_search_step(beams, row, params, config, dconfig);
  }
  return beams.front().label_history;
}

DetectionResult acoustic_text_detect(const Utterance& u,
                                     const AcousticTextParams& params,
                                     const Checkpoint& asr_checkpoint,
                                     double intended_threshold,
                                     std::size_t eval_stride,
                                     double frame_period_ms) {
  if (intended_threshold < 0.0) {
    throw ArgumentError("intended_threshold must be non-negative");
  }
  if (!(frame_period_ms > 0.0)) {
    throw ArgumentError("frame_period_ms must be positive");
  }
  asr_checkpoint.config.validate();
  const std::size_t T = u.frame_count();
  if (T == 0) throw ArgumentError("cannot detect on an empty utterance");

  const Matrix enc =
      encode(features_matrix(u), asr_checkpoint.params, asr_checkpoint.config);
  const std::size_t steps = enc.rows();
  const std::size_t factor = asr_checkpoint.config.time_reduction_factor;
  const std::size_t filters = params.conv.rows();
  const std::size_t width = params.layers.back().width();

  DecisionConfig dconfig;
  dconfig.beam_size = 1;
  std::vector<BeamHypothesis> beams(1);

  std::vector<RecurrentState> states(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    states[l] = RecurrentState(params.layers[l].width());
  }
  std::size_t frames_done = 0;

  DetectionResult result;
  for (std::size_t step = 1; step <= steps; ++step) {
    const Vec row(enc.row(step - 1), enc.row(step - 1) + enc.cols());
    beams = beam_search_step(beams, row, asr_checkpoint.params,
                             asr_checkpoint.config, dconfig);

    const bool scheduled =
        eval_stride != kEndOnlyStride && step % eval_stride == 0;
    if (!scheduled && step != steps) continue;

    const std::size_t frame_goal = std::min(step * factor, T);
    for (; frames_done < frame_goal; ++frames_done) {
      Vec x(u.feature_dim);
      for (std::size_t d = 0; d < u.feature_dim; ++d) {
        x[d] = static_cast<double>(u.features[frames_done * u.feature_dim + d]);
      }
      for (std::size_t l = 0; l < params.layers.size(); ++l) {
        states[l] = lstm_step(states[l], x, params.layers[l]);
        x = states[l].hidden;
      }
    }

    const Vec text =
        text_embedding_forward(beams.front().label_history, params, nullptr);
    Vec z(filters + width);
    std::copy(text.begin(), text.end(), z.begin());
    std::copy(states.back().hidden.begin(), states.back().hidden.end(),
              z.begin() + filters);
    Vec hidden = affine(z, params.w_hidden, params.b_hidden);
    for (double& h : hidden) h = std::tanh(h);
    Vec logits = affine(hidden, params.w_out, params.b_out);
    log_softmax_inplace(logits.data(), logits.size());
    const double posterior = std::exp(logits[kIntendedClass]);

    DecisionEvent event;
    event.encoder_step = step;
    event.time_ms =
        static_cast<double>(step) * frame_period_ms * static_cast<double>(factor);
    event.intended_posterior = posterior;
    event.crossed = posterior >= intended_threshold;
    if (event.crossed && !result.decision_time_ms.has_value()) {
      result.final_decision = Intent::kIntended;
      result.decision_time_ms = event.time_ms;
    }
    result.events.push_back(event);
  }
  return result;
}

void write_detection_trace(std::ostream& out, const std::string& utterance_id,
                           const std::string& detector,
                           const DetectionResult& result) {
  for (const DecisionEvent& event : result.events) {
    nlohmann::json line;
    line["encoder_step"] = event.encoder_step;
    line["time_ms"] = event.time_ms;
    line["intended_posterior"] = event.intended_posterior;
    line["crossed"] = event.crossed;
    out << line.dump() << "\n";
  }
  nlohmann::json summary;
  summary["utterance_id"] = utterance_id;
  summary["detector"] = detector;
  summary["final_decision"] = intent_name(result.final_decision);
  if (result.decision_time_ms.has_value()) {
    summary["decision_time_ms"] = *result.decision_time_ms;
  } else {
    summary["decision_time_ms"] = nullptr;
  }
  out << summary.dump() << "\n";
}

}  // namespace iqstream
