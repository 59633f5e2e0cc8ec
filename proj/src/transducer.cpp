// src/transducer.cpp

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

#include "iqstream/transducer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "iqstream/errors.hpp"

namespace iqstream {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_widths(const ModelConfig& c) {
  if (c.feature_dim == 0 || c.encoder_width == 0 || c.embedding_dim == 0 ||
      c.joint_width == 0 || c.encoder_layers == 0) {
    throw ArgumentError("model widths and layer counts must be positive");
  }
}

std::size_t reduced_steps(std::size_t frames, std::size_t factor) {
  return (frames + factor - 1) / factor;
}

// Concatenates non-overlapping groups of `factor` rows; the trailing partial
// group is zero-padded.
Matrix reduce_time(const Matrix& in, std::size_t factor) {
  const std::size_t steps = reduced_steps(in.rows(), factor);
  Matrix out(steps, in.cols() * factor);
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t k = 0; k < factor; ++k) {
      const std::size_t src = s * factor + k;
      if (src >= in.rows()) break;
      std::copy(in.row(src), in.row(src) + in.cols(),
                out.row(s) + k * in.cols());
    }
  }
  return out;
}

JointParams make_joint(const ModelConfig& c, std::size_t out_size) {
  JointParams j;
  j.w_enc = Matrix(c.joint_width, c.encoder_width);
  j.w_pred = Matrix(c.joint_width, c.embedding_dim);
  j.bias.assign(c.joint_width, 0.0);
  j.w_out = Matrix(out_size, c.joint_width);
  j.b_out.assign(out_size, 0.0);
  return j;
}

void zero_joint(JointParams* j) {
  j->w_enc.fill(0.0);
  j->w_pred.fill(0.0);
  j->bias.assign(j->bias.size(), 0.0);
  j->w_out.fill(0.0);
  j->b_out.assign(j->b_out.size(), 0.0);
}

void append_joint_slices(const std::string& prefix, JointParams* j,
                         ParamView* view) {
  view->push_back({prefix + ".w_enc", j->w_enc.data(), j->w_enc.size()});
  view->push_back({prefix + ".w_pred", j->w_pred.data(), j->w_pred.size()});
  view->push_back({prefix + ".bias", j->bias.data(), j->bias.size()});
  view->push_back({prefix + ".w_out", j->w_out.data(), j->w_out.size()});
  view->push_back({prefix + ".b_out", j->b_out.data(), j->b_out.size()});
}

// The N most recent wordpiece ids from a history, oldest first, left-padded
// with the blank id which doubles as start-of-sequence.
std::vector<int> context_ids(const std::vector<int>& history,
                             const ModelConfig& config) {
  const int vocab = static_cast<int>(config.vocab_size);
  std::vector<int> ctx;
  for (auto it = history.rbegin();
       it != history.rend() && ctx.size() < config.prediction_context; ++it) {
    const int id = *it;
    if (id <= 0 || id >= vocab + 2) {
      throw ArgumentError("label history contains invalid token id " +
                          std::to_string(id));
    }
    if (id >= vocab) continue;  // IQ tokens never enter the prediction net
    ctx.push_back(id);
  }
  while (ctx.size() < config.prediction_context) ctx.push_back(0);
  std::reverse(ctx.begin(), ctx.end());
  return ctx;
}

}  // namespace

void ModelConfig::validate() const {
  check_widths(*this);
  if (vocab_size < 2) {
    throw ArgumentError("vocab_size must cover blank plus one wordpiece");
  }
  if (prediction_context < 1) {
    throw ArgumentError("prediction_context must be at least 1");
  }
  if (time_reduction_factor < 1) {
    throw ArgumentError("time_reduction_factor must be at least 1");
  }
  if (time_reduction_after_layer >= encoder_layers) {
    throw ArgumentError(
        "time_reduction_after_layer must be smaller than encoder_layers");
  }
}

ModelConfig model_config_for(const Vocabulary& vocab) {
  ModelConfig c;
  c.vocab_size = static_cast<std::size_t>(vocab.intended_id());
  return c;
}

TransducerGrads::TransducerGrads(const TransducerParams& p)
    : prediction{Matrix(p.prediction.embedding.rows(),
                        p.prediction.embedding.cols()),
                 Matrix(p.prediction.w_combine.rows(),
                        p.prediction.w_combine.cols()),
                 Vec(p.prediction.b_combine.size(), 0.0)},
      asr_joint{Matrix(p.asr_joint.w_enc.rows(), p.asr_joint.w_enc.cols()),
                Matrix(p.asr_joint.w_pred.rows(), p.asr_joint.w_pred.cols()),
                Vec(p.asr_joint.bias.size(), 0.0),
                Matrix(p.asr_joint.w_out.rows(), p.asr_joint.w_out.cols()),
                Vec(p.asr_joint.b_out.size(), 0.0)},
      iq_joint{Matrix(p.iq_joint.w_enc.rows(), p.iq_joint.w_enc.cols()),
               Matrix(p.iq_joint.w_pred.rows(), p.iq_joint.w_pred.cols()),
               Vec(p.iq_joint.bias.size(), 0.0),
               Matrix(p.iq_joint.w_out.rows(), p.iq_joint.w_out.cols()),
               Vec(p.iq_joint.b_out.size(), 0.0)} {
  for (const LstmParams& layer : p.encoder) encoder.emplace_back(layer);
}

void TransducerGrads::zero() {
  for (LstmGrads& g : encoder) {
    g.w_input.fill(0.0);
    g.w_recur.fill(0.0);
    g.bias.assign(g.bias.size(), 0.0);
  }
  prediction.embedding.fill(0.0);
  prediction.w_combine.fill(0.0);
  prediction.b_combine.assign(prediction.b_combine.size(), 0.0);
  zero_joint(&asr_joint);
  zero_joint(&iq_joint);
}

TransducerParams make_params(const ModelConfig& config) {
  config.validate();
  TransducerParams p;
  std::size_t in_dim = config.feature_dim;
  for (std::size_t layer = 0; layer < config.encoder_layers; ++layer) {
    if (layer == config.time_reduction_after_layer) {
      in_dim *= config.time_reduction_factor;
    }
    LstmParams lstm;
    lstm.w_input = Matrix(4 * config.encoder_width, in_dim);
    lstm.w_recur = Matrix(4 * config.encoder_width, config.encoder_width);
    lstm.bias.assign(4 * config.encoder_width, 0.0);
    p.encoder.push_back(std::move(lstm));
    in_dim = config.encoder_width;
  }
  p.prediction.embedding = Matrix(config.vocab_size, config.embedding_dim);
  p.prediction.w_combine =
      Matrix(config.embedding_dim,
             config.prediction_context * config.embedding_dim);
  p.prediction.b_combine.assign(config.embedding_dim, 0.0);
  p.asr_joint = make_joint(config, config.vocab_size);
  p.iq_joint = make_joint(config, config.iq_output_size());
  return p;
}

void init_iq_joint_from_asr(TransducerParams* params) {
  const JointParams& src = params->asr_joint;
  JointParams& dst = params->iq_joint;
  if (dst.w_out.rows() != src.w_out.rows() + 2 ||
      dst.w_out.cols() != src.w_out.cols()) {
    throw ShapeError("iq_joint is not asr_joint plus two output rows");
  }
  dst.w_enc = src.w_enc;
  dst.w_pred = src.w_pred;
  dst.bias = src.bias;
  dst.w_out.fill(0.0);
  std::copy(src.w_out.data(), src.w_out.data() + src.w_out.size(),
            dst.w_out.data());
  dst.b_out.assign(dst.b_out.size(), 0.0);
  std::copy(src.b_out.begin(), src.b_out.end(), dst.b_out.begin());
}

ParamView param_slices(TransducerParams* params) {
  ParamView view;
  for (std::size_t i = 0; i < params->encoder.size(); ++i) {
    const std::string prefix = "encoder." + std::to_string(i);
    LstmParams& l = params->encoder[i];
    view.push_back({prefix + ".w_input", l.w_input.data(), l.w_input.size()});
    view.push_back({prefix + ".w_recur", l.w_recur.data(), l.w_recur.size()});
    view.push_back({prefix + ".bias", l.bias.data(), l.bias.size()});
  }
  PredictionParams& pr = params->prediction;
  view.push_back(
      {"prediction.embedding", pr.embedding.data(), pr.embedding.size()});
  view.push_back(
      {"prediction.w_combine", pr.w_combine.data(), pr.w_combine.size()});
  view.push_back(
      {"prediction.b_combine", pr.b_combine.data(), pr.b_combine.size()});
  append_joint_slices("asr_joint", &params->asr_joint, &view);
  append_joint_slices("iq_joint", &params->iq_joint, &view);
  return view;
}

ParamView grad_slices(TransducerGrads* grads) {
  ParamView view;
  for (std::size_t i = 0; i < grads->encoder.size(); ++i) {
    const std::string prefix = "encoder." + std::to_string(i);
    LstmGrads& l = grads->encoder[i];
    view.push_back({prefix + ".w_input", l.w_input.data(), l.w_input.size()});
    view.push_back({prefix + ".w_recur", l.w_recur.data(), l.w_recur.size()});
    view.push_back({prefix + ".bias", l.bias.data(), l.bias.size()});
  }
  PredictionParams& pr = grads->prediction;
  view.push_back(
      {"prediction.embedding", pr.embedding.data(), pr.embedding.size()});
  view.push_back(
      {"prediction.w_combine", pr.w_combine.data(), pr.w_combine.size()});
  view.push_back(
      {"prediction.b_combine", pr.b_combine.data(), pr.b_combine.size()});
  append_joint_slices("asr_joint", &grads->asr_joint, &view);
  append_joint_slices("iq_joint", &grads->iq_joint, &view);
  return view;
}

Matrix features_matrix(const Utterance& u) {
  Matrix m(u.frame_count(), u.feature_dim);
  for (std::size_t i = 0; i < u.features.size(); ++i) {
    m.data()[i] = static_cast<double>(u.features[i]);
  }
  return m;
}

Matrix encode(const Matrix& features, const TransducerParams& params,
              const ModelConfig& config, EncodeCache* cache) {
  if (features.cols() != config.feature_dim) {
    throw ShapeError("feature dim " + std::to_string(features.cols()) +
                     " does not match config " +
                     std::to_string(config.feature_dim));
  }
  if (params.encoder.size() != config.encoder_layers) {
    throw ShapeError("encoder layer count mismatch");
  }
  if (cache != nullptr) {
    cache->layers.assign(config.encoder_layers, {});
    cache->frames = features.rows();
  }
  Matrix cur = features;
  for (std::size_t layer = 0; layer < config.encoder_layers; ++layer) {
    if (layer == config.time_reduction_after_layer) {
      cur = reduce_time(cur, config.time_reduction_factor);
    }
    const LstmParams& lstm = params.encoder[layer];
    if (lstm.input_dim() != cur.cols()) {
      throw ShapeError("encoder layer " + std::to_string(layer) +
                       " expects input dim " +
                       std::to_string(lstm.input_dim()));
    }
    Matrix out(cur.rows(), config.encoder_width);
    RecurrentState state(config.encoder_width);
    if (cache != nullptr) cache->layers[layer].resize(cur.rows());
    Vec input(cur.cols());
    for (std::size_t t = 0; t < cur.rows(); ++t) {
      input.assign(cur.row(t), cur.row(t) + cur.cols());
      LstmStepCache* step =
          cache != nullptr ? &cache->layers[layer][t] : nullptr;
      state = lstm_step(state, input, lstm, step);
      std::copy(state.hidden.begin(), state.hidden.end(), out.row(t));
    }
    cur = std::move(out);
  }
  return cur;
}

Vec predict_context(const std::vector<int>& history,
                    const TransducerParams& params, const ModelConfig& config,
                    PredictCache* cache) {
  const std::vector<int> ctx_ids = context_ids(history, config);
  const std::size_t e = config.embedding_dim;
  if (params.prediction.embedding.cols() != e ||
      params.prediction.embedding.rows() != config.vocab_size) {
    throw ShapeError("embedding table does not match config");
  }
  Vec ctx(config.prediction_context * e);
  for (std::size_t k = 0; k < ctx_ids.size(); ++k) {
    const double* row =
        params.prediction.embedding.row(static_cast<std::size_t>(ctx_ids[k]));
    std::copy(row, row + e, ctx.begin() + k * e);
  }
  Vec out = affine(ctx, params.prediction.w_combine,
                   params.prediction.b_combine);
  for (double& v : out) v = std::tanh(v);
  if (cache != nullptr) {
    cache->context = ctx_ids;
    cache->ctx = std::move(ctx);
    cache->out = out;
  }
  return out;
}

Vec joint_logits(const Vec& enc_state, const Vec& pred_state,
                 const JointParams& joint) {
  if (enc_state.size() != joint.w_enc.cols() ||
      pred_state.size() != joint.w_pred.cols()) {
    throw ShapeError("joint input widths do not match");
  }
  Vec pre = joint.bias;
  gemv(joint.w_enc, enc_state.data(), pre.data(), /*accumulate=*/true);
  gemv(joint.w_pred, pred_state.data(), pre.data(), /*accumulate=*/true);
  for (double& v : pre) v = std::tanh(v);
  return affine(pre, joint.w_out, joint.b_out);
}

namespace {

// Shared forward-backward over the emission lattice. `emit_ids` indexes the
// joint output row used for the label transition out of column u. When
// `full_grads` is set, gradients flow through the encoder stack (requires
// enc_cache) and the prediction network in addition to the joint; otherwise
// only the joint receives gradients.
struct LatticeArgs {
  const Matrix* enc = nullptr;
  const std::vector<int>* emit_ids = nullptr;
  const JointParams* joint = nullptr;
  JointParams* joint_grads = nullptr;
  double lambda = 0.0;
  bool full_grads = false;
  const EncodeCache* enc_cache = nullptr;
};

double lattice_pass(const LatticeArgs& a, const TransducerParams& params,
                    const ModelConfig& config,
                    const std::vector<Vec>& pred,
                    const std::vector<PredictCache>& pred_caches,
                    TransducerGrads* grads, LossLattice* lattice) {
  const Matrix& enc = *a.enc;
  const std::vector<int>& emit_ids = *a.emit_ids;
  const JointParams& joint = *a.joint;
  const std::size_t t_steps = enc.rows();
  const std::size_t u_count = emit_ids.size();
  const std::size_t cols = u_count + 1;
  const std::size_t out = joint.w_out.rows();
  const std::size_t jw = joint.bias.size();

  if (t_steps == 0) throw ArgumentError("lattice requires at least one step");
  if (enc.cols() != joint.w_enc.cols()) {
    throw ShapeError("encoder state width does not match joint");
  }

  // Affine halves of the joint pre-activation; bias folded into the encoder
  // half so each node sums exactly two vectors.
  Matrix enc_aff(t_steps, jw);
  for (std::size_t t = 0; t < t_steps; ++t) {
    std::copy(joint.bias.begin(), joint.bias.end(), enc_aff.row(t));
    gemv(joint.w_enc, enc.row(t), enc_aff.row(t), /*accumulate=*/true);
  }
  Matrix pred_aff(cols, jw);
  for (std::size_t u = 0; u < cols; ++u) {
    gemv(joint.w_pred, pred[u].data(), pred_aff.row(u));
  }

  // Per-node activations and log distributions, kept for the backward pass.
  std::vector<double> node_h(t_steps * cols * jw);
  std::vector<double> node_lp(t_steps * cols * out);
  Matrix log_blank(t_steps, cols);
  Matrix log_emit(t_steps, cols);
  log_emit.fill(kNegInf);
  for (std::size_t t = 0; t < t_steps; ++t) {
    for (std::size_t u = 0; u < cols; ++u) {
      double* h = node_h.data() + (t * cols + u) * jw;
      double* lp = node_lp.data() + (t * cols + u) * out;
      const double* ea = enc_aff.row(t);
      const double* pa = pred_aff.row(u);
      for (std::size_t j = 0; j < jw; ++j) h[j] = std::tanh(ea[j] + pa[j]);
      std::copy(joint.b_out.begin(), joint.b_out.end(), lp);
      gemv(joint.w_out, h, lp, /*accumulate=*/true);
      log_softmax_inplace(lp, out);
      log_blank.at(t, u) = lp[0];
      if (u < u_count) log_emit.at(t, u) = lp[emit_ids[u]];
    }
  }

  Matrix alpha(t_steps, cols);
  alpha.fill(kNegInf);
  alpha.at(0, 0) = 0.0;
  for (std::size_t t = 0; t < t_steps; ++t) {
    for (std::size_t u = 0; u < cols; ++u) {
      if (t == 0 && u == 0) continue;
      const double from_blank =
          t > 0 ? alpha.at(t - 1, u) + log_blank.at(t - 1, u) : kNegInf;
      const double from_emit =
          u > 0 ? alpha.at(t, u - 1) + log_emit.at(t, u - 1) : kNegInf;
      alpha.at(t, u) = logadd(from_blank, from_emit);
    }
  }
  const double log_prob =
      alpha.at(t_steps - 1, u_count) + log_blank.at(t_steps - 1, u_count);

  // beta includes the emissions leaving each node; the transition past the
  // final time step is only legal from the last column.
  Matrix beta(t_steps, cols);
  beta.fill(kNegInf);
  for (std::size_t ti = t_steps; ti-- > 0;) {
    for (std::size_t ui = cols; ui-- > 0;) {
      const double down =
          ti + 1 < t_steps ? beta.at(ti + 1, ui) : (ui == u_count ? 0.0 : kNegInf);
      const double right = ui < u_count ? beta.at(ti, ui + 1) : kNegInf;
      beta.at(ti, ui) = logadd(log_blank.at(ti, ui) + down,
                               ui < u_count ? log_emit.at(ti, ui) + right
                                            : kNegInf);
    }
  }

  if (!std::isfinite(log_prob)) {
    throw NumericError("lattice log-likelihood is not finite");
  }
  const double agreement = std::fabs(log_prob - beta.at(0, 0));
  if (agreement > 1e-6 * std::max(1.0, std::fabs(log_prob))) {
    throw NumericError("forward and backward lattice totals disagree");
  }

  if (lattice != nullptr) {
    lattice->T = t_steps;
    lattice->U = u_count;
    lattice->alpha = alpha;
    lattice->beta = beta;
    lattice->log_blank = log_blank;
    lattice->log_emit = log_emit;
    lattice->log_prob = log_prob;
  }

  if (grads == nullptr) return -log_prob;

  JointParams& jg = *a.joint_grads;
  Matrix d_enc_aff(t_steps, jw);
  Matrix d_pred_aff(cols, jw);
  Vec dlogits(out);
  Vec dh(jw);
  const double emit_scale = 1.0 + a.lambda;
  for (std::size_t t = 0; t < t_steps; ++t) {
    for (std::size_t u = 0; u < cols; ++u) {
      const double down =
          t + 1 < t_steps ? beta.at(t + 1, u) : (u == u_count ? 0.0 : kNegInf);
      const double m_blank =
          std::exp(alpha.at(t, u) + log_blank.at(t, u) + down - log_prob);
      const double m_emit =
          u < u_count ? emit_scale * std::exp(alpha.at(t, u) +
                                              log_emit.at(t, u) +
                                              beta.at(t, u + 1) - log_prob)
                      : 0.0;
      const double total = m_blank + m_emit;
      if (total == 0.0) continue;
      const double* lp = node_lp.data() + (t * cols + u) * out;
      const double* h = node_h.data() + (t * cols + u) * jw;
      for (std::size_t j = 0; j < out; ++j) {
        dlogits[j] = std::exp(lp[j]) * total;
      }
      dlogits[0] -= m_blank;
      if (u < u_count) dlogits[emit_ids[u]] -= m_emit;

      affine_param_grads(dlogits.data(), h, &jg.w_out, jg.b_out.data());
      std::fill(dh.begin(), dh.end(), 0.0);
      gemv_transposed_add(joint.w_out, dlogits.data(), dh.data());
      double* dea = d_enc_aff.row(t);
      double* dpa = d_pred_aff.row(u);
      for (std::size_t j = 0; j < jw; ++j) {
        const double dpre = dh[j] * (1.0 - h[j] * h[j]);
        dea[j] += dpre;
        dpa[j] += dpre;
      }
    }
  }

  // The joint bias contributes once per node, so its gradient is the sum of
  // either accumulator; take the encoder side.
  Matrix d_enc(t_steps, enc.cols());
  for (std::size_t t = 0; t < t_steps; ++t) {
    affine_param_grads(d_enc_aff.row(t), enc.row(t), &jg.w_enc,
                       jg.bias.data());
    if (a.full_grads) {
      gemv_transposed_add(joint.w_enc, d_enc_aff.row(t), d_enc.row(t));
    }
  }
  for (std::size_t u = 0; u < cols; ++u) {
    const double* dpa = d_pred_aff.row(u);
    for (std::size_t r = 0; r < jw; ++r) {
      double* wrow = jg.w_pred.row(r);
      const double g = dpa[r];
      if (g == 0.0) continue;
      const double* p = pred[u].data();
      for (std::size_t c = 0; c < jg.w_pred.cols(); ++c) wrow[c] += g * p[c];
    }
  }

  if (!a.full_grads) return -log_prob;

  // Prediction network backward: tanh, combine affine, then embedding rows.
  const std::size_t e_dim = config.embedding_dim;
  Vec d_pred_vec(e_dim);
  Vec d_pre_combine(e_dim);
  Vec d_ctx(config.prediction_context * e_dim);
  for (std::size_t u = 0; u < cols; ++u) {
    std::fill(d_pred_vec.begin(), d_pred_vec.end(), 0.0);
    gemv_transposed_add(joint.w_pred, d_pred_aff.row(u), d_pred_vec.data());
    const PredictCache& pc = pred_caches[u];
    for (std::size_t j = 0; j < e_dim; ++j) {
      d_pre_combine[j] = d_pred_vec[j] * (1.0 - pc.out[j] * pc.out[j]);
    }
    affine_param_grads(d_pre_combine.data(), pc.ctx.data(),
                       &grads->prediction.w_combine,
                       grads->prediction.b_combine.data());
    std::fill(d_ctx.begin(), d_ctx.end(), 0.0);
    gemv_transposed_add(params.prediction.w_combine, d_pre_combine.data(),
                        d_ctx.data());
    for (std::size_t k = 0; k < pc.context.size(); ++k) {
      double* row = grads->prediction.embedding.row(
          static_cast<std::size_t>(pc.context[k]));
      for (std::size_t j = 0; j < e_dim; ++j) row[j] += d_ctx[k * e_dim + j];
    }
  }

  // Encoder backward through the LSTM stack, splitting gradients back
  // through the time reduction.
  if (a.enc_cache == nullptr) return -log_prob;
  const EncodeCache& cache = *a.enc_cache;
  if (cache.layers.size() != config.encoder_layers ||
      cache.layers.back().size() != t_steps) {
    throw ShapeError("encode cache does not match the encoder states");
  }
  Matrix d_out = std::move(d_enc);
  for (std::size_t layer = config.encoder_layers; layer-- > 0;) {
    const LstmParams& lstm = params.encoder[layer];
    const std::vector<LstmStepCache>& steps = cache.layers[layer];
    LstmGrads& lg = grads->encoder[layer];
    const std::size_t n = steps.size();
    Matrix d_in(n, lstm.input_dim());
    Vec dh_carry(config.encoder_width, 0.0);
    Vec dc_carry(config.encoder_width, 0.0);
    Vec dh_total(config.encoder_width);
    Vec d_input(lstm.input_dim());
    Vec dh_prev(config.encoder_width);
    Vec dc_prev(config.encoder_width);
    for (std::size_t s = n; s-- > 0;) {
      for (std::size_t j = 0; j < config.encoder_width; ++j) {
        dh_total[j] = d_out.at(s, j) + dh_carry[j];
      }
      lstm_step_backward(lstm, steps[s], dh_total, dc_carry, &lg, &dh_prev,
                         &dc_prev, &d_input);
      std::copy(d_input.begin(), d_input.end(), d_in.row(s));
      dh_carry = dh_prev;
      dc_carry = dc_prev;
    }
    if (layer == 0) break;
    const std::size_t below = cache.layers[layer - 1].size();
    if (layer == config.time_reduction_after_layer) {
      const std::size_t f = config.time_reduction_factor;
      const std::size_t w = config.encoder_width;
      Matrix routed(below, w);
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t k = 0; k < f; ++k) {
          const std::size_t dst = s * f + k;
          if (dst >= below) break;
          std::copy(d_in.row(s) + k * w, d_in.row(s) + (k + 1) * w,
                    routed.row(dst));
        }
      }
      d_out = std::move(routed);
    } else {
      d_out = std::move(d_in);
    }
  }
  return -log_prob;
}

}  // namespace

double rnnt_loss(const Matrix& enc_states, const std::vector<int>& labels,
                 const TransducerParams& params, const ModelConfig& config,
                 double fastemit_lambda, const EncodeCache* enc_cache,
                 TransducerGrads* grads, LossLattice* lattice) {
  if (fastemit_lambda < 0.0) {
    throw ArgumentError("fastemit_lambda must be non-negative");
  }
  for (int id : labels) {
    if (id <= 0 || id >= static_cast<int>(config.vocab_size)) {
      throw ArgumentError("rnnt labels must be wordpiece ids, got " +
                          std::to_string(id));
    }
  }
  std::vector<Vec> pred(labels.size() + 1);
  std::vector<PredictCache> pred_caches(labels.size() + 1);
  std::vector<int> history;
  for (std::size_t u = 0; u <= labels.size(); ++u) {
    pred[u] = predict_context(history, params, config, &pred_caches[u]);
    if (u < labels.size()) history.push_back(labels[u]);
  }
  LatticeArgs args;
  args.enc = &enc_states;
  args.emit_ids = &labels;
  args.joint = &params.asr_joint;
  args.joint_grads = grads != nullptr ? &grads->asr_joint : nullptr;
  args.lambda = fastemit_lambda;
  args.full_grads = true;
  args.enc_cache = enc_cache;
  return lattice_pass(args, params, config, pred, pred_caches, grads,
                      lattice);
}

double iq_stage2_loss(const Matrix& enc_states,
                      const AugmentedLabelSequence& augmented,
                      const TransducerParams& params,
                      const ModelConfig& config, double fastemit_lambda,
                      TransducerGrads* grads, LossLattice* lattice) {
  if (fastemit_lambda < 0.0) {
    throw ArgumentError("fastemit_lambda must be non-negative");
  }
  if (augmented.items.empty()) {
    throw ArgumentError("augmented label sequence is empty");
  }
  std::vector<int> ids;
  ids.reserve(augmented.items.size());
  for (const AugmentedItem& item : augmented.items) {
    if (item.token_id <= 0 ||
        item.token_id >= static_cast<int>(config.iq_output_size())) {
      throw ArgumentError("augmented labels must be wordpiece or IQ ids, got " +
                          std::to_string(item.token_id));
    }
    ids.push_back(item.token_id);
  }
  std::vector<Vec> pred(ids.size() + 1);
  std::vector<PredictCache> pred_caches(ids.size() + 1);
  std::vector<int> history;
  for (std::size_t u = 0; u <= ids.size(); ++u) {
    pred[u] = predict_context(history, params, config, &pred_caches[u]);
    if (u < ids.size()) history.push_back(ids[u]);
  }
  LatticeArgs args;
  args.enc = &enc_states;
  args.emit_ids = &ids;
  args.joint = &params.iq_joint;
  args.joint_grads = grads != nullptr ? &grads->iq_joint : nullptr;
  args.lambda = fastemit_lambda;
  args.full_grads = false;
  return lattice_pass(args, params, config, pred, pred_caches, grads,
                      lattice);
}

}  // namespace iqstream
