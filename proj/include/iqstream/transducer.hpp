// include/iqstream/transducer.hpp

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

#ifndef IQSTREAM_TRANSDUCER_HPP_
#define IQSTREAM_TRANSDUCER_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "iqstream/corpus.hpp"
#include "iqstream/labeling.hpp"
#include "iqstream/numkernel.hpp"

namespace iqstream {

// Shapes of the transducer. vocab_size counts the wordpieces plus blank; the
// IQ joint additionally scores the two class tokens, whose ids sit directly
// above the wordpiece range (vocab_size is <intended>, vocab_size+1 is
// <unintended>).
struct ModelConfig {
  std::size_t feature_dim = 16;
  std::size_t encoder_layers = 3;
  std::size_t encoder_width = 64;
  std::size_t time_reduction_factor = 2;
  // Number of encoder layers that run before the time reduction.
  std::size_t time_reduction_after_layer = 2;
  std::size_t prediction_context = 2;
  std::size_t embedding_dim = 16;
  std::size_t joint_width = 64;
  std::size_t vocab_size = 0;

  std::size_t iq_output_size() const { return vocab_size + 2; }
  int intended_output() const { return static_cast<int>(vocab_size); }
  int unintended_output() const { return static_cast<int>(vocab_size) + 1; }

  void validate() const;
  bool operator==(const ModelConfig& o) const = default;
};

// Convenience: a config whose vocab_size matches a generated vocabulary.
ModelConfig model_config_for(const Vocabulary& vocab);

// The prediction network embeds the last `prediction_context` wordpiece
// labels and combines them with one affine layer plus tanh. The blank row of
// the embedding table doubles as the start-of-sequence embedding, which is
// safe because blank never appears in a label history.
struct PredictionParams {
  Matrix embedding;  // vocab_size x embedding_dim
  Matrix w_combine;  // embedding_dim x (prediction_context * embedding_dim)
  Vec b_combine;     // embedding_dim
};

// One joint network: tanh(affine(enc) + affine(pred)) -> affine -> logits.
struct JointParams {
  Matrix w_enc;   // joint_width x encoder_width
  Matrix w_pred;  // joint_width x embedding_dim
  Vec bias;       // joint_width
  Matrix w_out;   // output_size x joint_width
  Vec b_out;      // output_size
};

struct TransducerParams {
  std::vector<LstmParams> encoder;
  PredictionParams prediction;
  JointParams asr_joint;
  JointParams iq_joint;
};

// Gradient buffers shaped like the parameters.
struct TransducerGrads {
  std::vector<LstmGrads> encoder;
  PredictionParams prediction;
  JointParams asr_joint;
  JointParams iq_joint;

  explicit TransducerGrads(const TransducerParams& p);
  void zero();
};

// Zero-initialized parameters with shapes taken from the config.
TransducerParams make_params(const ModelConfig& config);

// Copies the ASR joint into the IQ joint; the two extra output rows (and
// their biases) are zeroed.
void init_iq_joint_from_asr(TransducerParams* params);

// Flat named views over every tensor, in declaration order. The two views
// enumerate matching slices so they can be zipped by the optimizer.
ParamView param_slices(TransducerParams* params);
ParamView grad_slices(TransducerGrads* grads);

// Utterance features as a double matrix (frames x dim).
Matrix features_matrix(const Utterance& u);

// Per-step records kept by encode() so rnnt_loss can backpropagate through
// the encoder stack. Valid only for the exact parameters and features that
// produced it.
struct EncodeCache {
  std::vector<std::vector<LstmStepCache>> layers;
  std::size_t frames = 0;
};

// Causal encoder pass. The time reduction concatenates non-overlapping
// groups of `time_reduction_factor` frames after the configured layer; a
// trailing partial group is zero-padded on the right, so the step count is
// ceil(frames / factor).
Matrix encode(const Matrix& features, const TransducerParams& params,
              const ModelConfig& config, EncodeCache* cache = nullptr);

struct PredictCache {
  std::vector<int> context;  // exactly prediction_context ids, oldest first
  Vec ctx;                   // concatenated embeddings
  Vec out;                   // tanh output
};

// Prediction encoding from a label history. Only the last
// `prediction_context` wordpiece labels matter; IQ tokens are skipped and
// missing history is padded with the start-of-sequence embedding.
Vec predict_context(const std::vector<int>& history,
                    const TransducerParams& params, const ModelConfig& config,
                    PredictCache* cache = nullptr);

// Raw logits for one lattice node.
Vec joint_logits(const Vec& enc_state, const Vec& pred_state,
                 const JointParams& joint);

// Forward-backward lattice exposed for inspection. alpha/beta are
// T x (U+1) in log space; beta includes the emissions leaving each node,
// so beta(0,0) equals the total log-likelihood. log_emit column U is unused
// and holds -inf.
struct LossLattice {
  std::size_t T = 0;
  std::size_t U = 0;
  Matrix alpha;
  Matrix beta;
  Matrix log_blank;
  Matrix log_emit;
  double log_prob = 0.0;
};

// Negative log-likelihood of the label sequence under the ASR joint.
// FastEmit scales the label-emission gradient terms by (1 + lambda) and
// leaves the loss value untouched. When `grads` is non-null, gradients are
// accumulated (not overwritten) into it; encoder gradients additionally
// require the cache captured by encode(), otherwise the encoder block is
// left untouched.
double rnnt_loss(const Matrix& enc_states, const std::vector<int>& labels,
                 const TransducerParams& params, const ModelConfig& config,
                 double fastemit_lambda,
                 const EncodeCache* enc_cache = nullptr,
                 TransducerGrads* grads = nullptr,
                 LossLattice* lattice = nullptr);

// Stage-2 loss over an augmented label sequence scored by the IQ joint. The
// prediction input advances only on wordpiece labels. FastEmit applies to
// the IQ lattice exactly as in stage 1. Gradients flow only into iq_joint;
// all other blocks of `grads` are left untouched.
double iq_stage2_loss(const Matrix& enc_states,
                      const AugmentedLabelSequence& augmented,
                      const TransducerParams& params,
                      const ModelConfig& config,
                      double fastemit_lambda = 0.0,
                      TransducerGrads* grads = nullptr,
                      LossLattice* lattice = nullptr);

}  // namespace iqstream

#endif  // IQSTREAM_TRANSDUCER_HPP_
