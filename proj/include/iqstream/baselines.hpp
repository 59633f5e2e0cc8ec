// include/iqstream/baselines.hpp

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

#ifndef IQSTREAM_BASELINES_HPP_
#define IQSTREAM_BASELINES_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "iqstream/corpus.hpp"
#include "iqstream/decoding.hpp"
#include "iqstream/numkernel.hpp"
#include "iqstream/training.hpp"

namespace iqstream {

// Softmax class indices shared by both detectors.
inline constexpr std::size_t kIntendedClass = 0;
inline constexpr std::size_t kUnintendedClass = 1;

struct StateMachineConfig {
  double frame_threshold = 0.5;
  std::size_t k_on = 10;  // consecutive above-threshold frames to declare

  void validate() const;
};

struct AcousticDetectorConfig {
  std::size_t feature_dim = 16;
  std::size_t layers = 3;
  std::size_t width = 64;

  void validate() const;
};

struct AcousticTextConfig {
  AcousticDetectorConfig acoustic;
  std::size_t vocab_size = 0;  // hypothesis ids are 1..vocab_size-1
  std::size_t word_embedding_dim = 16;
  std::size_t conv_window = 3;
  std::size_t conv_filters = 100;
  std::size_t fc_hidden = 64;

  std::size_t joint_input_width() const { return conv_filters + acoustic.width; }
  void validate() const;
};

struct BaselineTrainConfig {
  uint64_t seed = 42;
  std::size_t batch_size = 8;
  std::size_t epochs = 6;
  OptimizerConfig optimizer;
  bool shuffle = true;
  // Progress is logged every this many optimizer steps.
  std::size_t eval_every = 50;

  void validate() const;
};

// Frame-level detector: LSTM stack plus a two-class projection per frame.
struct AcousticDetectorParams {
  std::vector<LstmParams> layers;
  Matrix w_out;  // 2 x width
  Vec b_out;     // 2
};

struct AcousticDetectorGrads {
  std::vector<LstmGrads> layers;
  Matrix w_out;
  Vec b_out;

  explicit AcousticDetectorGrads(const AcousticDetectorParams& p);
  void zero();
};

// Utterance-level detector: acoustic last-hidden-state embedding
// concatenated with a CNN max-pool text embedding of the ASR hypothesis,
// fed through two fully connected layers.
struct AcousticTextParams {
  std::vector<LstmParams> layers;  // acoustic stack
  Matrix word_embedding;           // vocab_size x word_dim, row 0 unused
  Matrix conv;                     // filters x (window * word_dim)
  Vec conv_bias;                   // filters
  Matrix w_hidden;                 // hidden x (filters + width)
  Vec b_hidden;                    // hidden
  Matrix w_out;                    // 2 x hidden
  Vec b_out;                       // 2
};

struct AcousticTextGrads {
  std::vector<LstmGrads> layers;
  Matrix word_embedding;
  Matrix conv;
  Vec conv_bias;
  Matrix w_hidden;
  Vec b_hidden;
  Matrix w_out;
  Vec b_out;

  explicit AcousticTextGrads(const AcousticTextParams& p);
  void zero();
};

AcousticDetectorParams init_acoustic_detector(
    const AcousticDetectorConfig& config, uint64_t seed);
AcousticTextParams init_acoustic_text(const AcousticTextConfig& config,
                                      uint64_t seed);

ParamView acoustic_param_slices(AcousticDetectorParams* params);
ParamView acoustic_grad_slices(AcousticDetectorGrads* grads);
ParamView acoustic_text_param_slices(AcousticTextParams* params);
ParamView acoustic_text_grad_slices(AcousticTextGrads* grads);

// Mean two-class cross-entropy over the utterance's frames; every frame
// carries the utterance's own class label. Gradients are accumulated.
double acoustic_frame_loss(const Utterance& u,
                           const AcousticDetectorParams& params,
                           AcousticDetectorGrads* grads = nullptr);

// Utterance-level cross-entropy on the concatenated embeddings. The
// hypothesis holds wordpiece ids; an empty hypothesis falls back to an
// all-zero text embedding. Gradients are accumulated.
double acoustic_text_utterance_loss(const Utterance& u,
                                    const std::vector<int>& hypothesis,
                                    const AcousticTextParams& params,
                                    AcousticTextGrads* grads = nullptr);

AcousticDetectorParams train_acoustic_detector(
    const std::vector<Utterance>& corpus, const AcousticDetectorConfig& config,
    const BaselineTrainConfig& train_config);

// The text pathway consumes the greedy hypothesis of the given ASR
// checkpoint, precomputed once per utterance since the ASR stays frozen.
AcousticTextParams train_acoustic_text_detector(
    const std::vector<Utterance>& corpus, const Checkpoint& asr_checkpoint,
    const AcousticTextConfig& config, const BaselineTrainConfig& train_config);

struct DetectionResult {
  std::vector<DecisionEvent> events;
  Intent final_decision = Intent::kUnintended;
  std::optional<double> decision_time_ms;
};

// Smoothing rule: 1-based index of the k_on-th frame of the first run of
// k_on consecutive posteriors above the threshold, or nullopt when no such
// run exists. The run counter resets on every miss.
std::optional<std::size_t> state_machine_decision(
    const std::vector<double>& posteriors, const StateMachineConfig& sm);

// Streams the LSTM over frames and emits one event per frame. Intended is
// declared where state_machine_decision fires on the posterior sequence.
DetectionResult acoustic_detect(const Utterance& u,
                                const AcousticDetectorParams& params,
                                const StateMachineConfig& sm,
                                double frame_period_ms);

// Evaluate only once, at the end of the utterance.
inline constexpr std::size_t kEndOnlyStride = 0;

// Re-scores every eval_stride encoder steps (plus the final step) with the
// acoustic embedding up to that point and the current partial greedy ASR
// hypothesis; declares intended at the first threshold crossing.
DetectionResult acoustic_text_detect(const Utterance& u,
                                     const AcousticTextParams& params,
                                     const Checkpoint& asr_checkpoint,
                                     double intended_threshold,
                                     std::size_t eval_stride,
                                     double frame_period_ms = 10.0);

// Greedy (beam size 1) transcription of precomputed encoder rows.
std::vector<int> asr_greedy_hypothesis(const Matrix& enc,
                                       const TransducerParams& params,
                                       const ModelConfig& config,
                                       std::size_t max_symbols_per_step = 4);

// Same trace schema as the joint decoder, with a detector name field in the
// summary record.
void write_detection_trace(std::ostream& out, const std::string& utterance_id,
                           const std::string& detector,
                           const DetectionResult& result);

}  // namespace iqstream

#endif  // IQSTREAM_BASELINES_HPP_
