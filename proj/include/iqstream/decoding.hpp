// include/iqstream/decoding.hpp

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

#ifndef IQSTREAM_DECODING_HPP_
#define IQSTREAM_DECODING_HPP_

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "iqstream/corpus.hpp"
#include "iqstream/training.hpp"
#include "iqstream/transducer.hpp"

namespace iqstream {

struct BeamHypothesis {
  std::vector<int> label_history;  // wordpiece ids only
  double log_prob = 0.0;
  Vec prediction_state;  // predict_context of the history
};

enum class DecisionMode { kFirstCrossing };

struct DecisionConfig {
  double intended_threshold = 0.5;  // above 1 is allowed for testing
  std::size_t beam_size = 4;
  std::size_t max_symbols_per_step = 4;
  DecisionMode decision_mode = DecisionMode::kFirstCrossing;
  // Divide the <intended> mass by the total IQ mass instead of using the raw
  // softmax probability.
  bool renormalize_iq = false;
  // Milliseconds of audio per feature frame, used for event timestamps.
  double frame_period_ms = 10.0;

  void validate() const;
};

struct DecisionEvent {
  std::size_t encoder_step = 0;  // 1-based
  double time_ms = 0.0;
  double intended_posterior = 0.0;
  bool crossed = false;
};

struct DecodeResult {
  std::vector<int> transcript;
  std::vector<DecisionEvent> events;
  Intent final_decision = Intent::kUnintended;
  std::optional<double> decision_time_ms;
};

// One time-synchronous expansion: every hypothesis either takes blank
// (advancing to the next encoder step) or emits up to max_symbols_per_step
// labels first. Hypotheses landing on the same history are merged by
// log-add; the result holds at most beam_size survivors sorted by
// (log_prob desc, history lex asc).
std::vector<BeamHypothesis> beam_search_step(
    const std::vector<BeamHypothesis>& beams, const Vec& encoder_state,
    const TransducerParams& params, const ModelConfig& model_config,
    const DecisionConfig& decision_config);

// Probability mass of <intended> under the IQ joint, conditioned on the
// hypothesis' wordpiece history.
double iq_posterior(const BeamHypothesis& top, const Vec& encoder_state,
                    const TransducerParams& params, const ModelConfig& config,
                    bool renormalize = false);

// Left-to-right joint decode: after each encoder step the top beam is scored
// by the IQ joint and one DecisionEvent is emitted. The final decision is
// intended at the first threshold crossing, unintended otherwise; events
// after a crossing are still recorded.
DecodeResult stream_decode(const Utterance& utterance, const Checkpoint& ckpt,
                           const DecisionConfig& decision_config);

// One JSON line per event followed by a summary record.
void write_decode_trace(std::ostream& out, const std::string& utterance_id,
                        const DecodeResult& result, const Vocabulary& vocab);

}  // namespace iqstream

#endif  // IQSTREAM_DECODING_HPP_
