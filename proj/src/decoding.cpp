// src/decoding.cpp

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

#include "iqstream/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "iqstream/errors.hpp"
#include "iqstream/numkernel.hpp"

namespace iqstream {

namespace {

using History = std::vector<int>;
using HypothesisMap = std::map<History, double>;

void merge_log_add(HypothesisMap& map, const History& history, double log_prob) {
  auto it = map.find(history);
  if (it == map.end()) {
    map.emplace(history, log_prob);
  } else {
    it->second = logadd(it->second, log_prob);
  }
}

struct PoolEntry {
  const History* history;
  double log_prob;
  bool finalized;
};

// Ordering for beam pruning: higher log-prob first, then lexicographically
// smaller history, then finalized before active.
bool pool_less(const PoolEntry& a, const PoolEntry& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (*a.history != *b.history) return *a.history < *b.history;
  return a.finalized && !b.finalized;
}

}  // namespace

void DecisionConfig::validate() const {
  if (intended_threshold < 0.0) {
    throw ArgumentError("intended_threshold must be non-negative");
  }
  if (beam_size == 0) throw ArgumentError("beam_size must be at least 1");
  if (max_symbols_per_step == 0) {
    throw ArgumentError("max_symbols_per_step must be at least 1");
  }
  if (!(frame_period_ms > 0.0)) {
    throw ArgumentError("frame_period_ms must be positive");
  }
}

std::vector<BeamHypothesis> beam_search_step(
    const std::vector<BeamHypothesis>& beams, const Vec& encoder_state,
    const TransducerParams& params, const ModelConfig& model_config,
    const DecisionConfig& decision_config) {
  decision_config.validate();
  if (beams.empty()) throw ArgumentError("beam_search_step needs a hypothesis");
  if (encoder_state.size() != params.asr_joint.w_enc.cols()) {
    throw ShapeError("encoder state width does not match the joint");
  }

  HypothesisMap finalized;
  HypothesisMap actives;
  for (const BeamHypothesis& beam : beams) {
    merge_log_add(actives, beam.label_history, beam.log_prob);
  }

  for (std::size_t round = 0;; ++round) {
    const bool allow_emit = round < decision_config.max_symbols_per_step;
    HypothesisMap candidates;
    for (const auto& [history, log_prob] : actives) {
      const Vec pred =
          predict_context(history, params, model_config);
      Vec scores = joint_logits(encoder_state, pred, params.asr_joint);
      log_softmax_inplace(scores.data(), scores.size());
      merge_log_add(finalized, history, log_prob + scores[0]);
      if (!allow_emit) continue;
      for (int label = 1; label < static_cast<int>(scores.size()); ++label) {
        History extended = history;
        extended.push_back(label);
        merge_log_add(candidates, extended, log_prob + scores[label]);
      }
    }

    std::vector<PoolEntry> pool;
    pool.reserve(finalized.size() + candidates.size());
    for (const auto& [history, log_prob] : finalized) {
      pool.push_back({&history, log_prob, true});
    }
    for (const auto& [history, log_prob] : candidates) {
      pool.push_back({&history, log_prob, false});
    }
    std::sort(pool.begin(), pool.end(), pool_less);
    if (pool.size() > decision_config.beam_size) {
      pool.resize(decision_config.beam_size);
    }

    HypothesisMap next_finalized;
    HypothesisMap next_actives;
    for (const PoolEntry& entry : pool) {
      (entry.finalized ? next_finalized : next_actives)
          .emplace(*entry.history, entry.log_prob);
    }
    finalized = std::move(next_finalized);
    actives = std::move(next_actives);
    if (actives.empty()) break;
  }

  std::vector<PoolEntry> survivors;
  survivors.reserve(finalized.size());
  for (const auto& [history, log_prob] : finalized) {
    survivors.push_back({&history, log_prob, true});
  }
  std::sort(survivors.begin(), survivors.end(), pool_less);

  std::vector<BeamHypothesis> out;
  out.reserve(survivors.size());
  for (const PoolEntry& entry : survivors) {
    BeamHypothesis hyp;
    hyp.label_history = *entry.history;
    hyp.log_prob = entry.log_prob;
    hyp.prediction_state =
        predict_context(hyp.label_history, params, model_config);
    out.push_back(std::move(hyp));
  }
  return out;
}

double iq_posterior(const BeamHypothesis& top, const Vec& encoder_state,
                    const TransducerParams& params, const ModelConfig& config,
                    bool renormalize) {
  const Vec pred =
      top.prediction_state.empty()
          ? predict_context(top.label_history, params, config)
          : top.prediction_state;
  Vec scores = joint_logits(encoder_state, pred, params.iq_joint);
  log_softmax_inplace(scores.data(), scores.size());
  const double intended_log = scores[config.intended_output()];
  if (!renormalize) return std::exp(intended_log);
  const double unintended_log = scores[config.unintended_output()];
  return sigmoid(intended_log - unintended_log);
}

DecodeResult stream_decode(const Utterance& utterance, const Checkpoint& ckpt,
                           const DecisionConfig& decision_config) {
  decision_config.validate();
  ckpt.config.validate();
  if (ckpt.stage != 2) {
    throw ArgumentError("stream_decode requires a stage-2 checkpoint");
  }
  if (utterance.frame_count() == 0) {
    throw ArgumentError("cannot decode an utterance without frames");
  }
  if (utterance.feature_dim != ckpt.config.feature_dim) {
    throw ArgumentError("utterance feature dim does not match the model");
  }

  // The encoder is causal with prefix-stable outputs, so encoding the whole
  // utterance up front yields the same rows a frame-by-frame feed would.
  const Matrix features = features_matrix(utterance);
  const Matrix enc = encode(features, ckpt.params, ckpt.config);

  std::vector<BeamHypothesis> beams(1);
  beams[0].prediction_state =
      predict_context({}, ckpt.params, ckpt.config);

  const double step_ms = decision_config.frame_period_ms *
                         static_cast<double>(ckpt.config.time_reduction_factor);

  DecodeResult result;
  result.events.reserve(enc.rows());
  for (std::size_t t = 0; t < enc.rows(); ++t) {
    Vec enc_row(enc.row(t), enc.row(t) + enc.cols());
    beams = beam_search_step(beams, enc_row, ckpt.params, ckpt.config,
                             decision_config);
    const double posterior =
        iq_posterior(beams.front(), enc_row, ckpt.params, ckpt.config,
                     decision_config.renormalize_iq);

    DecisionEvent event;
    event.encoder_step = t + 1;
    event.time_ms = static_cast<double>(t + 1) * step_ms;
    event.intended_posterior = posterior;
    event.crossed = posterior >= decision_config.intended_threshold;
    if (event.crossed && !result.decision_time_ms.has_value()) {
      result.final_decision = Intent::kIntended;
      result.decision_time_ms = event.time_ms;
    }
    result.events.push_back(event);
  }
  result.transcript = beams.front().label_history;
  return result;
}

void write_decode_trace(std::ostream& out, const std::string& utterance_id,
                        const DecodeResult& result, const Vocabulary& vocab) {
  for (const DecisionEvent& event : result.events) {
    nlohmann::json line;
    line["encoder_step"] = event.encoder_step;
    line["time_ms"] = event.time_ms;
    line["intended_posterior"] = event.intended_posterior;
    line["crossed"] = event.crossed;
    out << line.dump() << "\n";
  }
  std::string hypothesis;
  for (std::size_t i = 0; i < result.transcript.size(); ++i) {
    if (i > 0) hypothesis += ' ';
    hypothesis += vocab.token(result.transcript[i]);
  }
  nlohmann::json summary;
  summary["utterance_id"] = utterance_id;
  summary["hypothesis"] = hypothesis;
  summary["final_decision"] = intent_name(result.final_decision);
  if (result.decision_time_ms.has_value()) {
    summary["decision_time_ms"] = *result.decision_time_ms;
  } else {
    summary["decision_time_ms"] = nullptr;
  }
  out << summary.dump() << "\n";
}

}  // namespace iqstream
