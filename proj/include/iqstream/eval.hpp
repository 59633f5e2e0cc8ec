// include/iqstream/eval.hpp

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

// Detection and recognition metrics: DET curve, EER, decision latency
// percentiles, per-domain false-reject rates, and word error rate.

#ifndef IQSTREAM_EVAL_HPP_
#define IQSTREAM_EVAL_HPP_

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iqstream/corpus.hpp"
#include "iqstream/decoding.hpp"

namespace iqstream {

// One evaluated utterance: the posterior event stream produced by a detector
// together with enough metadata to aggregate rates and latencies. The
// utterance-level score is the maximum intended posterior over the stream,
// so "ever crosses theta" is a threshold predicate on max_posterior.
struct ScoredUtterance {
  std::string id;
  std::string domain;
  Intent true_intent = Intent::kUnintended;
  double start_of_speech_ms = 0.0;
  double max_posterior = 0.0;
  std::vector<DecisionEvent> events;
};

// Builds a ScoredUtterance from a detector's event stream. The stream must
// be non-empty; max_posterior is computed from it.
ScoredUtterance score_stream(const std::string& id, const std::string& domain,
                             Intent true_intent, double start_of_speech_ms,
                             std::vector<DecisionEvent> events);

// Timestamp of the first event whose intended posterior reaches the
// threshold, or nullopt if the stream never does.
std::optional<double> first_crossing_ms(const ScoredUtterance& scored,
                                        double threshold);

struct DetPoint {
  double threshold = 0.0;
  double false_accept_rate = 0.0;
  double false_reject_rate = 0.0;
};

// All distinct observed scores plus {0, 1}, ascending.
std::vector<double> default_threshold_grid(
    const std::vector<ScoredUtterance>& scored);

// For each threshold: FA = fraction of unintended utterances whose stream
// crosses it, FR = fraction of intended utterances whose stream never does.
// Both classes must be present. Points come back in grid order.
std::vector<DetPoint> det_curve(const std::vector<ScoredUtterance>& scored,
                                const std::vector<double>& thresholds);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  // Set when the curve never straddles FA == FR; the boundary point closest
  // to balance is reported instead of an interpolated crossing.
  bool degenerate = false;
};

// Equal error rate by linear interpolation between the two adjacent curve
// points straddling FA == FR (points are sorted by threshold first).
EerResult eer(const std::vector<DetPoint>& det);

struct LatencyStats {
  std::optional<double> p50_ms;
  std::optional<double> p90_ms;
  double coverage = 0.0;  // crossed / intended
  std::size_t intended_count = 0;
  std::size_t crossed_count = 0;
  bool no_crossings = false;
};

// Decision latency over intended utterances at a fixed threshold: first
// crossing time minus start of speech, nearest-rank percentiles with
// rank = ceil(p * n). Utterances that never cross are excluded and shown
// via coverage; zero crossings sets no_crossings instead of percentiles.
LatencyStats latency_percentiles(const std::vector<ScoredUtterance>& scored,
                                 double threshold);

// False-reject rate of intended utterances per domain tag at the given
// threshold. Domains appear under their literal tags.
std::map<std::string, double> per_domain_fr(
    const std::vector<ScoredUtterance>& scored, double threshold);

// Levenshtein distance with unit substitution, insertion and deletion costs.
std::size_t edit_distance(const std::vector<int>& a, const std::vector<int>& b);
std::size_t edit_distance(const std::vector<std::string>& a,
                          const std::vector<std::string>& b);

// Edit distance divided by reference length. The reference must be non-empty.
double wer(const std::vector<int>& hypothesis,
           const std::vector<int>& reference);
double wer(const std::vector<std::string>& hypothesis,
           const std::vector<std::string>& reference);

// CSV with header "threshold,fa_rate,fr_rate".
void write_det_csv(std::ostream& out, const std::vector<DetPoint>& det);

struct EvalSummary {
  std::string model;
  double eer = 0.0;
  double eer_threshold = 0.0;
  bool eer_degenerate = false;
  std::optional<double> p50_ms;
  std::optional<double> p90_ms;
  double coverage = 0.0;
  std::map<std::string, double> per_domain_fr;
  std::optional<double> wer;
};

// JSON report with keys {model, eer, eer_threshold, eer_degenerate, p50_ms,
// p90_ms, coverage, per_domain_fr, wer}; absent measurements are null.
void write_summary_json(std::ostream& out, const EvalSummary& summary);

}  // namespace iqstream

#endif  // IQSTREAM_EVAL_HPP_
