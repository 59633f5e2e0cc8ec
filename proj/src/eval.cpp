// src/eval.cpp

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

#include "iqstream/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>

#include <json.hpp>

#include "iqstream/errors.hpp"

namespace iqstream {

namespace {

// Nearest-rank index for percentile pct/100 over n items: rank = ceil(p*n),
// evaluated in integer arithmetic so binary rounding of p cannot move the
// rank across an exact boundary.
std::size_t nearest_rank(std::size_t n, std::size_t pct) {
  const std::size_t scaled = pct * n;
  return scaled / 100 + (scaled % 100 != 0 ? 1 : 0);
}

template <typename T>
std::size_t edit_distance_impl(const std::vector<T>& a,
                               const std::vector<T>& b) {
  const std::size_t m = a.size();
  const std::size_t n = b.size();
  std::vector<std::size_t> prev(n + 1), curr(n + 1);
  for (std::size_t j = 0; j <= n; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= m; ++i) {
    curr[0] = i;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      curr[j] = std::min({sub, prev[j] + 1, curr[j - 1] + 1});
    }
    std::swap(prev, curr);
  }
  return prev[n];
}

template <typename T>
double wer_impl(const std::vector<T>& hypothesis,
                const std::vector<T>& reference) {
  if (reference.empty()) {
    throw ArgumentError("wer requires a non-empty reference");
  }
  return static_cast<double>(edit_distance_impl(hypothesis, reference)) /
         static_cast<double>(reference.size());
}

}  // namespace

ScoredUtterance score_stream(const std::string& id, const std::string& domain,
                             Intent true_intent, double start_of_speech_ms,
                             std::vector<DecisionEvent> events) {
  if (events.empty()) {
    throw ArgumentError("score_stream requires a non-empty event stream");
  }
  ScoredUtterance scored;
  scored.id = id;
  scored.domain = domain;
  scored.true_intent = true_intent;
  scored.start_of_speech_ms = start_of_speech_ms;
  scored.max_posterior = 0.0;
  for (const DecisionEvent& ev : events) {
    scored.max_posterior = std::max(scored.max_posterior,
                                    ev.intended_posterior);
  }
  scored.events = std::move(events);
  return scored;
}

std::optional<double> first_crossing_ms(const ScoredUtterance& scored,
                                        double threshold) {
  for (const DecisionEvent& ev : scored.events) {
    if (ev.intended_posterior >= threshold) return ev.time_ms;
  }
  return std::nullopt;
}

std::vector<double> default_threshold_grid(
    const std::vector<ScoredUtterance>& scored) {
  std::set<double> grid = {0.0, 1.0};
  for (const ScoredUtterance& s : scored) grid.insert(s.max_posterior);
  return std::vector<double>(grid.begin(), grid.end());
}

std::vector<DetPoint> det_curve(const std::vector<ScoredUtterance>& scored,
                                const std::vector<double>& thresholds) {
  std::size_t intended = 0;
  std::size_t unintended = 0;
  for (const ScoredUtterance& s : scored) {
    (s.true_intent == Intent::kIntended ? intended : unintended)++;
  }
  if (intended == 0 || unintended == 0) {
    throw ArgumentError(
        "det_curve requires both intended and unintended utterances");
  }

  std::vector<DetPoint> det;
  det.reserve(thresholds.size());
  for (const double theta : thresholds) {
    std::size_t false_accepts = 0;
    std::size_t false_rejects = 0;
    for (const ScoredUtterance& s : scored) {
      const bool crossed = s.max_posterior >= theta;
      if (s.true_intent == Intent::kIntended) {
        false_rejects += crossed ? 0 : 1;
      } else {
        false_accepts += crossed ? 1 : 0;
      }
    }
    DetPoint point;
    point.threshold = theta;
    point.false_accept_rate =
        static_cast<double>(false_accepts) / static_cast<double>(unintended);
    point.false_reject_rate =
        static_cast<double>(false_rejects) / static_cast<double>(intended);
    det.push_back(point);
  }
  return det;
}

EerResult eer(const std::vector<DetPoint>& det) {
  if (det.empty()) {
    throw ArgumentError("eer requires a non-empty DET curve");
  }
  std::vector<DetPoint> curve = det;
  std::sort(curve.begin(), curve.end(),
            [](const DetPoint& a, const DetPoint& b) {
              return a.threshold < b.threshold;
            });

  EerResult result;
  for (const DetPoint& p : curve) {
    if (p.false_accept_rate == p.false_reject_rate) {
      result.eer = p.false_accept_rate;
      result.threshold = p.threshold;
      return result;
    }
  }
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double d0 = curve[i].false_accept_rate - curve[i].false_reject_rate;
    const double d1 =
        curve[i + 1].false_accept_rate - curve[i + 1].false_reject_rate;
    if (d0 > 0.0 && d1 < 0.0) {
      const double t = d0 / (d0 - d1);
      result.eer = curve[i].false_accept_rate +
                   t * (curve[i + 1].false_accept_rate -
                        curve[i].false_accept_rate);
      result.threshold =
          curve[i].threshold +
          t * (curve[i + 1].threshold - curve[i].threshold);
      return result;
    }
  }

  std::size_t best = 0;
  double best_gap = std::abs(curve[0].false_accept_rate -
                             curve[0].false_reject_rate);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double gap =
        std::abs(curve[i].false_accept_rate - curve[i].false_reject_rate);
    if (gap < best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  result.eer = 0.5 * (curve[best].false_accept_rate +
                      curve[best].false_reject_rate);
  result.threshold = curve[best].threshold;
  result.degenerate = true;
  return result;
}

LatencyStats latency_percentiles(const std::vector<ScoredUtterance>& scored,
                                 double threshold) {
  LatencyStats stats;
  std::vector<double> latencies;
  for (const ScoredUtterance& s : scored) {
    if (s.true_intent != Intent::kIntended) continue;
    stats.intended_count++;
    const std::optional<double> crossing = first_crossing_ms(s, threshold);
    if (crossing.has_value()) {
      latencies.push_back(*crossing - s.start_of_speech_ms);
    }
  }
  if (stats.intended_count == 0) {
    throw ArgumentError("latency_percentiles requires intended utterances");
  }
  stats.crossed_count = latencies.size();
  stats.coverage = static_cast<double>(stats.crossed_count) /
                   static_cast<double>(stats.intended_count);
  if (latencies.empty()) {
    stats.no_crossings = true;
    return stats;
  }
  std::sort(latencies.begin(), latencies.end());
  stats.p50_ms = latencies[nearest_rank(latencies.size(), 50) - 1];
  stats.p90_ms = latencies[nearest_rank(latencies.size(), 90) - 1];
  return stats;
}

std::map<std::string, double> per_domain_fr(
    const std::vector<ScoredUtterance>& scored, double threshold) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const ScoredUtterance& s : scored) {
    if (s.true_intent != Intent::kIntended) continue;
    auto& [total, rejected] = counts[s.domain];
    total++;
    if (s.max_posterior < threshold) rejected++;
  }
  std::map<std::string, double> fr;
  for (const auto& [domain, pair] : counts) {
    fr[domain] =
        static_cast<double>(pair.second) / static_cast<double>(pair.first);
  }
  return fr;
}

std::size_t edit_distance(const std::vector<int>& a,
                          const std::vector<int>& b) {
  return edit_distance_impl(a, b);
}

std::size_t edit_distance(const std::vector<std::string>& a,
                          const std::vector<std::string>& b) {
  return edit_distance_impl(a, b);
}

double wer(const std::vector<int>& hypothesis,
           const std::vector<int>& reference) {
  return wer_impl(hypothesis, reference);
}

double wer(const std::vector<std::string>& hypothesis,
           const std::vector<std::string>& reference) {
  return wer_impl(hypothesis, reference);
}

void write_det_csv(std::ostream& out, const std::vector<DetPoint>& det) {
  out << "threshold,fa_rate,fr_rate\n";
  out << std::setprecision(17);
  for (const DetPoint& p : det) {
    out << p.threshold << ',' << p.false_accept_rate << ','
        << p.false_reject_rate << '\n';
  }
}

void write_summary_json(std::ostream& out, const EvalSummary& summary) {
  nlohmann::json report;
  report["model"] = summary.model;
  report["eer"] = summary.eer;
  report["eer_threshold"] = summary.eer_threshold;
  report["eer_degenerate"] = summary.eer_degenerate;
  report["p50_ms"] = summary.p50_ms.has_value()
                         ? nlohmann::json(*summary.p50_ms)
                         : nlohmann::json(nullptr);
  report["p90_ms"] = summary.p90_ms.has_value()
                         ? nlohmann::json(*summary.p90_ms)
                         : nlohmann::json(nullptr);
  report["coverage"] = summary.coverage;
  report["per_domain_fr"] = summary.per_domain_fr;
  report["wer"] = summary.wer.has_value() ? nlohmann::json(*summary.wer)
                                          : nlohmann::json(nullptr);
  out << report.dump(2) << '\n';
}

}  // namespace iqstream
