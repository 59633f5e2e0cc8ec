// tests/test_eval.cpp

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "iqstream/errors.hpp"
#include "iqstream/eval.hpp"
#include "iqstream/rng.hpp"

namespace iqstream {
namespace {

ScoredUtterance make_scored(const std::string& id, const std::string& domain,
                            Intent intent,
                            const std::vector<double>& posteriors,
                            double start_ms = 0.0, double step_ms = 100.0) {
  std::vector<DecisionEvent> events;
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    DecisionEvent ev;
    ev.encoder_step = i + 1;
    ev.time_ms = static_cast<double>(i + 1) * step_ms;
    ev.intended_posterior = posteriors[i];
    events.push_back(ev);
  }
  return score_stream(id, domain, intent, start_ms, std::move(events));
}

ScoredUtterance make_point(Intent intent, double score,
                           const std::string& domain = "media") {
  static int counter = 0;
  return make_scored("utt-" + std::to_string(counter++), domain, intent,
                     {score});
}

// Full-matrix Levenshtein, independent of the two-row library version.
std::size_t matrix_edit_distance(const std::vector<int>& a,
                                 const std::vector<int>& b) {
  std::vector<std::vector<std::size_t>> d(
      a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({sub, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  return d[a.size()][b.size()];
}

std::vector<int> random_tokens(Rng* rng, std::size_t max_len) {
  std::vector<int> out(
      static_cast<std::size_t>(rng->next_int(0, static_cast<int>(max_len))));
  for (int& t : out) t = static_cast<int>(rng->next_int(0, 3));
  return out;
}

}  // namespace

TEST_CASE("score stream records the running maximum") {
  const ScoredUtterance s = make_scored("u1", "media", Intent::kIntended,
                                        {0.1, 0.7, 0.3}, 50.0);
  CHECK(s.max_posterior == 0.7);
  CHECK(s.start_of_speech_ms == 50.0);
  CHECK(s.events.size() == 3);

  CHECK(first_crossing_ms(s, 0.65) == 200.0);
  CHECK(first_crossing_ms(s, 0.7) == 200.0);  // crossing is >= threshold
  CHECK(first_crossing_ms(s, 0.05) == 100.0);
  CHECK(!first_crossing_ms(s, 0.75).has_value());

  CHECK_THROWS_AS(score_stream("u2", "media", Intent::kIntended, 0.0, {}),
                  ArgumentError);
}

TEST_CASE("default threshold grid covers the observed scores") {
  std::vector<ScoredUtterance> scored;
  scored.push_back(make_point(Intent::kIntended, 0.8));
  scored.push_back(make_point(Intent::kIntended, 0.8));
  scored.push_back(make_point(Intent::kUnintended, 0.2));

  const std::vector<double> grid = default_threshold_grid(scored);
  CHECK(grid == std::vector<double>{0.0, 0.2, 0.8, 1.0});
}

TEST_CASE("det curve matches exhaustive counting") {
  SUBCASE("perfectly separated scores contain a zero-zero point") {
    std::vector<ScoredUtterance> scored;
    for (double s : {0.8, 0.85, 0.9}) {
      scored.push_back(make_point(Intent::kIntended, s));
    }
    for (double s : {0.1, 0.2, 0.3}) {
      scored.push_back(make_point(Intent::kUnintended, s));
    }
    const std::vector<DetPoint> det =
        det_curve(scored, default_threshold_grid(scored));
    const bool has_perfect =
        std::any_of(det.begin(), det.end(), [](const DetPoint& p) {
          return p.false_accept_rate == 0.0 && p.false_reject_rate == 0.0;
        });
    CHECK(has_perfect);
  }

  SUBCASE("a threshold below every score accepts everything") {
    std::vector<ScoredUtterance> scored;
    scored.push_back(make_point(Intent::kIntended, 0.6));
    scored.push_back(make_point(Intent::kUnintended, 0.4));
    const std::vector<DetPoint> det = det_curve(scored, {0.0});
    REQUIRE(det.size() == 1);
    CHECK(det[0].false_accept_rate == 1.0);
    CHECK(det[0].false_reject_rate == 0.0);
  }

  SUBCASE("twenty hand-listed scores against the counting oracle") {
    const std::vector<double> intended = {0.95, 0.9, 0.9, 0.82, 0.7, 0.66,
                                          0.5,  0.4, 0.33, 0.1};
    const std::vector<double> unintended = {0.88, 0.71, 0.6, 0.55, 0.42,
                                            0.3,  0.22, 0.2, 0.12, 0.02};
    std::vector<ScoredUtterance> scored;
    for (double s : intended) scored.push_back(make_point(Intent::kIntended, s));
    for (double s : unintended) {
      scored.push_back(make_point(Intent::kUnintended, s));
    }

    const std::vector<double> grid = default_threshold_grid(scored);
    const std::vector<DetPoint> det = det_curve(scored, grid);
    REQUIRE(det.size() == grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::size_t fa = 0;
      std::size_t fr = 0;
      for (double s : unintended) fa += s >= grid[i] ? 1 : 0;
      for (double s : intended) fr += s < grid[i] ? 1 : 0;
      CHECK(det[i].threshold == grid[i]);
      CHECK(det[i].false_accept_rate == static_cast<double>(fa) / 10.0);
      CHECK(det[i].false_reject_rate == static_cast<double>(fr) / 10.0);
    }
  }

  SUBCASE("monotone in the threshold") {
    Rng rng(7);
    std::vector<ScoredUtterance> scored;
    for (int i = 0; i < 40; ++i) {
      const Intent intent =
          i % 2 == 0 ? Intent::kIntended : Intent::kUnintended;
      scored.push_back(make_point(intent, rng.next_real01()));
    }
    const std::vector<DetPoint> det =
        det_curve(scored, default_threshold_grid(scored));
    for (std::size_t i = 0; i + 1 < det.size(); ++i) {
      CHECK(det[i + 1].false_accept_rate <= det[i].false_accept_rate);
      CHECK(det[i + 1].false_reject_rate >= det[i].false_reject_rate);
    }
  }

  SUBCASE("a single class is rejected") {
    std::vector<ScoredUtterance> scored;
    scored.push_back(make_point(Intent::kIntended, 0.5));
    CHECK_THROWS_AS(det_curve(scored, {0.5}), ArgumentError);
  }
}

TEST_CASE("eer interpolates the crossing") {
  SUBCASE("symmetric straddle lands in the middle") {
    std::vector<DetPoint> det(2);
    det[0] = {0.4, 0.2, 0.1};
    det[1] = {0.6, 0.1, 0.2};
    const EerResult r = eer(det);
    CHECK(r.eer == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(r.threshold == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(!r.degenerate);
  }

  SUBCASE("perfect classifier reaches zero") {
    std::vector<ScoredUtterance> scored;
    for (double s : {0.8, 0.9}) scored.push_back(make_point(Intent::kIntended, s));
    for (double s : {0.1, 0.2}) {
      scored.push_back(make_point(Intent::kUnintended, s));
    }
    const EerResult r =
        eer(det_curve(scored, default_threshold_grid(scored)));
    CHECK(r.eer == 0.0);
    CHECK(!r.degenerate);
  }

  SUBCASE("thousand random scores against an exhaustive sweep") {
    Rng rng(1234);
    std::vector<double> pos(600);
    std::vector<double> neg(400);
    for (double& s : pos) s = 0.3 + 0.7 * rng.next_real01();
    for (double& s : neg) s = 0.7 * rng.next_real01();

    std::vector<ScoredUtterance> scored;
    for (double s : pos) scored.push_back(make_point(Intent::kIntended, s));
    for (double s : neg) scored.push_back(make_point(Intent::kUnintended, s));
    const EerResult r =
        eer(det_curve(scored, default_threshold_grid(scored)));

    // Independent sweep over all distinct score thresholds.
    std::set<double> grid = {0.0, 1.0};
    grid.insert(pos.begin(), pos.end());
    grid.insert(neg.begin(), neg.end());
    struct Pt {
      double theta, fa, fr;
    };
    std::vector<Pt> pts;
    for (double theta : grid) {
      const auto fa = std::count_if(neg.begin(), neg.end(),
                                    [&](double s) { return s >= theta; });
      const auto fr = std::count_if(pos.begin(), pos.end(),
                                    [&](double s) { return s < theta; });
      pts.push_back({theta, static_cast<double>(fa) / 400.0,
                     static_cast<double>(fr) / 600.0});
    }
    bool found = false;
    double expected_eer = 0.0;
    double expected_theta = 0.0;
    for (const Pt& p : pts) {
      if (p.fa == p.fr) {
        expected_eer = p.fa;
        expected_theta = p.theta;
        found = true;
        break;
      }
    }
    for (std::size_t i = 0; !found && i + 1 < pts.size(); ++i) {
      const double d0 = pts[i].fa - pts[i].fr;
      const double d1 = pts[i + 1].fa - pts[i + 1].fr;
      if (d0 > 0.0 && d1 < 0.0) {
        const double t = d0 / (d0 - d1);
        expected_eer = pts[i].fa + t * (pts[i + 1].fa - pts[i].fa);
        expected_theta =
            pts[i].theta + t * (pts[i + 1].theta - pts[i].theta);
        found = true;
      }
    }
    REQUIRE(found);
    CHECK(r.eer == doctest::Approx(expected_eer).epsilon(1e-12));
    CHECK(r.threshold == doctest::Approx(expected_theta).epsilon(1e-12));
    CHECK(!r.degenerate);

    // The interpolated fixed point sits within grid resolution of the
    // best balanced observable operating point.
    double best_mid = 0.0;
    double best_gap = 2.0;
    for (const Pt& p : pts) {
      if (std::abs(p.fa - p.fr) < best_gap) {
        best_gap = std::abs(p.fa - p.fr);
        best_mid = 0.5 * (p.fa + p.fr);
      }
    }
    CHECK(std::abs(r.eer - best_mid) <= 1.0 / (2.0 * 400.0) + 1e-12);
  }

  SUBCASE("no straddle returns the boundary with a flag") {
    std::vector<DetPoint> det(2);
    det[0] = {0.2, 0.9, 0.1};
    det[1] = {0.8, 0.5, 0.2};
    const EerResult r = eer(det);
    CHECK(r.degenerate);
    CHECK(r.threshold == 0.8);
    CHECK(r.eer == doctest::Approx(0.35).epsilon(1e-12));
    CHECK_THROWS_AS(eer({}), ArgumentError);
  }
}

TEST_CASE("latency percentiles use the nearest rank") {
  SUBCASE("ten evenly spaced latencies") {
    std::vector<ScoredUtterance> scored;
    for (int i = 1; i <= 10; ++i) {
      // One event at i*100 ms that crosses any threshold up to 1.
      scored.push_back(make_scored("u" + std::to_string(i), "media",
                                   Intent::kIntended, {1.0}, 0.0,
                                   static_cast<double>(i) * 100.0));
    }
    const LatencyStats stats = latency_percentiles(scored, 0.5);
    CHECK(stats.coverage == 1.0);
    CHECK(stats.p50_ms == 500.0);
    CHECK(stats.p90_ms == 900.0);
  }

  SUBCASE("single utterance collapses both percentiles") {
    const std::vector<ScoredUtterance> scored = {
        make_scored("u", "media", Intent::kIntended, {0.9}, 0.0, 240.0)};
    const LatencyStats stats = latency_percentiles(scored, 0.5);
    CHECK(stats.p50_ms == 240.0);
    CHECK(stats.p90_ms == 240.0);
    CHECK(stats.coverage == 1.0);
  }

  SUBCASE("random multiset against a sorting oracle") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 1 + static_cast<std::size_t>(rng.next_int(0, 30));
      std::vector<ScoredUtterance> scored;
      std::vector<double> latencies;
      for (std::size_t i = 0; i < n; ++i) {
        const double step = 10.0 * (1 + rng.next_int(0, 50));
        scored.push_back(make_scored("u" + std::to_string(i), "media",
                                     Intent::kIntended, {1.0}, 0.0, step));
        latencies.push_back(step);
      }
      std::sort(latencies.begin(), latencies.end());
      auto rank = [&](std::size_t pct) {
        std::size_t r = pct * n / 100;
        if (pct * n % 100 != 0) ++r;
        return r;
      };
      const LatencyStats stats = latency_percentiles(scored, 0.5);
      CHECK(stats.p50_ms == latencies[rank(50) - 1]);
      CHECK(stats.p90_ms == latencies[rank(90) - 1]);
    }
  }

  SUBCASE("start of speech offsets the decision time") {
    const std::vector<ScoredUtterance> scored = {
        make_scored("u", "media", Intent::kIntended, {0.2, 0.8, 0.9}, 150.0,
                    100.0)};
    const LatencyStats stats = latency_percentiles(scored, 0.75);
    CHECK(stats.p50_ms == 200.0 - 150.0);  // crosses at the second event
  }

  SUBCASE("never crossing sets the error flag") {
    std::vector<ScoredUtterance> scored = {
        make_scored("u1", "media", Intent::kIntended, {0.3}),
        make_scored("u2", "media", Intent::kIntended, {0.4})};
    const LatencyStats stats = latency_percentiles(scored, 0.9);
    CHECK(stats.no_crossings);
    CHECK(stats.coverage == 0.0);
    CHECK(!stats.p50_ms.has_value());
    CHECK(!stats.p90_ms.has_value());
  }

  SUBCASE("partial coverage excludes the misses") {
    std::vector<ScoredUtterance> scored = {
        make_scored("u1", "media", Intent::kIntended, {0.95}, 0.0, 100.0),
        make_scored("u2", "media", Intent::kIntended, {0.05}, 0.0, 100.0),
        make_scored("u3", "chat", Intent::kUnintended, {0.99}, 0.0, 100.0)};
    const LatencyStats stats = latency_percentiles(scored, 0.5);
    CHECK(stats.intended_count == 2);
    CHECK(stats.crossed_count == 1);
    CHECK(stats.coverage == 0.5);
    CHECK(stats.p50_ms == 100.0);

    CHECK_THROWS_AS(latency_percentiles({scored[2]}, 0.5), ArgumentError);
  }
}

TEST_CASE("per domain false rejects group by tag") {
  SUBCASE("everything crossing yields zero everywhere") {
    std::vector<ScoredUtterance> scored = {
        make_point(Intent::kIntended, 0.9, "media"),
        make_point(Intent::kIntended, 0.8, "home"),
        make_point(Intent::kIntended, 0.7, "productivity")};
    for (const auto& [domain, fr] : per_domain_fr(scored, 0.5)) {
      CHECK(fr == 0.0);
    }
  }

  SUBCASE("one domain fully rejected leaves the others unchanged") {
    std::vector<ScoredUtterance> scored = {
        make_point(Intent::kIntended, 0.9, "media"),
        make_point(Intent::kIntended, 0.1, "home"),
        make_point(Intent::kIntended, 0.2, "home")};
    const auto fr = per_domain_fr(scored, 0.5);
    CHECK(fr.at("media") == 0.0);
    CHECK(fr.at("home") == 1.0);
  }

  SUBCASE("hand fixture of three domains by four utterances") {
    const std::vector<std::string> domains = {"media", "home", "zz-custom"};
    const double scores[3][4] = {{0.9, 0.8, 0.3, 0.2},
                                 {0.9, 0.9, 0.9, 0.1},
                                 {0.4, 0.3, 0.2, 0.1}};
    std::vector<ScoredUtterance> scored;
    for (std::size_t d = 0; d < 3; ++d) {
      for (std::size_t i = 0; i < 4; ++i) {
        scored.push_back(make_point(Intent::kIntended, scores[d][i],
                                    domains[d]));
      }
    }
    scored.push_back(make_point(Intent::kUnintended, 0.01, "media"));

    const auto fr = per_domain_fr(scored, 0.5);
    REQUIRE(fr.size() == 3);
    CHECK(fr.at("media") == 0.5);
    CHECK(fr.at("home") == 0.25);
    CHECK(fr.at("zz-custom") == 1.0);
  }
}

TEST_CASE("word error rate divides edit distance by reference length") {
  CHECK(wer(std::vector<std::string>{"a", "b", "c"},
            std::vector<std::string>{"a", "b", "c"}) == 0.0);
  CHECK(wer(std::vector<std::string>{"a", "x", "c"},
            std::vector<std::string>{"a", "b", "c"}) ==
        doctest::Approx(1.0 / 3.0));
  CHECK(wer(std::vector<int>{}, std::vector<int>{5, 6}) == 1.0);
  CHECK(wer(std::vector<int>{5, 6, 7, 8}, std::vector<int>{5, 6}) == 1.0);
  CHECK_THROWS_AS(wer(std::vector<int>{1}, std::vector<int>{}), ArgumentError);

  SUBCASE("random pairs against the full matrix oracle") {
    Rng rng(321);
    for (int trial = 0; trial < 100; ++trial) {
      const std::vector<int> a = random_tokens(&rng, 12);
      std::vector<int> b = random_tokens(&rng, 12);
      if (b.empty()) b.push_back(1);
      CHECK(edit_distance(a, b) == matrix_edit_distance(a, b));
      CHECK(wer(a, b) == doctest::Approx(
                             static_cast<double>(matrix_edit_distance(a, b)) /
                             static_cast<double>(b.size())));
    }
  }

  SUBCASE("edit distance satisfies the triangle inequality") {
    Rng rng(654);
    for (int trial = 0; trial < 60; ++trial) {
      const std::vector<int> a = random_tokens(&rng, 10);
      const std::vector<int> b = random_tokens(&rng, 10);
      const std::vector<int> c = random_tokens(&rng, 10);
      CHECK(edit_distance(a, c) <=
            edit_distance(a, b) + edit_distance(b, c));
    }
  }
}

TEST_CASE("det csv and summary json serialize the report") {
  std::vector<DetPoint> det(2);
  det[0] = {0.25, 0.75, 0.125};
  det[1] = {0.75, 0.125, 0.75};

  std::ostringstream csv;
  write_det_csv(csv, det);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "threshold,fa_rate,fr_rate");
  std::getline(in, line);
  CHECK(line == "0.25,0.75,0.125");
  std::getline(in, line);
  CHECK(line == "0.75,0.125,0.75");
  CHECK(!std::getline(in, line));

  EvalSummary summary;
  summary.model = "e2e";
  summary.eer = 0.12;
  summary.eer_threshold = 0.61;
  summary.p50_ms = 340.0;
  summary.p90_ms.reset();
  summary.coverage = 0.97;
  summary.per_domain_fr = {{"media", 0.1}, {"home", 0.2}};
  summary.wer = 0.04;

  std::ostringstream out;
  write_summary_json(out, summary);
  const nlohmann::json report = nlohmann::json::parse(out.str());
  CHECK(report.at("model") == "e2e");
  CHECK(report.at("eer") == 0.12);
  CHECK(report.at("eer_threshold") == 0.61);
  CHECK(report.at("eer_degenerate") == false);
  CHECK(report.at("p50_ms") == 340.0);
  CHECK(report.at("p90_ms").is_null());
  CHECK(report.at("coverage") == 0.97);
  CHECK(report.at("per_domain_fr").at("home") == 0.2);
  CHECK(report.at("wer") == 0.04);
}

}  // namespace iqstream
