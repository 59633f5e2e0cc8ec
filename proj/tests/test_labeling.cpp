// tests/test_labeling.cpp

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

#include <set>
#include <string>
#include <vector>

#include "iqstream/corpus.hpp"
#include "iqstream/errors.hpp"
#include "iqstream/labeling.hpp"

using namespace iqstream;

namespace {

std::vector<std::string> tokens_of(const AugmentedLabelSequence& aug,
                                   const Vocabulary& vocab) {
  return augmented_target_strings(aug, vocab);
}

Utterance stub_utterance(const Vocabulary& vocab,
                         const std::vector<std::string>& words,
                         Intent intent,
                         std::vector<std::pair<std::size_t, std::size_t>> align,
                         std::vector<SlotSpan> spans = {}) {
  Utterance u;
  u.id = "stub";
  u.intent = intent;
  for (const auto& w : words) u.transcript.push_back(vocab.id_of(w));
  u.token_alignment = std::move(align);
  u.slot_spans = std::move(spans);
  u.feature_dim = 0;
  return u;
}

}  // namespace

TEST_CASE("parse_slots finds spans with the bundled grammar") {
  const CorpusSpec spec = default_corpus_spec();
  const SlotGrammar grammar = default_grammar();

  SUBCASE("single slot") {
    const auto spans = parse_slots({"play", "jazz"}, grammar);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].slot_name == "media_object");
    CHECK(spans[0].start_token == 1);
    CHECK(spans[0].end_token == 2);
  }
  SUBCASE("multi token slot value") {
    const auto spans = parse_slots({"play", "the", "news"}, grammar);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].slot_name == "media_object");
    CHECK(spans[0].start_token == 1);
    CHECK(spans[0].end_token == 3);
  }
  SUBCASE("two slots in sequence") {
    const auto spans =
        parse_slots({"snooze", "alarm", "at", "8:00"}, grammar);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0] == SlotSpan{"alarm_action", 0, 2});
    CHECK(spans[1] == SlotSpan{"time_label", 2, 4});
  }
  SUBCASE("longest match wins over a shorter rule") {
    // "stop" alone is an undo command, but the three token alarm action
    // consumes more of the input and must be preferred.
    const auto spans = parse_slots({"stop", "the", "timer"}, grammar);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0] == SlotSpan{"alarm_action", 0, 3});
  }
  SUBCASE("unintended text yields no spans") {
    CHECK(parse_slots({"i", "love", "this", "song"}, grammar).empty());
  }
  SUBCASE("id overload matches the string overload") {
    const Vocabulary vocab = build_vocabulary(spec);
    const std::vector<int> ids = {vocab.id_of("call"), vocab.id_of("mom"),
                                  vocab.id_of("right"), vocab.id_of("now")};
    const auto spans = parse_slots(ids, vocab, grammar);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0] == SlotSpan{"contact_name", 1, 2});
  }
}

TEST_CASE("parse_slots honors optional grammar items") {
  SlotGrammar g;
  g.slots["time_label"] = {{"at", "8:00"}, {"at", "noon"}};
  GrammarRule rule;
  rule.name = "alarm/custom";
  rule.pattern = {{GrammarItem::Kind::kLiteral, "snooze", false},
                  {GrammarItem::Kind::kLiteral, "alarm", false},
                  {GrammarItem::Kind::kSlot, "time_label", true}};
  g.rules.push_back(rule);

  const auto with_time = parse_slots({"snooze", "alarm", "at", "8:00"}, g);
  REQUIRE(with_time.size() == 1);
  CHECK(with_time[0] == SlotSpan{"time_label", 2, 4});

  // The optional tail may be absent; the rule still matches and simply
  // produces no span.
  CHECK(parse_slots({"snooze", "alarm"}, g).empty());

  GrammarRule bad;
  bad.name = "broken";
  bad.pattern = {{GrammarItem::Kind::kSlot, "no_such_slot", false}};
  SlotGrammar g2;
  g2.rules.push_back(bad);
  CHECK_THROWS_AS(parse_slots({"anything"}, g2), ArgumentError);
}

TEST_CASE("grammar_from_spec derives one rule per intended template") {
  const CorpusSpec spec = default_corpus_spec();
  const SlotGrammar g = grammar_from_spec(spec);
  std::size_t templates = 0;
  for (const DomainTemplate& d : spec.intended_domains) {
    templates += d.templates.size();
  }
  CHECK(g.rules.size() == templates);
  CHECK(g.slots.size() == spec.slots.size());
}

TEST_CASE("silence_gaps respects the frame threshold") {
  const Vocabulary vocab = build_vocabulary(default_corpus_spec());
  Utterance wide = stub_utterance(vocab, {"play", "jazz"}, Intent::kIntended,
                                  {{6, 10}, {18, 22}});
  CHECK(silence_gaps(wide) == std::vector<std::size_t>{1});

  Utterance narrow = stub_utterance(vocab, {"play", "jazz"}, Intent::kIntended,
                                    {{6, 10}, {17, 21}});
  CHECK(silence_gaps(narrow).empty());

  Utterance adjacent = stub_utterance(vocab, {"play", "jazz"},
                                      Intent::kIntended, {{6, 10}, {10, 14}});
  CHECK(silence_gaps(adjacent).empty());
}

TEST_CASE("insert_iq_tokens golden sequences") {
  const Vocabulary vocab = build_vocabulary(default_corpus_spec());

  SUBCASE("slot closings in an intended command") {
    const std::vector<int> transcript = {
        vocab.id_of("snooze"), vocab.id_of("alarm"), vocab.id_of("at"),
        vocab.id_of("8:00")};
    const std::vector<SlotSpan> spans = {{"alarm_action", 0, 2},
                                         {"time_label", 2, 4}};
    const AugmentedLabelSequence aug =
        insert_iq_tokens(transcript, spans, {}, Intent::kIntended, vocab);
    const std::vector<std::string> expect = {"snooze", "alarm", "<intended>",
                                             "at", "8:00", "<intended>"};
    CHECK(tokens_of(aug, vocab) == expect);
    REQUIRE(aug.items.size() == 6);
    CHECK(aug.items[2].origin == LabelOrigin::kSlotClose);
    // The final slot closes at the utterance end, so the slot origin wins
    // over the end of stream insertion.
    CHECK(aug.items[5].origin == LabelOrigin::kSlotClose);
    CHECK(aug.items[0].origin == LabelOrigin::kWordpiece);
  }

  SUBCASE("silence gaps in an unintended utterance") {
    const std::vector<int> transcript = {vocab.id_of("i"), vocab.id_of("love"),
                                         vocab.id_of("this"),
                                         vocab.id_of("song")};
    const AugmentedLabelSequence aug =
        insert_iq_tokens(transcript, {}, {2}, Intent::kUnintended, vocab);
    const std::vector<std::string> expect = {"i",    "love", "<unintended>",
                                             "this", "song", "<unintended>"};
    CHECK(tokens_of(aug, vocab) == expect);
    CHECK(aug.items[2].origin == LabelOrigin::kSilence);
    CHECK(aug.items[5].origin == LabelOrigin::kSilence);
    CHECK(aug.intent == Intent::kUnintended);
  }

  SUBCASE("slot end and silence gap collapse to one token") {
    const std::vector<int> transcript = {vocab.id_of("play"),
                                         vocab.id_of("jazz"),
                                         vocab.id_of("please")};
    const AugmentedLabelSequence aug = insert_iq_tokens(
        transcript, {{"media_object", 1, 2}}, {2}, Intent::kIntended, vocab);
    const std::vector<std::string> expect = {"play", "jazz", "<intended>",
                                             "please", "<intended>"};
    CHECK(tokens_of(aug, vocab) == expect);
    CHECK(aug.items[2].origin == LabelOrigin::kSlotClose);
  }

  SUBCASE("intended utterance without slots still closes at the end") {
    const std::vector<int> transcript = {vocab.id_of("what"), vocab.id_of("time"),
                                         vocab.id_of("is"), vocab.id_of("it")};
    const AugmentedLabelSequence aug =
        insert_iq_tokens(transcript, {}, {}, Intent::kIntended, vocab);
    REQUIRE(aug.items.size() == 5);
    CHECK(aug.items.back().token_id == vocab.intended_id());
    CHECK(aug.items.back().origin == LabelOrigin::kSilence);
  }

  SUBCASE("unintended ignores slot spans") {
    const std::vector<int> transcript = {vocab.id_of("set"), vocab.id_of("an"),
                                         vocab.id_of("alarm"), vocab.id_of("at"),
                                         vocab.id_of("noon")};
    const AugmentedLabelSequence aug = insert_iq_tokens(
        transcript, {{"time_label", 3, 5}}, {}, Intent::kUnintended, vocab);
    REQUIRE(aug.items.size() == 6);
    CHECK(aug.items.back().token_id == vocab.unintended_id());
    for (std::size_t i = 0; i + 1 < aug.items.size(); ++i) {
      CHECK(vocab.is_wordpiece(aug.items[i].token_id));
    }
  }
}

TEST_CASE("insert_iq_tokens rejects invalid structure") {
  const Vocabulary vocab = build_vocabulary(default_corpus_spec());
  const std::vector<int> transcript = {vocab.id_of("play"), vocab.id_of("jazz")};

  CHECK_THROWS_AS(insert_iq_tokens({}, {}, {}, Intent::kIntended, vocab),
                  ArgumentError);
  CHECK_THROWS_AS(
      insert_iq_tokens(transcript, {{"media_object", 1, 5}}, {},
                       Intent::kIntended, vocab),
      ArgumentError);
  CHECK_THROWS_AS(
      insert_iq_tokens(transcript, {{"a", 0, 2}, {"b", 1, 2}}, {},
                       Intent::kIntended, vocab),
      ArgumentError);
  CHECK_THROWS_AS(
      insert_iq_tokens(transcript, {}, {0}, Intent::kIntended, vocab),
      ArgumentError);
  CHECK_THROWS_AS(
      insert_iq_tokens(transcript, {}, {3}, Intent::kIntended, vocab),
      ArgumentError);
}

TEST_CASE("to_training_targets strips or keeps the class tokens") {
  const Vocabulary vocab = build_vocabulary(default_corpus_spec());
  const std::vector<int> transcript = {vocab.id_of("play"), vocab.id_of("jazz")};
  const AugmentedLabelSequence aug = insert_iq_tokens(
      transcript, {{"media_object", 1, 2}}, {}, Intent::kIntended, vocab);

  CHECK(to_training_targets(aug, false) == transcript);
  const std::vector<int> with_iq = to_training_targets(aug, true);
  REQUIRE(with_iq.size() == 3);
  CHECK(with_iq[2] == vocab.intended_id());

  AugmentedLabelSequence empty;
  empty.intent = Intent::kIntended;
  CHECK_THROWS_AS(to_training_targets(empty, false), ArgumentError);
}

TEST_CASE("augmentation invariants hold across a generated corpus") {
  CorpusSpec spec = default_corpus_spec();
  spec.seed = 42;
  spec.n_intended = 500;
  spec.n_unintended = 500;
  const auto [vocab, utts] = generate_corpus(spec);
  const SlotGrammar grammar = default_grammar();

  for (const Utterance& u : utts) {
    const AugmentedLabelSequence aug = augment_utterance(u, vocab);

    // Stripping the class tokens recovers the transcript exactly.
    CHECK(to_training_targets(aug, false) == u.transcript);

    // Class purity: only the matching class token ever appears.
    const int own = u.intent == Intent::kIntended ? vocab.intended_id()
                                                  : vocab.unintended_id();
    const int other = u.intent == Intent::kIntended ? vocab.unintended_id()
                                                    : vocab.intended_id();
    std::size_t own_count = 0;
    for (const AugmentedItem& item : aug.items) {
      CHECK(item.token_id != other);
      if (item.token_id == own) ++own_count;
    }
    CHECK(own_count >= 1);

    // The class token never repeats back to back.
    for (std::size_t i = 0; i + 1 < aug.items.size(); ++i) {
      const bool a = vocab.is_iq_token(aug.items[i].token_id);
      const bool b = vocab.is_iq_token(aug.items[i + 1].token_id);
      CHECK(!(a && b));
    }
    CHECK(vocab.is_iq_token(aug.items.back().token_id));

    // Insertion positions stay inside the allowed set: slot closings,
    // silence gaps, and the utterance end.
    std::set<std::size_t> allowed;
    for (const SlotSpan& s : u.slot_spans) allowed.insert(s.end_token);
    for (std::size_t g : silence_gaps(u)) allowed.insert(g);
    allowed.insert(u.transcript.size());
    std::size_t wordpieces_seen = 0;
    for (const AugmentedItem& item : aug.items) {
      if (vocab.is_iq_token(item.token_id)) {
        CHECK(allowed.count(wordpieces_seen) == 1);
      } else {
        ++wordpieces_seen;
      }
    }

    // Re-parsing an intended transcript reproduces the recorded spans.
    if (u.intent == Intent::kIntended) {
      CHECK(parse_slots(u.transcript, vocab, grammar) == u.slot_spans);
    }

    const std::vector<std::string> strings = augmented_target_strings(aug, vocab);
    CHECK(strings.size() == aug.items.size());
  }
}
