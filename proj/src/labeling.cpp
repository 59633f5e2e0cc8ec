// src/labeling.cpp

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

#include "iqstream/labeling.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "iqstream/errors.hpp"

namespace iqstream {

namespace {

std::vector<std::string> split_items(const std::string& pattern) {
  std::vector<std::string> items;
  std::istringstream in(pattern);
  std::string item;
  while (in >> item) items.push_back(item);
  return items;
}

struct MatchResult {
  bool ok = false;
  std::size_t consumed = 0;
  std::vector<SlotSpan> spans;
};

// Backtracking matcher maximizing the total number of consumed tokens.
// Grammars here are a handful of short rules, so the exponential worst case
// is irrelevant.
void match_items(const GrammarRule& rule, const SlotTable& slots,
                 const std::vector<std::string>& tokens, std::size_t item_idx,
                 std::size_t pos, std::size_t start,
                 std::vector<SlotSpan>* current, MatchResult* best) {
  if (item_idx == rule.pattern.size()) {
    const std::size_t consumed = pos - start;
    if (consumed > 0 && (!best->ok || consumed > best->consumed)) {
      best->ok = true;
      best->consumed = consumed;
      best->spans = *current;
    }
    return;
  }
  const GrammarItem& item = rule.pattern[item_idx];
  if (item.kind == GrammarItem::Kind::kLiteral) {
    if (pos < tokens.size() && tokens[pos] == item.text) {
      match_items(rule, slots, tokens, item_idx + 1, pos + 1, start, current,
                  best);
    }
  } else {
    auto it = slots.find(item.text);
    if (it == slots.end()) {
      throw ArgumentError("grammar rule '" + rule.name +
                          "' references unknown slot '" + item.text + "'");
    }
    for (const TokenSeq& entry : it->second) {
      if (entry.empty() || pos + entry.size() > tokens.size()) continue;
      if (!std::equal(entry.begin(), entry.end(), tokens.begin() + pos)) {
        continue;
      }
      current->push_back({item.text, pos, pos + entry.size()});
      match_items(rule, slots, tokens, item_idx + 1, pos + entry.size(), start,
                  current, best);
      current->pop_back();
    }
  }
  if (item.optional) {
    match_items(rule, slots, tokens, item_idx + 1, pos, start, current, best);
  }
}

}  // namespace

SlotGrammar grammar_from_spec(const CorpusSpec& spec) {
  SlotGrammar grammar;
  grammar.slots = spec.slots;
  for (const DomainTemplate& d : spec.intended_domains) {
    std::size_t index = 0;
    for (const std::string& pattern : d.templates) {
      GrammarRule rule;
      rule.name = d.name + "/" + std::to_string(index++);
      for (const std::string& item : split_items(pattern)) {
        if (item == "|") continue;
        if (item.size() > 2 && item.front() == '<' && item.back() == '>') {
          rule.pattern.push_back({GrammarItem::Kind::kSlot,
                                  item.substr(1, item.size() - 2), false});
        } else {
          rule.pattern.push_back({GrammarItem::Kind::kLiteral, item, false});
        }
      }
      grammar.rules.push_back(std::move(rule));
    }
  }
  return grammar;
}

SlotGrammar default_grammar() { return grammar_from_spec(default_corpus_spec()); }

std::vector<SlotSpan> parse_slots(const std::vector<std::string>& transcript,
                                  const SlotGrammar& grammar) {
  std::vector<SlotSpan> spans;
  std::size_t i = 0;
  while (i < transcript.size()) {
    MatchResult best;
    for (const GrammarRule& rule : grammar.rules) {
      MatchResult m;
      std::vector<SlotSpan> current;
      match_items(rule, grammar.slots, transcript, 0, i, i, &current, &m);
      if (m.ok && (!best.ok || m.consumed > best.consumed)) best = m;
    }
    if (best.ok) {
      spans.insert(spans.end(), best.spans.begin(), best.spans.end());
      i += best.consumed;
    } else {
      ++i;
    }
  }
  return spans;
}

std::vector<SlotSpan> parse_slots(const std::vector<int>& transcript,
                                  const Vocabulary& vocab,
                                  const SlotGrammar& grammar) {
  std::vector<std::string> tokens;
  tokens.reserve(transcript.size());
  for (int id : transcript) tokens.push_back(vocab.token(id));
  return parse_slots(tokens, grammar);
}

std::vector<std::size_t> silence_gaps(const Utterance& utterance,
                                      std::size_t min_frames) {
  std::vector<std::size_t> gaps;
  const auto& align = utterance.token_alignment;
  for (std::size_t k = 1; k < align.size(); ++k) {
    if (align[k].first - align[k - 1].second >= min_frames) {
      gaps.push_back(k);
    }
  }
  return gaps;
}

AugmentedLabelSequence insert_iq_tokens(
    const std::vector<int>& transcript, const std::vector<SlotSpan>& slots,
    const std::vector<std::size_t>& silence_gap_indices, Intent intent,
    const Vocabulary& vocab) {
  const std::size_t n = transcript.size();
  if (n == 0) throw ArgumentError("insert_iq_tokens: empty transcript");

  std::vector<SlotSpan> sorted = slots;
  std::sort(sorted.begin(), sorted.end(),
            [](const SlotSpan& a, const SlotSpan& b) {
              return a.start_token < b.start_token;
            });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const SlotSpan& s = sorted[i];
    if (s.start_token >= s.end_token || s.end_token > n) {
      throw ArgumentError("insert_iq_tokens: bad span for slot '" +
                          s.slot_name + "'");
    }
    if (i > 0 && sorted[i - 1].end_token > s.start_token) {
      throw ArgumentError("insert_iq_tokens: overlapping slot spans");
    }
  }

  // Gap g hosts at most one class token, placed after token g-1. slot_close
  // beats silence when both apply to the same gap.
  std::map<std::size_t, LabelOrigin> insertions;
  for (std::size_t gap : silence_gap_indices) {
    if (gap == 0 || gap > n) {
      throw ArgumentError("insert_iq_tokens: silence gap out of range");
    }
    insertions[gap] = LabelOrigin::kSilence;
  }
  insertions.emplace(n, LabelOrigin::kSilence);
  if (intent == Intent::kIntended) {
    for (const SlotSpan& s : sorted) {
      insertions[s.end_token] = LabelOrigin::kSlotClose;
    }
  }

  const int iq_id = intent == Intent::kIntended ? vocab.intended_id()
                                                : vocab.unintended_id();
  AugmentedLabelSequence aug;
  aug.intent = intent;
  aug.items.reserve(n + insertions.size());
  for (std::size_t k = 0; k < n; ++k) {
    aug.items.push_back({transcript[k], LabelOrigin::kWordpiece});
    auto it = insertions.find(k + 1);
    if (it != insertions.end()) {
      aug.items.push_back({iq_id, it->second});
    }
  }
  return aug;
}

std::vector<int> to_training_targets(const AugmentedLabelSequence& aug,
                                     bool include_iq) {
  if (aug.items.empty()) {
    throw ArgumentError("to_training_targets: empty sequence");
  }
  std::vector<int> ids;
  ids.reserve(aug.items.size());
  for (const AugmentedItem& item : aug.items) {
    if (include_iq || item.origin == LabelOrigin::kWordpiece) {
      ids.push_back(item.token_id);
    }
  }
  return ids;
}

AugmentedLabelSequence augment_utterance(const Utterance& utterance,
                                         const Vocabulary& vocab) {
  return insert_iq_tokens(utterance.transcript, utterance.slot_spans,
                          silence_gaps(utterance), utterance.intent, vocab);
}

std::vector<std::string> augmented_target_strings(
    const AugmentedLabelSequence& aug, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(aug.items.size());
  for (const AugmentedItem& item : aug.items) {
    out.push_back(vocab.token(item.token_id));
  }
  return out;
}

}  // namespace iqstream
