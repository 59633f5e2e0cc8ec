// include/iqstream/labeling.hpp

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

// Label augmentation: a deterministic slot grammar marks spans of complete
// semantic content, and IQ class tokens are inserted after slot closes, at
// long-enough pauses, and at the utterance end.

#ifndef IQSTREAM_LABELING_HPP_
#define IQSTREAM_LABELING_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "iqstream/corpus.hpp"

namespace iqstream {

struct GrammarItem {
  enum class Kind { kLiteral, kSlot };
  Kind kind = Kind::kLiteral;
  std::string text;  // literal token, or slot name for kSlot
  bool optional = false;
};

struct GrammarRule {
  std::string name;
  std::vector<GrammarItem> pattern;
};

struct SlotGrammar {
  std::vector<GrammarRule> rules;
  SlotTable slots;
};

// Grammar induced by a spec's intended templates (one rule per template).
SlotGrammar grammar_from_spec(const CorpusSpec& spec);
// grammar_from_spec(default_corpus_spec()).
SlotGrammar default_grammar();

// Longest-match left-to-right scan; returns the slot spans of every matched
// rule, in transcript order. Unmatched regions are skipped token by token.
std::vector<SlotSpan> parse_slots(const std::vector<std::string>& transcript,
                                  const SlotGrammar& grammar);
std::vector<SlotSpan> parse_slots(const std::vector<int>& transcript,
                                  const Vocabulary& vocab,
                                  const SlotGrammar& grammar);

enum class LabelOrigin { kWordpiece, kSlotClose, kSilence };

struct AugmentedItem {
  int token_id = 0;
  LabelOrigin origin = LabelOrigin::kWordpiece;

  bool operator==(const AugmentedItem&) const = default;
};

struct AugmentedLabelSequence {
  std::vector<AugmentedItem> items;
  Intent intent = Intent::kUnintended;

  bool operator==(const AugmentedLabelSequence&) const = default;
};

// A pause between two tokens counts as an insertion boundary only from this
// length on; shorter hesitations are ignored.
constexpr std::size_t kSilenceBoundaryMinFrames = 8;

// Internal token-gap indices (gap g sits after token g-1) whose inter-token
// pause is at least min_frames long, from the recorded alignment.
std::vector<std::size_t> silence_gaps(
    const Utterance& utterance,
    std::size_t min_frames = kSilenceBoundaryMinFrames);

// Inserts the class token at each slot end (intended only), at each given
// silence gap, and at the utterance end; one token per gap at most. Gap g
// inserts after token g-1. Throws ArgumentError on an empty transcript,
// overlapping spans, or out-of-range indices.
AugmentedLabelSequence insert_iq_tokens(
    const std::vector<int>& transcript, const std::vector<SlotSpan>& slots,
    const std::vector<std::size_t>& silence_gap_indices, Intent intent,
    const Vocabulary& vocab);

// include_iq=false strips IQ tokens (recovering the transcript);
// include_iq=true returns all ids verbatim.
std::vector<int> to_training_targets(const AugmentedLabelSequence& aug,
                                     bool include_iq);

// Full labeling pass over one generated utterance, using its recorded slot
// spans and alignment-derived silence gaps.
AugmentedLabelSequence augment_utterance(const Utterance& utterance,
                                         const Vocabulary& vocab);

std::vector<std::string> augmented_target_strings(
    const AugmentedLabelSequence& aug, const Vocabulary& vocab);

}  // namespace iqstream

#endif  // IQSTREAM_LABELING_HPP_
