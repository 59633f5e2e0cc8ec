// include/iqstream/corpus.hpp

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

// Synthetic corpus: intended voice commands and unintended side speech,
// rendered as feature frames with exact token alignments. Intended tokens
// are faster (fewer frames per token) and the two classes share part of the
// vocabulary, so acoustic, text and joint detectors all get signal but none
// gets a free ride.

#ifndef IQSTREAM_CORPUS_HPP_
#define IQSTREAM_CORPUS_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "iqstream/rng.hpp"

namespace iqstream {

enum class Intent { kIntended, kUnintended };

const char* intent_name(Intent intent);
// Throws FormatError on anything but "intended"/"unintended".
Intent intent_from_name(const std::string& name);

// Token span of one filled slot, in transcript token indices.
struct SlotSpan {
  std::string slot_name;
  std::size_t start_token = 0;
  std::size_t end_token = 0;  // exclusive

  bool operator==(const SlotSpan&) const = default;
};

using TokenSeq = std::vector<std::string>;
// Slot name -> the token sequences it can expand to.
using SlotTable = std::map<std::string, std::vector<TokenSeq>>;

struct DomainTemplate {
  std::string name;
  // Patterns of whitespace-separated items: a literal token, a "<slot>"
  // placeholder, or "|" marking a phrase boundary where an internal pause
  // may be inserted.
  std::vector<std::string> templates;
  int tempo_min_frames = 4;
  int tempo_max_frames = 8;
};

struct CorpusSpec {
  uint64_t seed = 42;
  std::size_t n_intended = 0;
  std::size_t n_unintended = 0;
  std::size_t feature_dim = 16;
  double frame_period_ms = 10.0;
  std::vector<DomainTemplate> intended_domains;
  std::vector<DomainTemplate> unintended_domains;
  SlotTable slots;
  double noise_sigma = 0.25;
  double silence_insertion_prob = 0.5;

  // Throws ArgumentError on violated invariants (empty domain lists, bad
  // tempo ranges, slot placeholders in unintended templates, ...).
  void validate() const;
};

// Bundled domains, templates and slot table; counts/seed left for the caller.
CorpusSpec default_corpus_spec();

// Seed salt for the eval split: eval corpora use
// mix_seed(train_seed, kEvalSeedSalt) so the two splits draw disjoint
// streams while sharing the fixed per-token acoustics.
constexpr uint64_t kEvalSeedSalt = 0x6576616c5f736574ULL;

// Silence lengths (lead, trail and internal pauses) are drawn uniformly
// from this range. Some internal pauses deliberately fall below the
// labeling module's 8-frame boundary threshold.
constexpr int kSilenceMinFrames = 6;
constexpr int kSilenceMaxFrames = 16;

struct Utterance {
  std::string id;
  std::string domain;
  Intent intent = Intent::kUnintended;
  std::vector<int> transcript;  // wordpiece token ids
  std::vector<float> features;  // frame_count x feature_dim, row-major
  std::size_t feature_dim = 0;
  std::vector<std::pair<std::size_t, std::size_t>> silence_segments;
  std::size_t start_of_speech_frame = 0;
  std::vector<std::pair<std::size_t, std::size_t>> token_alignment;
  // Filled slots recorded at generation time (intended domains only).
  std::vector<SlotSpan> slot_spans;
  // Augmented target token strings; filled by the labeling pass before the
  // corpus is written, empty until then.
  std::vector<std::string> augmented_targets;

  std::size_t frame_count() const {
    return feature_dim == 0 ? 0 : features.size() / feature_dim;
  }
  const float* frame(std::size_t t) const {
    return features.data() + t * feature_dim;
  }

  bool operator==(const Utterance&) const = default;
};

// Token ids: 0 = <blank>, 1..W = wordpieces in sorted order, then
// <intended>, <unintended>.
class Vocabulary {
 public:
  Vocabulary() = default;
  // wordpieces must be sorted and unique, free of the reserved names.
  static Vocabulary build(const std::vector<std::string>& wordpieces);

  int size() const { return static_cast<int>(tokens_.size()); }
  int blank_id() const { return blank_id_; }
  int intended_id() const { return intended_id_; }
  int unintended_id() const { return unintended_id_; }
  int wordpiece_count() const { return size() - 3; }

  // Throws ArgumentError for unknown tokens / out-of-range ids.
  int id_of(const std::string& token) const;
  const std::string& token(int id) const;
  bool is_wordpiece(int id) const {
    return id > blank_id_ && id < intended_id_;
  }
  bool is_iq_token(int id) const {
    return id == intended_id_ || id == unintended_id_;
  }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
  int blank_id_ = 0;
  int intended_id_ = 0;
  int unintended_id_ = 0;
};

// The vocabulary induced by a spec's templates and slot table.
Vocabulary build_vocabulary(const CorpusSpec& spec);

// Fixed unit-norm mean vector for a token; seeded independently of any
// corpus seed so every corpus (train, eval, any size) shares acoustics.
std::vector<float> token_mean_vector(std::size_t feature_dim, int token_id);

// One template with its slots filled.
struct Instantiation {
  std::vector<std::string> tokens;
  std::vector<SlotSpan> slot_spans;
  std::vector<std::size_t> phrase_gaps;  // token-gap indices from "|" marks
};

// Expands a template pattern, drawing slot entries from rng.
Instantiation instantiate_template(const std::string& pattern,
                                   const SlotTable& slots, Rng* rng);

struct RenderResult {
  std::vector<float> features;
  std::vector<std::pair<std::size_t, std::size_t>> silence_segments;
  std::size_t start_of_speech_frame = 0;
  std::vector<std::pair<std::size_t, std::size_t>> token_alignment;
};

// Renders a transcript: leading silence, per-token frames (duration drawn
// from the domain tempo, frame = token mean + noise), optional pauses at
// phrase gaps, trailing silence. Silence frames are zero-mean noise.
RenderResult render_features(const std::vector<int>& transcript,
                             const DomainTemplate& domain,
                             const CorpusSpec& spec,
                             const std::vector<std::size_t>& phrase_gaps,
                             Rng* rng);

// Deterministic given spec.seed; utterance i is intended iff i < n_intended,
// and each utterance's draws come from an rng seeded by (seed, index).
std::pair<Vocabulary, std::vector<Utterance>> generate_corpus(
    const CorpusSpec& spec);

// Writes vocab.json, manifest.jsonl and features/<id>.iqf under dir; returns
// the manifest path. read_corpus inverts it bit-exactly.
std::string write_corpus(const std::string& dir, const Vocabulary& vocab,
                         const std::vector<Utterance>& utterances);
std::pair<Vocabulary, std::vector<Utterance>> read_corpus(
    const std::string& dir);

}  // namespace iqstream

#endif  // IQSTREAM_CORPUS_HPP_
