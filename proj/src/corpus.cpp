// src/corpus.cpp

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

#include "iqstream/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "iqstream/errors.hpp"

namespace iqstream {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "corpus binary formats are written without byte swapping");

namespace {

// Per-token acoustic means are seeded by this constant, never by the corpus
// seed, so every generated corpus shares the same token acoustics.
constexpr uint64_t kAcousticSeed = 0x61636f7573746963ULL;

constexpr char kFeatureMagic[4] = {'I', 'Q', 'F', '1'};

const char* const kBlankToken = "<blank>";
const char* const kIntendedToken = "<intended>";
const char* const kUnintendedToken = "<unintended>";

std::vector<std::string> split_items(const std::string& pattern) {
  std::vector<std::string> items;
  std::istringstream in(pattern);
  std::string item;
  while (in >> item) items.push_back(item);
  return items;
}

bool is_slot_ref(const std::string& item) {
  return item.size() > 2 && item.front() == '<' && item.back() == '>';
}

}  // namespace

const char* intent_name(Intent intent) {
  return intent == Intent::kIntended ? "intended" : "unintended";
}

Intent intent_from_name(const std::string& name) {
  if (name == "intended") return Intent::kIntended;
  if (name == "unintended") return Intent::kUnintended;
  throw FormatError("unknown intent '" + name + "'");
}

void CorpusSpec::validate() const {
  if (n_intended == 0 || n_unintended == 0) {
    throw ArgumentError("corpus spec: utterance counts must be positive");
  }
  if (feature_dim == 0) throw ArgumentError("corpus spec: feature_dim is 0");
  if (!(frame_period_ms > 0.0)) {
    throw ArgumentError("corpus spec: frame_period_ms must be positive");
  }
  if (intended_domains.empty() || unintended_domains.empty()) {
    throw ArgumentError("corpus spec: at least one domain per class");
  }
  if (noise_sigma < 0.0) {
    throw ArgumentError("corpus spec: noise_sigma must be non-negative");
  }
  if (silence_insertion_prob < 0.0 || silence_insertion_prob > 1.0) {
    throw ArgumentError("corpus spec: silence_insertion_prob outside [0,1]");
  }
  auto check_domain = [&](const DomainTemplate& d, bool allow_slots) {
    if (d.templates.empty()) {
      throw ArgumentError("corpus spec: domain '" + d.name +
                          "' has no templates");
    }
    if (d.tempo_min_frames < 1 || d.tempo_min_frames > d.tempo_max_frames) {
      throw ArgumentError("corpus spec: domain '" + d.name +
                          "' has a bad tempo range");
    }
    for (const std::string& t : d.templates) {
      for (const std::string& item : split_items(t)) {
        if (item == "|") continue;
        if (is_slot_ref(item)) {
          if (!allow_slots) {
            throw ArgumentError("corpus spec: slot placeholder " + item +
                                " in unintended domain '" + d.name + "'");
          }
          const std::string name = item.substr(1, item.size() - 2);
          auto it = slots.find(name);
          if (it == slots.end() || it->second.empty()) {
            throw ArgumentError("corpus spec: slot '" + name +
                                "' missing or empty");
          }
        }
      }
    }
  };
  for (const auto& d : intended_domains) check_domain(d, true);
  for (const auto& d : unintended_domains) check_domain(d, false);
}

CorpusSpec default_corpus_spec() {
  CorpusSpec spec;
  spec.slots = {
      {"media_object",
       {{"jazz"}, {"rock"}, {"pop"}, {"the", "news"}, {"this", "song"}}},
      {"media_cmd", {{"pause", "the", "music"}, {"next", "song"}}},
      {"alarm_action", {{"snooze", "alarm"}, {"stop", "the", "timer"}}},
      {"time_label", {{"at", "8:00"}, {"at", "noon"}, {"right", "now"}}},
      {"contact_name", {{"mom"}, {"dad"}, {"sam"}}},
      {"fact_topic", {{"weather"}, {"time"}, {"news"}}},
      {"undo_cmd", {{"stop"}, {"cancel", "that"}, {"undo"}}},
  };
  spec.intended_domains = {
      {"media",
       {"play <media_object>", "play <media_object> | please", "<media_cmd>"},
       4, 8},
      {"alarm",
       {"<alarm_action>", "<alarm_action> <time_label>",
        "set an alarm <time_label>"},
       4, 8},
      {"call", {"call <contact_name>", "call <contact_name> | right now"}, 4,
       8},
      {"facts", {"what is the <fact_topic>", "what time is it"}, 4, 8},
      {"undo", {"<undo_cmd>", "<undo_cmd> | please"}, 4, 8},
  };
  // Paraphrases of the four side-speech prompt families: chatting with
  // another person, remarking on the assistant, reacting to a song, and
  // thinking aloud. The wording deliberately reuses the command vocabulary,
  // and several templates embed complete command phrases, so frame-level
  // content alone cannot separate the classes; the framing words and the
  // tempo are what remain.
  spec.unintended_domains = {
      {"chat",
       {"did you | play the news", "you should | stop the timer now",
        "that was | the right call"},
       6, 12},
      {"remark",
       {"it is the wrong song | again", "the weather is | really nice"}, 6,
       12},
      {"selftalk", {"i love | this song", "this song is | my favorite"}, 6,
       12},
      {"mutter",
       {"maybe i should | set an alarm at noon", "i should call mom | later",
        "wait | what time is it"},
       6, 12},
  };
  return spec;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& wordpieces) {
  Vocabulary v;
  v.tokens_.reserve(wordpieces.size() + 3);
  v.tokens_.push_back(kBlankToken);
  for (std::size_t i = 0; i < wordpieces.size(); ++i) {
    const std::string& w = wordpieces[i];
    if (w == kBlankToken || w == kIntendedToken || w == kUnintendedToken) {
      throw ArgumentError("vocabulary: reserved token '" + w + "' in list");
    }
    if (i > 0 && !(wordpieces[i - 1] < w)) {
      throw ArgumentError("vocabulary: wordpieces not sorted/unique at '" + w +
                          "'");
    }
    v.tokens_.push_back(w);
  }
  v.tokens_.push_back(kIntendedToken);
  v.tokens_.push_back(kUnintendedToken);
  v.blank_id_ = 0;
  v.intended_id_ = static_cast<int>(v.tokens_.size()) - 2;
  v.unintended_id_ = static_cast<int>(v.tokens_.size()) - 1;
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    v.index_[v.tokens_[i]] = static_cast<int>(i);
  }
  return v;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) {
    throw ArgumentError("vocabulary: unknown token '" + token + "'");
  }
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw ArgumentError("vocabulary: id " + std::to_string(id) +
                        " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

Vocabulary build_vocabulary(const CorpusSpec& spec) {
  std::set<std::string> words;
  auto add_domain = [&](const DomainTemplate& d) {
    for (const std::string& t : d.templates) {
      for (const std::string& item : split_items(t)) {
        if (item == "|") continue;
        if (is_slot_ref(item)) {
          const std::string name = item.substr(1, item.size() - 2);
          for (const TokenSeq& seq : spec.slots.at(name)) {
            for (const std::string& tok : seq) words.insert(tok);
          }
        } else {
          words.insert(item);
        }
      }
    }
  };
  for (const auto& d : spec.intended_domains) add_domain(d);
  for (const auto& d : spec.unintended_domains) add_domain(d);
  return Vocabulary::build({words.begin(), words.end()});
}

std::vector<float> token_mean_vector(std::size_t feature_dim, int token_id) {
  Rng rng(mix_seed(kAcousticSeed, static_cast<uint64_t>(token_id)));
  std::vector<double> v(feature_dim);
  double norm_sq = 0.0;
  for (double& x : v) {
    x = rng.next_gaussian();
    norm_sq += x * x;
  }
  const double inv = norm_sq > 0.0 ? 1.0 / std::sqrt(norm_sq) : 0.0;
  std::vector<float> out(feature_dim);
  for (std::size_t i = 0; i < feature_dim; ++i) {
    out[i] = static_cast<float>(v[i] * inv);
  }
  return out;
}

Instantiation instantiate_template(const std::string& pattern,
                                   const SlotTable& slots, Rng* rng) {
  Instantiation inst;
  for (const std::string& item : split_items(pattern)) {
    if (item == "|") {
      const std::size_t gap = inst.tokens.size();
      if (gap == 0 ||
          (!inst.phrase_gaps.empty() && inst.phrase_gaps.back() == gap)) {
        throw ArgumentError("template '" + pattern +
                            "': phrase mark at an empty phrase");
      }
      inst.phrase_gaps.push_back(gap);
      continue;
    }
    if (is_slot_ref(item)) {
      const std::string name = item.substr(1, item.size() - 2);
      auto it = slots.find(name);
      if (it == slots.end() || it->second.empty()) {
        throw ArgumentError("template '" + pattern + "': unknown slot '" +
                            name + "'");
      }
      const auto& entries = it->second;
      const TokenSeq& pick = entries[static_cast<std::size_t>(
          rng->next_int(0, static_cast<int64_t>(entries.size()) - 1))];
      SlotSpan span;
      span.slot_name = name;
      span.start_token = inst.tokens.size();
      inst.tokens.insert(inst.tokens.end(), pick.begin(), pick.end());
      span.end_token = inst.tokens.size();
      inst.slot_spans.push_back(span);
    } else {
      inst.tokens.push_back(item);
    }
  }
  if (inst.tokens.empty()) {
    throw ArgumentError("template '" + pattern + "' expands to no tokens");
  }
  if (!inst.phrase_gaps.empty() &&
      inst.phrase_gaps.back() >= inst.tokens.size()) {
    throw ArgumentError("template '" + pattern +
                        "': trailing phrase mark");
  }
  return inst;
}

RenderResult render_features(const std::vector<int>& transcript,
                             const DomainTemplate& domain,
                             const CorpusSpec& spec,
                             const std::vector<std::size_t>& phrase_gaps,
                             Rng* rng) {
  if (transcript.empty()) {
    throw ArgumentError("render_features: empty transcript");
  }
  RenderResult r;
  const std::size_t dim = spec.feature_dim;

  auto emit_silence = [&](std::size_t frames) {
    const std::size_t start = r.features.size() / dim;
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t d = 0; d < dim; ++d) {
        r.features.push_back(
            static_cast<float>(spec.noise_sigma * rng->next_gaussian()));
      }
    }
    r.silence_segments.emplace_back(start, start + frames);
  };

  emit_silence(static_cast<std::size_t>(
      rng->next_int(kSilenceMinFrames, kSilenceMaxFrames)));
  r.start_of_speech_frame = r.features.size() / dim;

  for (std::size_t k = 0; k < transcript.size(); ++k) {
    if (k > 0 &&
        std::find(phrase_gaps.begin(), phrase_gaps.end(), k) !=
            phrase_gaps.end() &&
        rng->next_real01() < spec.silence_insertion_prob) {
      emit_silence(static_cast<std::size_t>(
          rng->next_int(kSilenceMinFrames, kSilenceMaxFrames)));
    }
    const std::vector<float> mean = token_mean_vector(dim, transcript[k]);
    const std::size_t duration = static_cast<std::size_t>(
        rng->next_int(domain.tempo_min_frames, domain.tempo_max_frames));
    const std::size_t start = r.features.size() / dim;
    for (std::size_t f = 0; f < duration; ++f) {
      for (std::size_t d = 0; d < dim; ++d) {
        r.features.push_back(static_cast<float>(
            mean[d] + spec.noise_sigma * rng->next_gaussian()));
      }
    }
    r.token_alignment.emplace_back(start, start + duration);
  }

  emit_silence(static_cast<std::size_t>(
      rng->next_int(kSilenceMinFrames, kSilenceMaxFrames)));
  return r;
}

std::pair<Vocabulary, std::vector<Utterance>> generate_corpus(
    const CorpusSpec& spec) {
  spec.validate();
  const Vocabulary vocab = build_vocabulary(spec);
  std::vector<Utterance> utts;
  const std::size_t total = spec.n_intended + spec.n_unintended;
  utts.reserve(total);
  for (std::size_t index = 0; index < total; ++index) {
    Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(index)));
    const bool intended = index < spec.n_intended;
    const auto& domains =
        intended ? spec.intended_domains : spec.unintended_domains;
    const DomainTemplate& domain = domains[static_cast<std::size_t>(
        rng.next_int(0, static_cast<int64_t>(domains.size()) - 1))];
    const std::string& pattern =
        domain.templates[static_cast<std::size_t>(rng.next_int(
            0, static_cast<int64_t>(domain.templates.size()) - 1))];
    const Instantiation inst =
        instantiate_template(pattern, spec.slots, &rng);

    Utterance u;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "utt-%06zu", index);
    u.id = idbuf;
    u.domain = domain.name;
    u.intent = intended ? Intent::kIntended : Intent::kUnintended;
    u.feature_dim = spec.feature_dim;
    u.transcript.reserve(inst.tokens.size());
    for (const std::string& tok : inst.tokens) {
      u.transcript.push_back(vocab.id_of(tok));
    }
    u.slot_spans = inst.slot_spans;

    RenderResult r =
        render_features(u.transcript, domain, spec, inst.phrase_gaps, &rng);
    u.features = std::move(r.features);
    u.silence_segments = std::move(r.silence_segments);
    u.start_of_speech_frame = r.start_of_speech_frame;
    u.token_alignment = std::move(r.token_alignment);
    utts.push_back(std::move(u));
  }
  return {vocab, utts};
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

void write_bytes(std::ofstream* out, const void* data, std::size_t n,
                 const std::string& path) {
  out->write(static_cast<const char*>(data),
             static_cast<std::streamsize>(n));
  if (!*out) throw IoError("short write to " + path);
}

void write_u32(std::ofstream* out, uint32_t v, const std::string& path) {
  write_bytes(out, &v, sizeof(v), path);
}

json spans_to_json(const std::vector<SlotSpan>& spans) {
  json arr = json::array();
  for (const SlotSpan& s : spans) {
    arr.push_back(
        {{"slot", s.slot_name}, {"start", s.start_token}, {"end", s.end_token}});
  }
  return arr;
}

json pairs_to_json(
    const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  json arr = json::array();
  for (const auto& [a, b] : pairs) arr.push_back({a, b});
  return arr;
}

std::vector<std::pair<std::size_t, std::size_t>> pairs_from_json(
    const json& arr, const std::string& where) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const json& p : arr) {
    if (!p.is_array() || p.size() != 2) {
      throw FormatError(where + ": expected [start, end] pairs");
    }
    out.emplace_back(p[0].get<std::size_t>(), p[1].get<std::size_t>());
  }
  return out;
}

}  // namespace

std::string write_corpus(const std::string& dir, const Vocabulary& vocab,
                         const std::vector<Utterance>& utterances) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "features", ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  const std::string vocab_path = (fs::path(dir) / "vocab.json").string();
  {
    std::ofstream out(vocab_path);
    if (!out) throw IoError("cannot open " + vocab_path);
    out << json(vocab.tokens()).dump(2) << "\n";
    if (!out) throw IoError("short write to " + vocab_path);
  }

  const std::string manifest_path =
      (fs::path(dir) / "manifest.jsonl").string();
  std::ofstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot open " + manifest_path);

  for (const Utterance& u : utterances) {
    const std::string feature_rel = "features/" + u.id + ".iqf";
    const std::string feature_path = (fs::path(dir) / feature_rel).string();
    {
      std::ofstream out(feature_path, std::ios::binary);
      if (!out) throw IoError("cannot open " + feature_path);
      write_bytes(&out, kFeatureMagic, sizeof(kFeatureMagic), feature_path);
      write_u32(&out, static_cast<uint32_t>(u.frame_count()), feature_path);
      write_u32(&out, static_cast<uint32_t>(u.feature_dim), feature_path);
      if (!u.features.empty()) {
        write_bytes(&out, u.features.data(),
                    u.features.size() * sizeof(float), feature_path);
      }
    }

    json rec;
    rec["id"] = u.id;
    rec["domain"] = u.domain;
    rec["intent"] = intent_name(u.intent);
    json transcript = json::array();
    for (int id : u.transcript) transcript.push_back(vocab.token(id));
    rec["transcript"] = transcript;
    rec["silence_segments"] = pairs_to_json(u.silence_segments);
    rec["start_of_speech_frame"] = u.start_of_speech_frame;
    rec["token_alignment"] = pairs_to_json(u.token_alignment);
    rec["slot_spans"] = spans_to_json(u.slot_spans);
    rec["augmented_targets"] = u.augmented_targets;
    rec["feature_file"] = feature_rel;
    manifest << rec.dump() << "\n";
    if (!manifest) throw IoError("short write to " + manifest_path);
  }
  return manifest_path;
}

std::pair<Vocabulary, std::vector<Utterance>> read_corpus(
    const std::string& dir) {
  const std::string vocab_path = (fs::path(dir) / "vocab.json").string();
  std::ifstream vin(vocab_path);
  if (!vin) throw IoError("cannot open " + vocab_path);
  json vocab_json;
  try {
    vin >> vocab_json;
  } catch (const json::exception& e) {
    throw FormatError(vocab_path + ": " + e.what());
  }
  if (!vocab_json.is_array() || vocab_json.size() < 3) {
    throw FormatError(vocab_path + ": expected a token array");
  }
  std::vector<std::string> tokens =
      vocab_json.get<std::vector<std::string>>();
  if (tokens.front() != kBlankToken ||
      tokens[tokens.size() - 2] != kIntendedToken ||
      tokens.back() != kUnintendedToken) {
    throw FormatError(vocab_path + ": reserved tokens not in canonical slots");
  }
  Vocabulary vocab = Vocabulary::build(
      {tokens.begin() + 1, tokens.end() - 2});

  const std::string manifest_path =
      (fs::path(dir) / "manifest.jsonl").string();
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot open " + manifest_path);

  std::vector<Utterance> utts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
    Utterance u;
    try {
      u.id = rec.at("id").get<std::string>();
      u.domain = rec.at("domain").get<std::string>();
      const std::string intent_name = rec.at("intent").get<std::string>();
      try {
        u.intent = intent_from_name(intent_name);
      } catch (const FormatError&) {
        throw FormatError(where + " (" + u.id + "): unknown intent '" +
                          intent_name + "'");
      }
      for (const json& tok : rec.at("transcript")) {
        u.transcript.push_back(vocab.id_of(tok.get<std::string>()));
      }
      u.silence_segments =
          pairs_from_json(rec.at("silence_segments"), where);
      u.start_of_speech_frame = rec.at("start_of_speech_frame").get<std::size_t>();
      u.token_alignment = pairs_from_json(rec.at("token_alignment"), where);
      for (const json& s : rec.at("slot_spans")) {
        SlotSpan span;
        span.slot_name = s.at("slot").get<std::string>();
        span.start_token = s.at("start").get<std::size_t>();
        span.end_token = s.at("end").get<std::size_t>();
        u.slot_spans.push_back(span);
      }
      u.augmented_targets =
          rec.at("augmented_targets").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw FormatError(where + " (" + u.id + "): " + e.what());
    } catch (const ArgumentError& e) {
      throw FormatError(where + " (" + u.id + "): " + e.what());
    }

    const std::string feature_rel = rec.at("feature_file").get<std::string>();
    const std::string feature_path = (fs::path(dir) / feature_rel).string();
    std::ifstream fin(feature_path, std::ios::binary);
    if (!fin) throw IoError("cannot open " + feature_path);
    char magic[4];
    fin.read(magic, 4);
    if (!fin || std::memcmp(magic, kFeatureMagic, 4) != 0) {
      throw FormatError(feature_path + ": bad magic");
    }
    uint32_t frames = 0, dim = 0;
    fin.read(reinterpret_cast<char*>(&frames), 4);
    fin.read(reinterpret_cast<char*>(&dim), 4);
    if (!fin) throw FormatError(feature_path + ": truncated header");
    u.feature_dim = dim;
    u.features.resize(static_cast<std::size_t>(frames) * dim);
    if (!u.features.empty()) {
      fin.read(reinterpret_cast<char*>(u.features.data()),
               static_cast<std::streamsize>(u.features.size() * sizeof(float)));
      if (!fin || fin.gcount() !=
                      static_cast<std::streamsize>(u.features.size() *
                                                   sizeof(float))) {
        throw FormatError(feature_path + ": truncated frame data");
      }
    }
    if (fin.peek() != std::ifstream::traits_type::eof()) {
      throw FormatError(feature_path + ": trailing bytes");
    }
    utts.push_back(std::move(u));
  }
  return {vocab, utts};
}

}  // namespace iqstream
