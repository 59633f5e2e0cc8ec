// src/cli.cpp

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

#include "iqstream/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <utility>

#include <CLI11.hpp>

#include "iqstream/eval.hpp"
#include "iqstream/labeling.hpp"
#include "iqstream/logging.hpp"
#include "iqstream/parallel.hpp"
#include "iqstream/transducer.hpp"

namespace fs = std::filesystem;

namespace iqstream {

namespace {

constexpr char kDetectorMagic[4] = {'I', 'Q', 'B', 'D'};
constexpr uint32_t kDetectorVersion = 1;
constexpr uint8_t kKindAcoustic = 0;
constexpr uint8_t kKindAcousticText = 1;

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& in, const std::string& path) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError("truncated detector file " + path);
  return v;
}

uint64_t read_u64(std::istream& in, const std::string& path) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError("truncated detector file " + path);
  return v;
}

void write_slices(std::ostream& out, const ParamView& view) {
  write_u64(out, view.size());
  for (const ParamSlice& slice : view) {
    write_u64(out, slice.size);
    out.write(reinterpret_cast<const char*>(slice.data),
              static_cast<std::streamsize>(slice.size * sizeof(double)));
  }
}

void read_slices(std::istream& in, const std::string& path,
                 const ParamView& view) {
  const uint64_t count = read_u64(in, path);
  if (count != view.size()) {
    throw FormatError("detector file " + path +
                      " does not match its configuration");
  }
  for (const ParamSlice& slice : view) {
    const uint64_t size = read_u64(in, path);
    if (size != slice.size) {
      throw FormatError("detector file " + path +
                        " does not match its configuration");
    }
    in.read(reinterpret_cast<char*>(slice.data),
            static_cast<std::streamsize>(slice.size * sizeof(double)));
    if (!in) throw IoError("truncated detector file " + path);
  }
}

uint8_t open_detector_file(std::ifstream* in, const std::string& path) {
  in->open(path, std::ios::binary);
  if (!*in) throw IoError("cannot open " + path);
  char magic[4] = {};
  in->read(magic, sizeof(magic));
  if (!*in || std::memcmp(magic, kDetectorMagic, sizeof(magic)) != 0) {
    throw FormatError(path + " is not a detector file");
  }
  const uint32_t version = read_u32(*in, path);
  if (version != kDetectorVersion) {
    throw FormatError("unsupported detector file version in " + path);
  }
  uint8_t kind = 0;
  in->read(reinterpret_cast<char*>(&kind), sizeof(kind));
  if (!*in) throw IoError("truncated detector file " + path);
  return kind;
}

void check_trailing(std::istream& in, const std::string& path) {
  in.peek();
  if (!in.eof()) throw FormatError("trailing bytes in detector file " + path);
}

// Strict section reader: every key must be consumed by a get/child call.
class SectionReader {
 public:
  SectionReader(const nlohmann::json& obj, std::string prefix)
      : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) {
      throw FormatError("config section '" + label() +
                        "' must be a JSON object");
    }
  }

  template <typename T>
  void get(const char* key, T* out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      *out = obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("config key '" + dotted(key) + "': " + e.what());
    }
  }

  void get_optional(const char* key, std::optional<double>* out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    const nlohmann::json& v = obj_.at(key);
    if (v.is_null()) {
      out->reset();
    } else if (v.is_number()) {
      *out = v.get<double>();
    } else {
      throw FormatError("config key '" + dotted(key) +
                        "' must be a number or null");
    }
  }

  void get_method(const char* key, OptMethod* out) {
    std::string name;
    get(key, &name);
    if (name.empty()) return;
    if (name == "adam") {
      *out = OptMethod::kAdam;
    } else if (name == "sgd") {
      *out = OptMethod::kSgd;
    } else {
      throw FormatError("config key '" + dotted(key) +
                        "' must be \"adam\" or \"sgd\"");
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (seen_.find(item.key()) == seen_.end()) {
        throw FormatError("unknown config key '" + dotted(item.key()) + "'");
      }
    }
  }

 private:
  std::string label() const { return prefix_.empty() ? "<root>" : prefix_; }
  std::string dotted(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

  const nlohmann::json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

std::string format_ms(const std::optional<double>& v) {
  if (!v.has_value()) return "-";
  std::ostringstream out;
  out << std::fixed << std::setprecision(1) << *v;
  return out.str();
}

std::string format_pct(const std::optional<double>& v) {
  if (!v.has_value()) return "-";
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << 100.0 * *v;
  return out.str();
}

// Resolves model.vocab_size against the corpus vocabulary: the ASR output
// block is blank + wordpieces, the two IQ ids sit above it.
std::size_t resolve_vocab_size(std::size_t configured,
                               const Vocabulary& vocab) {
  const std::size_t derived = static_cast<std::size_t>(vocab.size()) - 2;
  if (configured != 0 && configured != derived) {
    throw ArgumentError("model.vocab_size " + std::to_string(configured) +
                        " does not match the corpus vocabulary (" +
                        std::to_string(derived) + ")");
  }
  return derived;
}

void label_corpus(const Vocabulary& vocab, std::vector<Utterance>* utts) {
  for (Utterance& u : *utts) {
    u.augmented_targets =
        augmented_target_strings(augment_utterance(u, vocab), vocab);
  }
}

int run_gen_corpus(const Command& cmd, const CliConfig& config) {
  CorpusSpec train_spec = config.corpus;
  train_spec.validate();

  auto [vocab, train_utts] = generate_corpus(train_spec);
  label_corpus(vocab, &train_utts);
  const std::string train_dir = (fs::path(cmd.out_dir) / "train").string();
  write_corpus(train_dir, vocab, train_utts);
  log::info("wrote " + std::to_string(train_utts.size()) +
            " training utterances to " + train_dir);

  CorpusSpec eval_spec = train_spec;
  eval_spec.seed = mix_seed(train_spec.seed, kEvalSeedSalt);
  eval_spec.n_intended = config.eval_n_intended;
  eval_spec.n_unintended = config.eval_n_unintended;
  eval_spec.validate();
  auto [eval_vocab, eval_utts] = generate_corpus(eval_spec);
  label_corpus(eval_vocab, &eval_utts);
  const std::string eval_dir = (fs::path(cmd.out_dir) / "eval").string();
  write_corpus(eval_dir, eval_vocab, eval_utts);
  log::info("wrote " + std::to_string(eval_utts.size()) +
            " evaluation utterances to " + eval_dir);
  return 0;
}

int run_train_asr(const Command& cmd, const CliConfig& config) {
  auto [vocab, utts] = read_corpus(cmd.corpus_dir);
  ModelConfig model = config.model;
  model.vocab_size = resolve_vocab_size(model.vocab_size, vocab);
  model.validate();

  const Checkpoint ckpt = train_stage1(utts, model, config.train);
  fs::create_directories(cmd.out_dir);
  const std::string path = (fs::path(cmd.out_dir) / "asr.ckpt").string();
  save_checkpoint(path, ckpt);
  log::info("wrote stage-1 checkpoint to " + path);
  return 0;
}

int run_train_iq(const Command& cmd, const CliConfig& config) {
  auto [vocab, utts] = read_corpus(cmd.corpus_dir);
  const Checkpoint parent = load_checkpoint(cmd.checkpoint_path);
  const Checkpoint ckpt = train_stage2(parent, utts, vocab, config.train);
  fs::create_directories(cmd.out_dir);
  const std::string path = (fs::path(cmd.out_dir) / "iq.ckpt").string();
  save_checkpoint(path, ckpt);
  log::info("wrote stage-2 checkpoint to " + path);
  return 0;
}

int run_train_baseline(const Command& cmd, const CliConfig& config) {
  auto [vocab, utts] = read_corpus(cmd.corpus_dir);
  if (utts.empty()) throw ArgumentError("corpus is empty");
  fs::create_directories(cmd.out_dir);

  if (cmd.detector == "acoustic") {
    AcousticDetectorConfig dcfg = config.acoustic;
    dcfg.feature_dim = utts.front().feature_dim;
    const AcousticDetectorParams params =
        train_acoustic_detector(utts, dcfg, config.baseline_train);
    const std::string path =
        (fs::path(cmd.out_dir) / "acoustic.iqd").string();
    save_acoustic_detector(path, dcfg, params);
    log::info("wrote acoustic detector to " + path);
    return 0;
  }

  const Checkpoint asr = load_checkpoint(cmd.checkpoint_path);
  AcousticTextConfig dcfg = config.acoustic_text;
  dcfg.acoustic.feature_dim = utts.front().feature_dim;
  dcfg.vocab_size = asr.config.vocab_size;
  const AcousticTextParams params =
      train_acoustic_text_detector(utts, asr, dcfg, config.baseline_train);
  const std::string path =
      (fs::path(cmd.out_dir) / "acoustic_text.iqd").string();
  save_acoustic_text(path, dcfg, params);
  log::info("wrote acoustic-text detector to " + path);
  return 0;
}

EvalSummary summarize_model(const std::string& model,
                            const std::vector<ScoredUtterance>& scored,
                            const std::optional<double>& corpus_wer,
                            const CliConfig& config,
                            const std::string& out_dir) {
  const std::vector<DetPoint> det =
      det_curve(scored, default_threshold_grid(scored));
  const std::string det_path =
      (fs::path(out_dir) / ("det_" + model + ".csv")).string();
  {
    std::ofstream out(det_path);
    if (!out) throw IoError("cannot open " + det_path);
    write_det_csv(out, det);
  }

  const EerResult er = eer(det);
  const double latency_theta =
      config.latency_threshold.value_or(er.threshold);
  const LatencyStats lat = latency_percentiles(scored, latency_theta);

  EvalSummary summary;
  summary.model = model;
  summary.eer = er.eer;
  summary.eer_threshold = er.threshold;
  summary.eer_degenerate = er.degenerate;
  summary.p50_ms = lat.p50_ms;
  summary.p90_ms = lat.p90_ms;
  summary.coverage = lat.coverage;
  summary.per_domain_fr = per_domain_fr(scored, er.threshold);
  summary.wer = corpus_wer;

  const std::string summary_path =
      (fs::path(out_dir) / ("summary_" + model + ".json")).string();
  std::ofstream out(summary_path);
  if (!out) throw IoError("cannot open " + summary_path);
  write_summary_json(out, summary);
  return summary;
}

ScoredUtterance scored_from_events(const Utterance& u,
                                   std::vector<DecisionEvent> events,
                                   double frame_period_ms) {
  const double start_ms =
      static_cast<double>(u.start_of_speech_frame) * frame_period_ms;
  return score_stream(u.id, u.domain, u.intent, start_ms, std::move(events));
}

int run_evaluate(const Command& cmd, const CliConfig& config) {
  if (cmd.corpus_dir.empty()) throw UsageError("evaluate requires --corpus");
  if (cmd.out_dir.empty()) throw UsageError("evaluate requires --out");
  if (cmd.e2e_checkpoint.empty() && cmd.acoustic_path.empty() &&
      cmd.acoustic_text_path.empty()) {
    throw UsageError(
        "evaluate requires at least one of --e2e, --acoustic, "
        "--acoustic-text");
  }
  auto [vocab, utts] = read_corpus(cmd.corpus_dir);
  (void)vocab;
  if (utts.empty()) throw ArgumentError("corpus is empty");
  fs::create_directories(cmd.out_dir);
  const double period = config.decision.frame_period_ms;

  Checkpoint e2e;
  const bool have_e2e = !cmd.e2e_checkpoint.empty();
  if (have_e2e) e2e = load_checkpoint(cmd.e2e_checkpoint);

  std::vector<EvalSummary> summaries;

  if (!cmd.acoustic_path.empty()) {
    const auto [dcfg, params] = load_acoustic_detector(cmd.acoustic_path);
    (void)dcfg;
    std::vector<ScoredUtterance> scored(utts.size());
    parallel_for(utts.size(), [&](std::size_t i) {
      DetectionResult res =
          acoustic_detect(utts[i], params, config.state_machine, period);
      scored[i] =
          scored_from_events(utts[i], std::move(res.events), period);
    });
    summaries.push_back(summarize_model("acoustic", scored, std::nullopt,
                                        config, cmd.out_dir));
  }

  if (!cmd.acoustic_text_path.empty()) {
    Checkpoint asr;
    if (!cmd.asr_checkpoint.empty()) {
      asr = load_checkpoint(cmd.asr_checkpoint);
    } else if (have_e2e) {
      asr = e2e;
    } else {
      throw ArgumentError(
          "acoustic-text evaluation needs --asr or --e2e for the recognizer");
    }
    const auto [dcfg, params] = load_acoustic_text(cmd.acoustic_text_path);
    (void)dcfg;
    std::vector<ScoredUtterance> scored(utts.size());
    parallel_for(utts.size(), [&](std::size_t i) {
      DetectionResult res = acoustic_text_detect(
          utts[i], params, asr, config.decision.intended_threshold,
          config.acoustic_text_stride, period);
      scored[i] =
          scored_from_events(utts[i], std::move(res.events), period);
    });
    summaries.push_back(summarize_model("acoustic_text", scored,
                                        std::nullopt, config, cmd.out_dir));
  }

  if (have_e2e) {
    std::vector<ScoredUtterance> scored(utts.size());
    std::vector<std::size_t> edits(utts.size());
    parallel_for(utts.size(), [&](std::size_t i) {
      DecodeResult res = stream_decode(utts[i], e2e, config.decision);
      edits[i] = edit_distance(res.transcript, utts[i].transcript);
      scored[i] =
          scored_from_events(utts[i], std::move(res.events), period);
    });
    std::size_t total_edits = 0;
    std::size_t total_ref = 0;
    for (std::size_t i = 0; i < utts.size(); ++i) {
      total_edits += edits[i];
      total_ref += utts[i].transcript.size();
    }
    const double corpus_wer =
        static_cast<double>(total_edits) / static_cast<double>(total_ref);
    summaries.push_back(
        summarize_model("e2e", scored, corpus_wer, config, cmd.out_dir));
  }

  nlohmann::json table = nlohmann::json::array();
  for (const EvalSummary& s : summaries) {
    std::ostringstream buf;
    write_summary_json(buf, s);
    table.push_back(nlohmann::json::parse(buf.str()));
  }
  const std::string table_path =
      (fs::path(cmd.out_dir) / "summary.json").string();
  {
    std::ofstream out(table_path);
    if (!out) throw IoError("cannot open " + table_path);
    out << table.dump(2) << '\n';
  }

  std::cout << std::left << std::setw(14) << "model" << std::right
            << std::setw(9) << "eer%" << std::setw(11) << "p50_ms"
            << std::setw(11) << "p90_ms" << std::setw(10) << "coverage"
            << std::setw(9) << "wer%" << '\n';
  for (const EvalSummary& s : summaries) {
    std::cout << std::left << std::setw(14) << s.model << std::right
              << std::setw(9) << format_pct(s.eer) << std::setw(11)
              << format_ms(s.p50_ms) << std::setw(11) << format_ms(s.p90_ms)
              << std::setw(10) << format_pct(s.coverage) << std::setw(9)
              << format_pct(s.wer) << '\n';
  }
  return 0;
}

int run_decode(const Command& cmd, const CliConfig& config) {
  auto [vocab, utts] = read_corpus(cmd.corpus_dir);
  if (utts.empty()) throw ArgumentError("corpus is empty");
  const Checkpoint ckpt = load_checkpoint(cmd.checkpoint_path);

  const Utterance* target = &utts.front();
  if (!cmd.utterance_id.empty()) {
    const auto it =
        std::find_if(utts.begin(), utts.end(), [&](const Utterance& u) {
          return u.id == cmd.utterance_id;
        });
    if (it == utts.end()) {
      throw ArgumentError("utterance id not found: " + cmd.utterance_id);
    }
    target = &*it;
  }

  const DecodeResult result = stream_decode(*target, ckpt, config.decision);
  if (cmd.out_dir.empty()) {
    write_decode_trace(std::cout, target->id, result, vocab);
    return 0;
  }
  fs::create_directories(cmd.out_dir);
  const std::string path =
      (fs::path(cmd.out_dir) / ("decode_" + target->id + ".jsonl")).string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  write_decode_trace(out, target->id, result, vocab);
  log::info("wrote decode trace to " + path);
  return 0;
}

}  // namespace

Command parse_args(const std::vector<std::string>& args) {
  Command cmd;
  CLI::App app{"streaming intended-query detection toolkit"};
  app.name("iqstream");
  app.require_subcommand(1);

  const auto add_common = [&cmd](CLI::App* sub) {
    sub->add_option("--set", cmd.overrides,
                    "override a config field by dotted path (key=value)")
        ->type_name("KEY=VALUE");
    sub->add_option("--jobs", cmd.jobs, "worker thread count")
        ->check(CLI::NonNegativeNumber);
  };

  CLI::App* gen = app.add_subcommand(
      "gen-corpus", "generate the train and eval corpora");
  gen->add_option("--config", cmd.config_path, "JSON config file")
      ->required();
  gen->add_option("--out", cmd.out_dir, "output directory")->required();
  add_common(gen);

  CLI::App* tasr =
      app.add_subcommand("train-asr", "train the stage-1 recognizer");
  tasr->add_option("--config", cmd.config_path, "JSON config file")
      ->required();
  tasr->add_option("--corpus", cmd.corpus_dir, "training corpus directory")
      ->required();
  tasr->add_option("--out", cmd.out_dir, "output directory")->required();
  add_common(tasr);

  CLI::App* tiq = app.add_subcommand(
      "train-iq", "train the stage-2 intended-query joint");
  tiq->add_option("--config", cmd.config_path, "JSON config file")
      ->required();
  tiq->add_option("--corpus", cmd.corpus_dir, "training corpus directory")
      ->required();
  tiq->add_option("--checkpoint", cmd.checkpoint_path,
                  "stage-1 checkpoint")
      ->required();
  tiq->add_option("--out", cmd.out_dir, "output directory")->required();
  add_common(tiq);

  CLI::App* tb =
      app.add_subcommand("train-baseline", "train a baseline detector");
  tb->add_option("--config", cmd.config_path, "JSON config file")
      ->required();
  tb->add_option("--corpus", cmd.corpus_dir, "training corpus directory")
      ->required();
  tb->add_option("--detector", cmd.detector, "detector kind")
      ->required()
      ->check(CLI::IsMember({"acoustic", "acoustic-text"}));
  tb->add_option("--checkpoint", cmd.checkpoint_path,
                 "recognizer checkpoint (acoustic-text only)");
  tb->add_option("--out", cmd.out_dir, "output directory")->required();
  add_common(tb);

  CLI::App* ev = app.add_subcommand(
      "evaluate", "evaluate detectors on an evaluation corpus");
  ev->add_option("--config", cmd.config_path, "JSON config file");
  ev->add_option("--corpus", cmd.corpus_dir, "evaluation corpus directory");
  ev->add_option("--e2e", cmd.e2e_checkpoint, "stage-2 checkpoint");
  ev->add_option("--asr", cmd.asr_checkpoint,
                 "recognizer checkpoint for the acoustic-text detector");
  ev->add_option("--acoustic", cmd.acoustic_path,
                 "acoustic detector file");
  ev->add_option("--acoustic-text", cmd.acoustic_text_path,
                 "acoustic-text detector file");
  ev->add_option("--out", cmd.out_dir, "output directory");
  add_common(ev);

  CLI::App* dec = app.add_subcommand(
      "decode", "decode one utterance and emit its event trace");
  dec->add_option("--config", cmd.config_path, "JSON config file");
  dec->add_option("--corpus", cmd.corpus_dir, "corpus directory")
      ->required();
  dec->add_option("--checkpoint", cmd.checkpoint_path,
                  "stage-2 checkpoint")
      ->required();
  dec->add_option("--utterance", cmd.utterance_id,
                  "utterance id (default: first in the corpus)");
  dec->add_option("--out", cmd.out_dir,
                  "output directory (default: stdout)");
  add_common(dec);

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("iqstream");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    cmd.help_text = subs.empty() ? app.help() : subs.front()->help();
    return cmd;
  } catch (const CLI::CallForAllHelp&) {
    cmd.help_text = app.help("", CLI::AppFormatMode::All);
    return cmd;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  cmd.verb = app.get_subcommands().front()->get_name();
  if (cmd.verb == "train-baseline" && cmd.detector == "acoustic-text" &&
      cmd.checkpoint_path.empty()) {
    throw UsageError(
        "train-baseline --detector acoustic-text requires --checkpoint");
  }
  return cmd;
}

nlohmann::json apply_overrides(nlohmann::json root,
                               const std::vector<std::string>& overrides) {
  if (root.is_null()) root = nlohmann::json::object();
  for (const std::string& entry : overrides) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw UsageError("--set expects key=value, got '" + entry + "'");
    }
    std::string pointer = "/" + entry.substr(0, eq);
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    const std::string raw = entry.substr(eq + 1);
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
      value = raw;
    }
    try {
      root[nlohmann::json::json_pointer(pointer)] = std::move(value);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("--set '" + entry + "': " + e.what());
    }
  }
  return root;
}

CliConfig config_from_json(const nlohmann::json& root) {
  CliConfig config;
  config.corpus = default_corpus_spec();

  SectionReader root_reader(root, "");
  if (const nlohmann::json* s = root_reader.child("corpus")) {
    SectionReader r(*s, "corpus");
    r.get("seed", &config.corpus.seed);
    r.get("n_intended", &config.corpus.n_intended);
    r.get("n_unintended", &config.corpus.n_unintended);
    r.get("eval_n_intended", &config.eval_n_intended);
    r.get("eval_n_unintended", &config.eval_n_unintended);
    r.get("feature_dim", &config.corpus.feature_dim);
    r.get("frame_period_ms", &config.corpus.frame_period_ms);
    r.get("noise_sigma", &config.corpus.noise_sigma);
    r.get("silence_insertion_prob", &config.corpus.silence_insertion_prob);
    r.finish();
  }
  if (const nlohmann::json* s = root_reader.child("model")) {
    SectionReader r(*s, "model");
    r.get("encoder_layers", &config.model.encoder_layers);
    r.get("encoder_width", &config.model.encoder_width);
    r.get("time_reduction_factor", &config.model.time_reduction_factor);
    r.get("time_reduction_after_layer",
          &config.model.time_reduction_after_layer);
    r.get("prediction_context", &config.model.prediction_context);
    r.get("embedding_dim", &config.model.embedding_dim);
    r.get("joint_width", &config.model.joint_width);
    r.get("vocab_size", &config.model.vocab_size);
    if (const nlohmann::json* a = r.child("acoustic")) {
      SectionReader ar(*a, "model.acoustic");
      ar.get("layers", &config.acoustic.layers);
      ar.get("width", &config.acoustic.width);
      ar.finish();
    }
    if (const nlohmann::json* a = r.child("acoustic_text")) {
      SectionReader ar(*a, "model.acoustic_text");
      ar.get("word_embedding_dim", &config.acoustic_text.word_embedding_dim);
      ar.get("conv_window", &config.acoustic_text.conv_window);
      ar.get("conv_filters", &config.acoustic_text.conv_filters);
      ar.get("fc_hidden", &config.acoustic_text.fc_hidden);
      ar.finish();
    }
    r.finish();
  }
  if (const nlohmann::json* s = root_reader.child("train")) {
    SectionReader r(*s, "train");
    r.get("seed", &config.train.seed);
    r.get("batch_size", &config.train.batch_size);
    r.get("epochs_stage1", &config.train.epochs_stage1);
    r.get("epochs_stage2", &config.train.epochs_stage2);
    r.get("baseline_epochs", &config.baseline_train.epochs);
    r.get("fastemit_lambda", &config.train.fastemit_lambda);
    r.get("shuffle", &config.train.shuffle);
    r.get("eval_every", &config.train.eval_every);
    if (const nlohmann::json* o = r.child("optimizer")) {
      SectionReader orr(*o, "train.optimizer");
      orr.get_method("method", &config.train.optimizer.method);
      orr.get("learning_rate", &config.train.optimizer.learning_rate);
      orr.get("beta1", &config.train.optimizer.adam_beta1);
      orr.get("beta2", &config.train.optimizer.adam_beta2);
      orr.get("epsilon", &config.train.optimizer.adam_epsilon);
      orr.get_optional("clip_norm", &config.train.optimizer.clip_norm);
      orr.finish();
    }
    r.finish();
  }
  if (const nlohmann::json* s = root_reader.child("decision")) {
    SectionReader r(*s, "decision");
    r.get("intended_threshold", &config.decision.intended_threshold);
    r.get("beam_size", &config.decision.beam_size);
    r.get("max_symbols_per_step", &config.decision.max_symbols_per_step);
    r.get("renormalize_iq", &config.decision.renormalize_iq);
    r.get("acoustic_text_stride", &config.acoustic_text_stride);
    if (const nlohmann::json* m = r.child("state_machine")) {
      SectionReader mr(*m, "decision.state_machine");
      mr.get("frame_threshold", &config.state_machine.frame_threshold);
      mr.get("k_on", &config.state_machine.k_on);
      mr.finish();
    }
    r.finish();
  }
  if (const nlohmann::json* s = root_reader.child("eval")) {
    SectionReader r(*s, "eval");
    r.get_optional("latency_threshold", &config.latency_threshold);
    r.finish();
  }
  root_reader.finish();

  config.model.feature_dim = config.corpus.feature_dim;
  config.acoustic.feature_dim = config.corpus.feature_dim;
  config.acoustic_text.acoustic = config.acoustic;
  config.acoustic_text.vocab_size = config.model.vocab_size;
  config.decision.frame_period_ms = config.corpus.frame_period_ms;
  config.baseline_train.seed = config.train.seed;
  config.baseline_train.batch_size = config.train.batch_size;
  config.baseline_train.shuffle = config.train.shuffle;
  config.baseline_train.eval_every = config.train.eval_every;
  config.baseline_train.optimizer = config.train.optimizer;
  return config;
}

CliConfig load_cli_config(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
  nlohmann::json root = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open " + config_path);
    try {
      in >> root;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("config " + config_path + ": " + e.what());
    }
  }
  root = apply_overrides(std::move(root), overrides);
  CliConfig config = config_from_json(root);
  config.train.validate();
  config.baseline_train.validate();
  config.decision.validate();
  config.state_machine.validate();
  config.acoustic.validate();
  return config;
}

void save_acoustic_detector(const std::string& path,
                            const AcousticDetectorConfig& config,
                            const AcousticDetectorParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kDetectorMagic, sizeof(kDetectorMagic));
  write_u32(out, kDetectorVersion);
  out.write(reinterpret_cast<const char*>(&kKindAcoustic), 1);
  for (uint64_t v : {config.feature_dim, config.layers, config.width}) {
    write_u64(out, v);
  }
  AcousticDetectorParams copy = params;
  write_slices(out, acoustic_param_slices(&copy));
  if (!out) throw IoError("failed writing " + path);
}

std::pair<AcousticDetectorConfig, AcousticDetectorParams>
load_acoustic_detector(const std::string& path) {
  std::ifstream in;
  if (open_detector_file(&in, path) != kKindAcoustic) {
    throw FormatError(path + " does not hold an acoustic detector");
  }
  AcousticDetectorConfig config;
  config.feature_dim = read_u64(in, path);
  config.layers = read_u64(in, path);
  config.width = read_u64(in, path);
  config.validate();
  AcousticDetectorParams params = init_acoustic_detector(config, 0);
  read_slices(in, path, acoustic_param_slices(&params));
  check_trailing(in, path);
  return {config, std::move(params)};
}

void save_acoustic_text(const std::string& path,
                        const AcousticTextConfig& config,
                        const AcousticTextParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kDetectorMagic, sizeof(kDetectorMagic));
  write_u32(out, kDetectorVersion);
  out.write(reinterpret_cast<const char*>(&kKindAcousticText), 1);
  for (uint64_t v :
       {config.acoustic.feature_dim, config.acoustic.layers,
        config.acoustic.width, config.vocab_size, config.word_embedding_dim,
        config.conv_window, config.conv_filters, config.fc_hidden}) {
    write_u64(out, v);
  }
  AcousticTextParams copy = params;
  write_slices(out, acoustic_text_param_slices(&copy));
  if (!out) throw IoError("failed writing " + path);
}

std::pair<AcousticTextConfig, AcousticTextParams> load_acoustic_text(
    const std::string& path) {
  std::ifstream in;
  if (open_detector_file(&in, path) != kKindAcousticText) {
    throw FormatError(path + " does not hold an acoustic-text detector");
  }
  AcousticTextConfig config;
  config.acoustic.feature_dim = read_u64(in, path);
  config.acoustic.layers = read_u64(in, path);
  config.acoustic.width = read_u64(in, path);
  config.vocab_size = read_u64(in, path);
  config.word_embedding_dim = read_u64(in, path);
  config.conv_window = read_u64(in, path);
  config.conv_filters = read_u64(in, path);
  config.fc_hidden = read_u64(in, path);
  config.validate();
  AcousticTextParams params = init_acoustic_text(config, 0);
  read_slices(in, path, acoustic_text_param_slices(&params));
  check_trailing(in, path);
  return {config, std::move(params)};
}

int run(const Command& cmd) {
  if (!cmd.help_text.empty()) {
    std::cout << cmd.help_text;
    return 0;
  }
  if (cmd.jobs > 0) set_jobs(cmd.jobs);
  const CliConfig config = load_cli_config(cmd.config_path, cmd.overrides);

  if (cmd.verb == "gen-corpus") return run_gen_corpus(cmd, config);
  if (cmd.verb == "train-asr") return run_train_asr(cmd, config);
  if (cmd.verb == "train-iq") return run_train_iq(cmd, config);
  if (cmd.verb == "train-baseline") return run_train_baseline(cmd, config);
  if (cmd.verb == "evaluate") return run_evaluate(cmd, config);
  if (cmd.verb == "decode") return run_decode(cmd, config);
  throw UsageError("unknown verb: " + cmd.verb);
}

int cli_main(int argc, const char* const* argv) {
  try {
    const std::vector<std::string> args(argv + 1, argv + argc);
    const Command cmd = parse_args(args);
    return run(cmd);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace iqstream
