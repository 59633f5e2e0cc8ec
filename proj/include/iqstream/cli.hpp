// include/iqstream/cli.hpp

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

// Operator surface: corpus generation, the two training stages, baseline
// training, evaluation, and single-utterance decode tracing.

#ifndef IQSTREAM_CLI_HPP_
#define IQSTREAM_CLI_HPP_

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "iqstream/baselines.hpp"
#include "iqstream/corpus.hpp"
#include "iqstream/decoding.hpp"
#include "iqstream/errors.hpp"
#include "iqstream/training.hpp"

namespace iqstream {

// Bad verbs, flags or flag combinations; mapped to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Command {
  std::string verb;
  std::string config_path;
  std::string corpus_dir;
  std::string out_dir;
  std::string checkpoint_path;       // train-iq / train-baseline / decode
  std::string e2e_checkpoint;        // evaluate
  std::string asr_checkpoint;        // evaluate (acoustic-text recognizer)
  std::string acoustic_path;         // evaluate
  std::string acoustic_text_path;    // evaluate
  std::string detector;              // train-baseline
  std::string utterance_id;          // decode; empty selects the first
  std::vector<std::string> overrides;  // raw key=value pairs from --set
  int jobs = 0;                      // 0 keeps the hardware default
  std::string help_text;             // non-empty when help was requested
};

// Parses the arguments after the program name. Throws UsageError on unknown
// verbs or flags and on invalid flag combinations. A help request returns a
// Command whose help_text is the text to print.
Command parse_args(const std::vector<std::string>& args);

// Everything configurable from the JSON file, one struct per section plus
// the CLI-level knobs that do not belong to a module config.
struct CliConfig {
  CorpusSpec corpus;
  std::size_t eval_n_intended = 500;
  std::size_t eval_n_unintended = 500;
  ModelConfig model;
  AcousticDetectorConfig acoustic;
  AcousticTextConfig acoustic_text;
  TrainConfig train;
  BaselineTrainConfig baseline_train;
  DecisionConfig decision;
  StateMachineConfig state_machine;
  std::size_t acoustic_text_stride = 1;
  // Latency threshold override; absent means evaluate at the EER threshold.
  std::optional<double> latency_threshold;
};

// Applies dotted-path overrides ("decision.beam_size=8") to a config tree.
// Values parse as JSON scalars when possible and as strings otherwise.
// Throws UsageError on entries without '=' or with an empty path.
nlohmann::json apply_overrides(nlohmann::json root,
                               const std::vector<std::string>& overrides);

// Materializes a config tree, starting from defaults. Unknown sections or
// keys throw FormatError. Derived fields (model and detector feature dims,
// decision frame period) are filled from the corpus section, and the
// acoustic-text vocab size from the model section.
CliConfig config_from_json(const nlohmann::json& root);

// File (optional, "" skips) + --set overrides + validation.
CliConfig load_cli_config(const std::string& config_path,
                          const std::vector<std::string>& overrides);

// Versioned binary files for trained baseline detectors.
void save_acoustic_detector(const std::string& path,
                            const AcousticDetectorConfig& config,
                            const AcousticDetectorParams& params);
std::pair<AcousticDetectorConfig, AcousticDetectorParams>
load_acoustic_detector(const std::string& path);
void save_acoustic_text(const std::string& path,
                        const AcousticTextConfig& config,
                        const AcousticTextParams& params);
std::pair<AcousticTextConfig, AcousticTextParams> load_acoustic_text(
    const std::string& path);

// Dispatches a parsed command; returns 0 on success. Module errors
// propagate as exceptions for cli_main to map.
int run(const Command& cmd);

// Full entry point: parse, run, map errors to exit codes (0 success,
// 1 runtime failure, 2 usage error).
int cli_main(int argc, const char* const* argv);

}  // namespace iqstream

#endif  // IQSTREAM_CLI_HPP_
