// include/iqstream/training.hpp

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

#ifndef IQSTREAM_TRAINING_HPP_
#define IQSTREAM_TRAINING_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "iqstream/corpus.hpp"
#include "iqstream/numkernel.hpp"
#include "iqstream/transducer.hpp"

namespace iqstream {

struct TrainConfig {
  uint64_t seed = 42;
  std::size_t batch_size = 8;
  std::size_t epochs_stage1 = 6;
  std::size_t epochs_stage2 = 6;
  OptimizerConfig optimizer;
  double fastemit_lambda = 5e-3;
  bool shuffle = true;
  // Progress is logged every this many optimizer steps.
  std::size_t eval_every = 50;

  void validate() const;
};

struct Checkpoint {
  ModelConfig config;
  TransducerParams params;
  int stage = 1;
  std::size_t step = 0;
  std::vector<double> train_loss_history;  // one mean loss per epoch
};

// Uniform(-r, r) initialization with r = 1/sqrt(fan_in) per tensor. Biases
// use the fan-in of the linear map they belong to; embedding rows use the
// embedding width.
TransducerParams init_params(const ModelConfig& config, uint64_t seed);

// Deterministic per-epoch visit order (Fisher-Yates keyed by seed and epoch).
std::vector<std::size_t> epoch_shuffle_order(std::size_t n, uint64_t seed,
                                             std::size_t epoch, bool shuffle);

// Stage 1: trains encoder, prediction network and ASR joint on the
// wordpiece transcripts.
Checkpoint train_stage1(const std::vector<Utterance>& corpus,
                        const ModelConfig& model_config,
                        const TrainConfig& train_config);

// Stage 2: freezes everything trained in stage 1, seeds the IQ joint from
// the ASR joint and fine-tunes it on the augmented targets stored in the
// corpus. The two extra output rows start at zero.
Checkpoint train_stage2(const Checkpoint& parent,
                        const std::vector<Utterance>& corpus,
                        const Vocabulary& vocab,
                        const TrainConfig& train_config);

// Versioned binary checkpoint file.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace iqstream

#endif  // IQSTREAM_TRAINING_HPP_
