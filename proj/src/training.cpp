// src/training.cpp

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

#include "iqstream/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "iqstream/errors.hpp"
#include "iqstream/labeling.hpp"
#include "iqstream/logging.hpp"
#include "iqstream/parallel.hpp"

namespace iqstream {

static_assert(std::endian::native == std::endian::little,
              "checkpoints are written without byte swapping");

namespace {

constexpr char kCheckpointMagic[4] = {'I', 'Q', 'C', 'K'};
constexpr uint32_t kCheckpointVersion = 1;
constexpr uint64_t kShuffleSalt = 0x73687566666c6521ULL;

void fill_tensor(Rng* rng, double* data, std::size_t n, std::size_t fan_in,
                 double gain = 1.0) {
  fill_uniform(*rng, gain / std::sqrt(static_cast<double>(fan_in)), data, n);
}

void scale_grads(const ParamView& view, double factor) {
  for (const ParamSlice& s : view) {
    for (std::size_t i = 0; i < s.size; ++i) s.data[i] *= factor;
  }
}

ParamView filter_prefix(const ParamView& view, const std::string& prefix) {
  ParamView out;
  for (const ParamSlice& s : view) {
    if (s.name.rfind(prefix, 0) == 0) out.push_back(s);
  }
  return out;
}

AugmentedLabelSequence augmented_from_strings(const Utterance& u,
                                              const Vocabulary& vocab) {
  if (u.augmented_targets.empty()) {
    throw ArgumentError("utterance " + u.id +
                        " carries no augmented targets; regenerate the "
                        "corpus with label augmentation");
  }
  AugmentedLabelSequence aug;
  aug.intent = u.intent;
  for (const std::string& token : u.augmented_targets) {
    const int id = vocab.id_of(token);
    const LabelOrigin origin = vocab.is_iq_token(id)
                                   ? LabelOrigin::kSilence
                                   : LabelOrigin::kWordpiece;
    aug.items.push_back({id, origin});
  }
  return aug;
}

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(n * sizeof(double)));
}
uint32_t read_u32(std::istream& in, const std::string& path) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError(path + ": truncated checkpoint");
  return v;
}
uint64_t read_u64(std::istream& in, const std::string& path) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError(path + ": truncated checkpoint");
  return v;
}

}  // namespace

std::vector<std::size_t> epoch_shuffle_order(std::size_t n, uint64_t seed,
                                             std::size_t epoch, bool shuffle) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!shuffle) return order;
  Rng rng(mix_seed(seed, kShuffleSalt + epoch));
  for (std::size_t i = n; i-- > 1;) {
    const std::size_t j =
        static_cast<std::size_t>(rng.next_int(0, static_cast<int64_t>(i)));
    std::swap(order[i], order[j]);
  }
  return order;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ArgumentError("batch_size must be positive");
  if (fastemit_lambda < 0.0) {
    throw ArgumentError("fastemit_lambda must be non-negative");
  }
  optimizer.validate();
}

TransducerParams init_params(const ModelConfig& config, uint64_t seed) {
  TransducerParams p = make_params(config);
  Rng rng(seed);
  // Tanh-gain weight scaling, unit forget-gate bias, and an amplified
  // encoder block in the joints keep the acoustic signal visible at the
  // joint from the first step; with plain 1/sqrt(fan_in) everywhere the
  // initial encoder contribution is an order of magnitude below the joint
  // bias and training settles into a prediction-network-only optimum.
  constexpr double kLstmGain = 5.0 / 3.0;
  constexpr double kForgetBias = 1.0;
  constexpr double kJointEncGain = 3.0;
  for (LstmParams& l : p.encoder) {
    fill_tensor(&rng, l.w_input.data(), l.w_input.size(), l.w_input.cols(),
                kLstmGain);
    fill_tensor(&rng, l.w_recur.data(), l.w_recur.size(), l.w_recur.cols(),
                kLstmGain);
    fill_tensor(&rng, l.bias.data(), l.bias.size(), l.width());
    const std::size_t width = l.width();
    for (std::size_t i = 0; i < width; ++i) l.bias[width + i] = kForgetBias;
  }
  PredictionParams& pr = p.prediction;
  fill_tensor(&rng, pr.embedding.data(), pr.embedding.size(),
              config.embedding_dim);
  fill_tensor(&rng, pr.w_combine.data(), pr.w_combine.size(),
              pr.w_combine.cols());
  fill_tensor(&rng, pr.b_combine.data(), pr.b_combine.size(),
              pr.w_combine.cols());
  for (JointParams* j : {&p.asr_joint, &p.iq_joint}) {
    fill_tensor(&rng, j->w_enc.data(), j->w_enc.size(), j->w_enc.cols(),
                kJointEncGain);
    fill_tensor(&rng, j->bias.data(), j->bias.size(), j->w_enc.cols());
    fill_tensor(&rng, j->w_out.data(), j->w_out.size(), j->w_out.cols());
    fill_tensor(&rng, j->b_out.data(), j->b_out.size(), j->w_out.cols());
  }
  // Both joints' prediction-path blocks start at zero: the first optimizer
  // steps fit the encoder path alone, and label-history conditioning grows
  // in only after the logits are acoustically grounded.
  return p;
}

namespace {

// Shared two-stage loop: walks epochs and mean-of-batch gradients over
// `loss_fn(index, grads)`, updating only the slices in `pview`/`gview`.
template <typename LossFn>
void run_epochs(std::size_t n_utts, const TrainConfig& tcfg,
                const std::string& stage_tag, const ParamView& pview,
                const ParamView& gview, TransducerGrads* grads,
                std::size_t epochs, LossFn&& loss_fn, std::size_t* step,
                std::vector<double>* history) {
  OptimizerState opt_state;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const std::vector<std::size_t> order =
        epoch_shuffle_order(n_utts, tcfg.seed, epoch, tcfg.shuffle);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n_utts; start += tcfg.batch_size) {
      const std::size_t end = std::min(n_utts, start + tcfg.batch_size);
      grads->zero();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        try {
          batch_loss += loss_fn(order[i], grads);
        } catch (const NumericError& e) {
          throw TrainingError(stage_tag + " diverged at step " +
                              std::to_string(*step + 1) + ": " + e.what());
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      scale_grads(gview, inv);
      ++*step;
      optimizer_step(pview, gview, tcfg.optimizer, *step, &opt_state);
      epoch_loss += batch_loss;
      if (tcfg.eval_every > 0 && *step % tcfg.eval_every == 0) {
        std::ostringstream msg;
        msg << stage_tag << " step " << *step << " batch loss "
            << batch_loss * inv;
        log::info(msg.str());
      }
    }
    history->push_back(epoch_loss / static_cast<double>(n_utts));
  }
}

}  // namespace

Checkpoint train_stage1(const std::vector<Utterance>& corpus,
                        const ModelConfig& model_config,
                        const TrainConfig& train_config) {
  model_config.validate();
  train_config.validate();
  if (corpus.empty()) throw ArgumentError("training corpus is empty");

  Checkpoint ckpt;
  ckpt.config = model_config;
  ckpt.params = init_params(model_config, train_config.seed);
  ckpt.stage = 1;

  TransducerGrads grads(ckpt.params);
  const ParamView pview = param_slices(&ckpt.params);
  const ParamView gview = grad_slices(&grads);
  const auto loss_fn = [&](std::size_t idx, TransducerGrads* g) {
    const Utterance& u = corpus[idx];
    EncodeCache cache;
    const Matrix enc =
        encode(features_matrix(u), ckpt.params, model_config, &cache);
    return rnnt_loss(enc, u.transcript, ckpt.params, model_config,
                     train_config.fastemit_lambda, &cache, g);
  };
  run_epochs(corpus.size(), train_config, "stage1", pview, gview, &grads,
             train_config.epochs_stage1, loss_fn, &ckpt.step,
             &ckpt.train_loss_history);
  return ckpt;
}

Checkpoint train_stage2(const Checkpoint& parent,
                        const std::vector<Utterance>& corpus,
                        const Vocabulary& vocab,
                        const TrainConfig& train_config) {
  if (parent.stage != 1) {
    throw ArgumentError("stage-2 training requires a stage-1 checkpoint");
  }
  parent.config.validate();
  train_config.validate();
  if (corpus.empty()) throw ArgumentError("training corpus is empty");

  Checkpoint ckpt;
  ckpt.config = parent.config;
  ckpt.params = parent.params;
  ckpt.stage = 2;
  init_iq_joint_from_asr(&ckpt.params);

  std::vector<AugmentedLabelSequence> targets(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    targets[i] = augmented_from_strings(corpus[i], vocab);
  }

  // The frozen encoder makes the acoustic encodings constants; compute them
  // once instead of per epoch.
  std::vector<Matrix> encodings(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    encodings[i] =
        encode(features_matrix(corpus[i]), ckpt.params, ckpt.config);
  });

  TransducerGrads grads(ckpt.params);
  const ParamView pview =
      filter_prefix(param_slices(&ckpt.params), "iq_joint");
  const ParamView gview = filter_prefix(grad_slices(&grads), "iq_joint");
  const auto loss_fn = [&](std::size_t idx, TransducerGrads* g) {
    return iq_stage2_loss(encodings[idx], targets[idx], ckpt.params,
                          ckpt.config, train_config.fastemit_lambda, g);
  };
  run_epochs(corpus.size(), train_config, "stage2", pview, gview, &grads,
             train_config.epochs_stage2, loss_fn, &ckpt.step,
             &ckpt.train_loss_history);
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kCheckpointMagic, 4);
  write_u32(out, kCheckpointVersion);
  const ModelConfig& c = ckpt.config;
  for (uint64_t v :
       {c.feature_dim, c.encoder_layers, c.encoder_width,
        c.time_reduction_factor, c.time_reduction_after_layer,
        c.prediction_context, c.embedding_dim, c.joint_width, c.vocab_size}) {
    write_u64(out, v);
  }
  write_u32(out, static_cast<uint32_t>(ckpt.stage));
  write_u64(out, ckpt.step);
  write_u64(out, ckpt.train_loss_history.size());
  write_f64(out, ckpt.train_loss_history.data(),
            ckpt.train_loss_history.size());
  // Safe const_cast: slices are only read here.
  const ParamView view =
      param_slices(const_cast<TransducerParams*>(&ckpt.params));
  for (const ParamSlice& s : view) write_f64(out, s.data, s.size);
  if (!out) throw IoError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError(path + ": bad checkpoint magic");
  }
  const uint32_t version = read_u32(in, path);
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  Checkpoint ckpt;
  ModelConfig& c = ckpt.config;
  for (std::size_t* field :
       {&c.feature_dim, &c.encoder_layers, &c.encoder_width,
        &c.time_reduction_factor, &c.time_reduction_after_layer,
        &c.prediction_context, &c.embedding_dim, &c.joint_width,
        &c.vocab_size}) {
    *field = static_cast<std::size_t>(read_u64(in, path));
  }
  c.validate();
  ckpt.stage = static_cast<int>(read_u32(in, path));
  if (ckpt.stage != 1 && ckpt.stage != 2) {
    throw FormatError(path + ": invalid stage marker");
  }
  ckpt.step = static_cast<std::size_t>(read_u64(in, path));
  const uint64_t history = read_u64(in, path);
  ckpt.train_loss_history.resize(history);
  in.read(reinterpret_cast<char*>(ckpt.train_loss_history.data()),
          static_cast<std::streamsize>(history * sizeof(double)));
  if (!in) throw FormatError(path + ": truncated checkpoint");
  ckpt.params = make_params(c);
  for (const ParamSlice& s : param_slices(&ckpt.params)) {
    in.read(reinterpret_cast<char*>(s.data),
            static_cast<std::streamsize>(s.size * sizeof(double)));
    if (!in) throw FormatError(path + ": truncated checkpoint");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path + ": trailing bytes");
  }
  return ckpt;
}

}  // namespace iqstream
