// tests/test_transducer.cpp

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
#include <vector>

#include "iqstream/errors.hpp"
#include "iqstream/transducer.hpp"
#include "support/fd.hpp"

using namespace iqstream;
using iqstream::testsupport::central_difference;
using iqstream::testsupport::kFdTolerance;
using iqstream::testsupport::relative_error;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.feature_dim = 3;
  c.encoder_layers = 3;
  c.encoder_width = 4;
  c.time_reduction_factor = 2;
  c.time_reduction_after_layer = 1;
  c.prediction_context = 2;
  c.embedding_dim = 3;
  c.joint_width = 5;
  c.vocab_size = 4;
  return c;
}

TransducerParams random_params(const ModelConfig& config, uint64_t seed,
                               double radius = 0.4) {
  TransducerParams p = make_params(config);
  Rng rng(seed);
  for (const ParamSlice& s : param_slices(&p)) {
    fill_uniform(rng, radius, s.data, s.size);
  }
  return p;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, uint64_t seed,
                     double radius = 1.0) {
  Matrix m(rows, cols);
  Rng rng(seed);
  fill_uniform(rng, radius, m.data(), m.size());
  return m;
}

// Log-softmax recomputed in extended precision, independent of the library's
// own implementation.
Vec ld_log_softmax(const Vec& logits) {
  long double mx = logits[0];
  for (double v : logits) mx = std::max<long double>(mx, v);
  long double sum = 0.0L;
  for (double v : logits) sum += expl(static_cast<long double>(v) - mx);
  const long double lse = mx + logl(sum);
  Vec out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = static_cast<double>(static_cast<long double>(logits[i]) - lse);
  }
  return out;
}

// Brute-force transducer likelihood: every monotonic lattice path is listed
// as a permutation of blank and emit moves and its probability accumulated
// in extended precision.
double enumerated_loss(const Matrix& enc, const std::vector<int>& emit_ids,
                       const std::vector<Vec>& preds,
                       const JointParams& joint) {
  const std::size_t t_steps = enc.rows();
  const std::size_t u_count = emit_ids.size();
  std::vector<std::vector<Vec>> lp(t_steps,
                                   std::vector<Vec>(u_count + 1));
  for (std::size_t t = 0; t < t_steps; ++t) {
    Vec enc_row(enc.row(t), enc.row(t) + enc.cols());
    for (std::size_t u = 0; u <= u_count; ++u) {
      lp[t][u] = ld_log_softmax(joint_logits(enc_row, preds[u], joint));
    }
  }
  std::vector<int> moves;
  for (std::size_t i = 0; i + 1 < t_steps; ++i) moves.push_back(0);
  for (std::size_t i = 0; i < u_count; ++i) moves.push_back(1);
  std::sort(moves.begin(), moves.end());
  long double total = 0.0L;
  do {
    long double p = 1.0L;
    std::size_t t = 0, u = 0;
    for (int m : moves) {
      if (m == 0) {
        p *= expl(static_cast<long double>(lp[t][u][0]));
        ++t;
      } else {
        p *= expl(static_cast<long double>(lp[t][u][emit_ids[u]]));
        ++u;
      }
    }
    p *= expl(static_cast<long double>(lp[t_steps - 1][u_count][0]));
    total += p;
  } while (std::next_permutation(moves.begin(), moves.end()));
  return -static_cast<double>(logl(total));
}

std::vector<Vec> asr_pred_states(const std::vector<int>& labels,
                                 const TransducerParams& params,
                                 const ModelConfig& config) {
  std::vector<Vec> preds;
  std::vector<int> history;
  for (std::size_t u = 0; u <= labels.size(); ++u) {
    preds.push_back(predict_context(history, params, config));
    if (u < labels.size()) history.push_back(labels[u]);
  }
  return preds;
}

AugmentedLabelSequence make_augmented(const std::vector<int>& ids,
                                      Intent intent,
                                      const ModelConfig& config) {
  AugmentedLabelSequence aug;
  aug.intent = intent;
  for (int id : ids) {
    const LabelOrigin origin = id >= static_cast<int>(config.vocab_size)
                                   ? LabelOrigin::kSilence
                                   : LabelOrigin::kWordpiece;
    aug.items.push_back({id, origin});
  }
  return aug;
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.time_reduction_after_layer = 3;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = tiny_config();
  c.vocab_size = 1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = tiny_config();
  c.prediction_context = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = tiny_config();
  c.joint_width = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("parameter shapes follow the config") {
  const ModelConfig c = tiny_config();
  const TransducerParams p = make_params(c);
  REQUIRE(p.encoder.size() == 3);
  CHECK(p.encoder[0].w_input.cols() == 3);
  // Reduction runs after the first layer, so the second layer sees
  // concatenated pairs.
  CHECK(p.encoder[1].w_input.cols() == 8);
  CHECK(p.encoder[2].w_input.cols() == 4);
  CHECK(p.prediction.embedding.rows() == 4);
  CHECK(p.prediction.w_combine.cols() == 6);
  CHECK(p.asr_joint.w_out.rows() == 4);
  CHECK(p.iq_joint.w_out.rows() == 6);
  CHECK(p.iq_joint.w_enc.rows() == p.asr_joint.w_enc.rows());
  CHECK(p.iq_joint.w_enc.cols() == p.asr_joint.w_enc.cols());

  const ParamView params_view = param_slices(const_cast<TransducerParams*>(&p));
  TransducerGrads grads(p);
  const ParamView grads_view = grad_slices(&grads);
  REQUIRE(params_view.size() == grads_view.size());
  for (std::size_t i = 0; i < params_view.size(); ++i) {
    CHECK(params_view[i].name == grads_view[i].name);
    CHECK(params_view[i].size == grads_view[i].size);
  }
}

TEST_CASE("iq joint initialization copies the asr joint") {
  const ModelConfig c = tiny_config();
  TransducerParams p = random_params(c, 3);
  init_iq_joint_from_asr(&p);
  CHECK(p.iq_joint.w_enc == p.asr_joint.w_enc);
  CHECK(p.iq_joint.w_pred == p.asr_joint.w_pred);
  CHECK(p.iq_joint.bias == p.asr_joint.bias);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t j = 0; j < c.joint_width; ++j) {
      CHECK(p.iq_joint.w_out.at(r, j) == p.asr_joint.w_out.at(r, j));
    }
    CHECK(p.iq_joint.b_out[r] == p.asr_joint.b_out[r]);
  }
  for (std::size_t r = 4; r < 6; ++r) {
    CHECK(p.iq_joint.b_out[r] == 0.0);
    for (std::size_t j = 0; j < c.joint_width; ++j) {
      CHECK(p.iq_joint.w_out.at(r, j) == 0.0);
    }
  }
}

TEST_CASE("encode shapes and the streaming prefix property") {
  const ModelConfig c = tiny_config();
  const TransducerParams zero = make_params(c);
  const Matrix feat10 = random_matrix(10, 3, 101);

  SUBCASE("ten frames reduce to five steps") {
    const Matrix enc = encode(feat10, zero, c);
    CHECK(enc.rows() == 5);
    CHECK(enc.cols() == 4);
  }
  SUBCASE("odd frame counts round up") {
    const Matrix feat11 = random_matrix(11, 3, 102);
    CHECK(encode(feat11, zero, c).rows() == 6);
    CHECK(encode(random_matrix(1, 3, 103), zero, c).rows() == 1);
  }
  SUBCASE("zero parameters give zero encodings") {
    const Matrix enc = encode(feat10, zero, c);
    for (std::size_t i = 0; i < enc.size(); ++i) CHECK(enc.data()[i] == 0.0);
  }
  SUBCASE("prefix of the input yields a prefix of the encoding") {
    const TransducerParams p = random_params(c, 5);
    const Matrix full = encode(feat10, p, c);
    Matrix first6(6, 3);
    std::copy(feat10.data(), feat10.data() + 18, first6.data());
    const Matrix head = encode(first6, p, c);
    REQUIRE(head.rows() == 3);
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(head.at(t, j) == full.at(t, j));
      }
    }

    const Matrix feat11 = random_matrix(11, 3, 104);
    const Matrix full11 = encode(feat11, p, c);
    Matrix first8(8, 3);
    std::copy(feat11.data(), feat11.data() + 24, first8.data());
    const Matrix head8 = encode(first8, p, c);
    REQUIRE(head8.rows() == 4);
    for (std::size_t t = 0; t < 4; ++t) {
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(head8.at(t, j) == full11.at(t, j));
      }
    }
  }
  SUBCASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(encode(random_matrix(4, 5, 7), zero, c), ShapeError);
  }
}

TEST_CASE("predict_context is N-Markov with the IQ skip rule") {
  const ModelConfig c = tiny_config();
  const TransducerParams p = random_params(c, 11);

  const Vec empty1 = predict_context({}, p, c);
  const Vec empty2 = predict_context({}, p, c);
  CHECK(empty1 == empty2);
  CHECK(empty1.size() == c.embedding_dim);

  // Only the last two labels matter.
  CHECK(predict_context({3, 1, 2}, p, c) == predict_context({1, 1, 2}, p, c));
  CHECK(predict_context({1, 2}, p, c) == predict_context({3, 1, 2}, p, c));

  // IQ ids (vocab_size and vocab_size+1) are transparent.
  const Vec with_iq = predict_context({1, 2, 4, 3}, p, c);
  const Vec plain = predict_context({2, 3}, p, c);
  CHECK(with_iq == plain);
  CHECK(predict_context({1, 5}, p, c) == predict_context({1}, p, c));

  // Shorter histories are padded with the start-of-sequence embedding.
  const Vec one = predict_context({2}, p, c);
  CHECK(one != empty1);

  CHECK_THROWS_AS(predict_context({0}, p, c), ArgumentError);
  CHECK_THROWS_AS(predict_context({6}, p, c), ArgumentError);
  CHECK_THROWS_AS(predict_context({-1}, p, c), ArgumentError);
}

TEST_CASE("joint_logits matches an affine oracle and normalizes") {
  const ModelConfig c = tiny_config();
  const TransducerParams zero = make_params(c);
  const Vec enc0(c.encoder_width, 0.0);
  const Vec pred0(c.embedding_dim, 0.0);

  SUBCASE("zero parameters give a uniform distribution") {
    const Vec logits = joint_logits(enc0, pred0, zero.asr_joint);
    REQUIRE(logits.size() == 4);
    for (double v : logits) CHECK(v == 0.0);
    const Vec lp = log_softmax(logits);
    for (double v : lp) CHECK(v == doctest::Approx(std::log(0.25)));
    CHECK(joint_logits(enc0, pred0, zero.iq_joint).size() == 6);
  }
  SUBCASE("pre-activation additivity against the affine oracle") {
    const TransducerParams p = random_params(c, 13);
    Rng rng(99);
    Vec enc(c.encoder_width), pred(c.embedding_dim);
    fill_uniform(rng, 1.0, enc.data(), enc.size());
    fill_uniform(rng, 1.0, pred.data(), pred.size());
    const Vec got = joint_logits(enc, pred, p.asr_joint);

    Vec pre = affine(enc, p.asr_joint.w_enc, p.asr_joint.bias);
    const Vec pred_part =
        affine(pred, p.asr_joint.w_pred, Vec(c.joint_width, 0.0));
    for (std::size_t j = 0; j < c.joint_width; ++j) {
      pre[j] = std::tanh(pre[j] + pred_part[j]);
    }
    const Vec want = affine(pre, p.asr_joint.w_out, p.asr_joint.b_out);
    REQUIRE(got.size() == want.size());
    for (std::size_t j = 0; j < got.size(); ++j) {
      CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12));
    }
  }
  SUBCASE("distribution sums to one at random nodes") {
    const TransducerParams p = random_params(c, 17);
    for (uint64_t s = 0; s < 5; ++s) {
      Rng rng(200 + s);
      Vec enc(c.encoder_width), pred(c.embedding_dim);
      fill_uniform(rng, 2.0, enc.data(), enc.size());
      fill_uniform(rng, 2.0, pred.data(), pred.size());
      for (const JointParams* j : {&p.asr_joint, &p.iq_joint}) {
        const Vec lp = log_softmax(joint_logits(enc, pred, *j));
        double sum = 0.0;
        for (double v : lp) sum += std::exp(v);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(joint_logits(Vec(3, 0.0), pred0, zero.asr_joint),
                    ShapeError);
  }
}

TEST_CASE("rnnt_loss equals explicit path enumeration") {
  const ModelConfig c = tiny_config();  // |V| = 4 with blank
  ModelConfig c3 = c;
  c3.vocab_size = 3;

  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const TransducerParams p = random_params(c3, seed, 0.6);
    for (std::size_t t_steps = 1; t_steps <= 4; ++t_steps) {
      for (std::size_t u = 0; u <= 2; ++u) {
        const Matrix enc =
            random_matrix(t_steps, c3.encoder_width, 1000 + seed * 10 + u);
        std::vector<int> labels;
        for (std::size_t i = 0; i < u; ++i) {
          labels.push_back(1 + static_cast<int>((seed + i) % 2));
        }
        const double got = rnnt_loss(enc, labels, p, c3, 0.0);
        const double want = enumerated_loss(
            enc, labels, asr_pred_states(labels, p, c3), p.asr_joint);
        CHECK(std::fabs(got - want) <= 1e-6);
      }
    }
  }
}

TEST_CASE("rnnt_loss single-node lattice") {
  const ModelConfig c = tiny_config();
  const TransducerParams p = random_params(c, 21);
  const Matrix enc = random_matrix(1, c.encoder_width, 22);
  Vec enc_row(enc.row(0), enc.row(0) + enc.cols());
  const Vec lp =
      log_softmax(joint_logits(enc_row, predict_context({}, p, c),
                               p.asr_joint));
  const double loss = rnnt_loss(enc, {}, p, c, 0.0);
  CHECK(loss == doctest::Approx(-lp[0]).epsilon(1e-12));
}

TEST_CASE("fastemit leaves the loss value unchanged") {
  const ModelConfig c = tiny_config();
  const TransducerParams p = random_params(c, 23);
  const Matrix enc = random_matrix(5, c.encoder_width, 24);
  const std::vector<int> labels = {1, 3, 2};
  const double base = rnnt_loss(enc, labels, p, c, 0.0);
  for (double lambda : {5e-3, 0.01, 0.05}) {
    CHECK(rnnt_loss(enc, labels, p, c, lambda) == base);
  }
  CHECK_THROWS_AS(rnnt_loss(enc, labels, p, c, -0.1), ArgumentError);
}

TEST_CASE("lattice invariants: alpha and beta agree") {
  const ModelConfig c = tiny_config();
  for (uint64_t seed = 41; seed < 44; ++seed) {
    const TransducerParams p = random_params(c, seed);
    const Matrix enc = random_matrix(6, c.encoder_width, seed + 100);
    const std::vector<int> labels = {2, 1, 3, 3};
    LossLattice lat;
    const double loss = rnnt_loss(enc, labels, p, c, 0.0, nullptr, nullptr,
                                  &lat);
    CHECK(lat.T == 6);
    CHECK(lat.U == 4);
    CHECK(lat.alpha.at(0, 0) == 0.0);
    CHECK(std::fabs(lat.log_prob - lat.beta.at(0, 0)) <= 1e-8);
    CHECK(loss == doctest::Approx(-lat.log_prob));
    // Column U has no label transition.
    for (std::size_t t = 0; t < lat.T; ++t) {
      CHECK(lat.log_emit.at(t, 4) == -std::numeric_limits<double>::infinity());
    }
  }
}

TEST_CASE("rnnt_loss input validation") {
  const ModelConfig c = tiny_config();
  const TransducerParams p = random_params(c, 31);
  const Matrix enc = random_matrix(3, c.encoder_width, 32);
  CHECK_THROWS_AS(rnnt_loss(enc, {0}, p, c, 0.0), ArgumentError);
  CHECK_THROWS_AS(rnnt_loss(enc, {4}, p, c, 0.0), ArgumentError);
  CHECK_THROWS_AS(rnnt_loss(Matrix(0, 4), {}, p, c, 0.0), ArgumentError);
  CHECK_THROWS_AS(rnnt_loss(random_matrix(3, 7, 33), {1}, p, c, 0.0),
                  ShapeError);
}

TEST_CASE("rnnt_loss gradients match finite differences at lambda zero") {
  const ModelConfig c = tiny_config();
  TransducerParams p = random_params(c, 51);
  const Matrix features = random_matrix(7, c.feature_dim, 52);
  const std::vector<int> labels = {1, 3, 2};

  TransducerGrads grads(p);
  grads.zero();
  EncodeCache cache;
  const Matrix enc = encode(features, p, c, &cache);
  rnnt_loss(enc, labels, p, c, 0.0, &cache, &grads);

  const auto eval = [&]() {
    return rnnt_loss(encode(features, p, c), labels, p, c, 0.0);
  };
  const ParamView pview = param_slices(&p);
  TransducerGrads* gptr = &grads;
  const ParamView gview = grad_slices(gptr);
  double worst = 0.0;
  for (std::size_t s = 0; s < pview.size(); ++s) {
    for (std::size_t i = 0; i < pview[s].size; ++i) {
      const double fd = central_difference(eval, pview[s].data + i);
      const double an = gview[s].data[i];
      worst = std::max(worst, relative_error(fd, an));
    }
  }
  CHECK(worst <= kFdTolerance);

  // The ASR loss never touches the IQ joint.
  for (std::size_t s = 0; s < gview.size(); ++s) {
    if (gview[s].name.rfind("iq_joint", 0) == 0) {
      for (std::size_t i = 0; i < gview[s].size; ++i) {
        CHECK(gview[s].data[i] == 0.0);
      }
    }
  }
}

TEST_CASE("gradient accumulation adds across calls") {
  const ModelConfig c = tiny_config();
  TransducerParams p = random_params(c, 61);
  const Matrix features = random_matrix(6, c.feature_dim, 62);
  const std::vector<int> labels = {2, 1};

  EncodeCache cache;
  const Matrix enc = encode(features, p, c, &cache);
  TransducerGrads once(p);
  once.zero();
  rnnt_loss(enc, labels, p, c, 0.0, &cache, &once);
  TransducerGrads twice(p);
  twice.zero();
  rnnt_loss(enc, labels, p, c, 0.0, &cache, &twice);
  rnnt_loss(enc, labels, p, c, 0.0, &cache, &twice);

  const ParamView v1 = grad_slices(&once);
  const ParamView v2 = grad_slices(&twice);
  for (std::size_t s = 0; s < v1.size(); ++s) {
    for (std::size_t i = 0; i < v1[s].size; ++i) {
      CHECK(v2[s].data[i] ==
            doctest::Approx(2.0 * v1[s].data[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("fastemit shifts emission gradients but not blanks' direction") {
  // With lambda > 0 the emission marginals are scaled by (1 + lambda), so
  // the gradient difference from lambda = 0 must be nonzero somewhere in the
  // joint while the loss stays identical (checked elsewhere).
  const ModelConfig c = tiny_config();
  TransducerParams p = random_params(c, 71);
  const Matrix features = random_matrix(8, c.feature_dim, 72);
  const std::vector<int> labels = {1, 2, 3};
  EncodeCache cache;
  const Matrix enc = encode(features, p, c, &cache);

  TransducerGrads g0(p), g1(p);
  g0.zero();
  g1.zero();
  rnnt_loss(enc, labels, p, c, 0.0, &cache, &g0);
  rnnt_loss(enc, labels, p, c, 0.05, &cache, &g1);
  double diff = 0.0;
  const ParamView v0 = grad_slices(&g0);
  const ParamView v1 = grad_slices(&g1);
  for (std::size_t s = 0; s < v0.size(); ++s) {
    for (std::size_t i = 0; i < v0[s].size; ++i) {
      diff = std::max(diff, std::fabs(v0[s].data[i] - v1[s].data[i]));
    }
  }
  CHECK(diff > 0.0);
}

TEST_CASE("stage2 loss reduces to rnnt_loss when IQ rows are disabled") {
  const ModelConfig c = tiny_config();
  TransducerParams p = random_params(c, 81);
  init_iq_joint_from_asr(&p);
  // Zero weights on the extra rows plus a large negative bias make the two
  // IQ outputs numerically impossible, so the distributions coincide.
  p.iq_joint.b_out[4] = -1e4;
  p.iq_joint.b_out[5] = -1e4;

  const Matrix enc = random_matrix(5, c.encoder_width, 82);
  const std::vector<int> labels = {1, 3, 2};
  const AugmentedLabelSequence aug =
      make_augmented(labels, Intent::kIntended, c);
  const double stage2 = iq_stage2_loss(enc, aug, p, c);
  const double stage1 = rnnt_loss(enc, labels, p, c, 0.0);
  CHECK(stage2 == doctest::Approx(stage1).epsilon(1e-12));
}

TEST_CASE("stage2 loss equals enumeration with the skip rule") {
  const ModelConfig c = tiny_config();
  for (uint64_t seed = 91; seed < 94; ++seed) {
    const TransducerParams p = random_params(c, seed);
    const Matrix enc = random_matrix(3, c.encoder_width, seed + 5);
    // One wordpiece followed by one IQ token: expanded U = 2.
    const AugmentedLabelSequence aug =
        make_augmented({2, 4}, Intent::kIntended, c);
    std::vector<int> ids = {2, 4};

    std::vector<Vec> preds;
    std::vector<int> history;
    for (std::size_t u = 0; u <= ids.size(); ++u) {
      preds.push_back(predict_context(history, p, c));
      if (u < ids.size()) history.push_back(ids[u]);
    }
    // The IQ token is skipped, so the state after [2, 4] equals [2].
    CHECK(preds[2] == predict_context({2}, p, c));

    const double got = iq_stage2_loss(enc, aug, p, c);
    const double want = enumerated_loss(enc, ids, preds, p.iq_joint);
    CHECK(std::fabs(got - want) <= 1e-6);
  }
}

TEST_CASE("stage2 gradients stay inside the IQ joint and match FD") {
  const ModelConfig c = tiny_config();
  TransducerParams p = random_params(c, 95);
  const Matrix enc = random_matrix(4, c.encoder_width, 96);
  const AugmentedLabelSequence aug =
      make_augmented({1, 4, 3, 5}, Intent::kUnintended, c);

  TransducerGrads grads(p);
  grads.zero();
  const double loss = iq_stage2_loss(enc, aug, p, c, 0.0, &grads);

  // FastEmit leaves the stage-2 loss value untouched as well.
  CHECK(iq_stage2_loss(enc, aug, p, c, 0.02) == loss);

  const auto eval = [&]() { return iq_stage2_loss(enc, aug, p, c); };
  const ParamView pview = param_slices(&p);
  const ParamView gview = grad_slices(&grads);
  double worst = 0.0;
  bool iq_nonzero = false;
  for (std::size_t s = 0; s < pview.size(); ++s) {
    const bool is_iq = pview[s].name.rfind("iq_joint", 0) == 0;
    for (std::size_t i = 0; i < pview[s].size; ++i) {
      if (is_iq) {
        const double fd = central_difference(eval, pview[s].data + i);
        worst = std::max(worst, relative_error(fd, gview[s].data[i]));
        if (gview[s].data[i] != 0.0) iq_nonzero = true;
      } else {
        // Frozen blocks receive exactly zero gradient.
        CHECK(gview[s].data[i] == 0.0);
      }
    }
  }
  CHECK(worst <= kFdTolerance);
  CHECK(iq_nonzero);
}

TEST_CASE("stage2 rejects blank ids in the augmented sequence") {
  const ModelConfig c = tiny_config();
  const TransducerParams p = random_params(c, 97);
  const Matrix enc = random_matrix(3, c.encoder_width, 98);
  CHECK_THROWS_AS(
      iq_stage2_loss(enc, make_augmented({1, 0}, Intent::kIntended, c), p, c),
      ArgumentError);
  CHECK_THROWS_AS(
      iq_stage2_loss(enc, make_augmented({6}, Intent::kIntended, c), p, c),
      ArgumentError);
  AugmentedLabelSequence empty;
  CHECK_THROWS_AS(iq_stage2_loss(enc, empty, p, c), ArgumentError);
}

TEST_CASE("encode cache mismatch is detected") {
  const ModelConfig c = tiny_config();
  TransducerParams p = random_params(c, 99);
  EncodeCache cache;
  encode(random_matrix(10, c.feature_dim, 100), p, c, &cache);
  const Matrix other = encode(random_matrix(8, c.feature_dim, 101), p, c);
  TransducerGrads grads(p);
  grads.zero();
  CHECK_THROWS_AS(rnnt_loss(other, {1}, p, c, 0.0, &cache, &grads),
                  ShapeError);
}

TEST_CASE("features_matrix casts utterance floats") {
  Utterance u;
  u.feature_dim = 2;
  u.features = {1.5f, -2.25f, 0.0f, 3.0f};
  const Matrix m = features_matrix(u);
  REQUIRE(m.rows() == 2);
  CHECK(m.at(0, 0) == 1.5);
  CHECK(m.at(0, 1) == -2.25);
  CHECK(m.at(1, 1) == 3.0);
}
