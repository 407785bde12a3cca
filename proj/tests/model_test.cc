// tests/model_test.cc

// Copyright 2026  The postasr Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "postasr/align.h"
#include "postasr/corpus.h"
#include "postasr/model.h"
#include "postasr/rng.h"

using namespace postasr;

namespace {

ModelConfig TinyConfig() {
  ModelConfig cfg;
  cfg.vocab_size = 11;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.n_heads = 2;
  cfg.n_blocks_length = 1;
  cfg.n_blocks_decoder = 1;
  cfg.d_am = 4;
  cfg.l_max = 2;
  cfg.dropout_rate = 0.0;
  cfg.seed = 3;
  return cfg;
}

Sample TinySample(const ModelConfig& cfg, uint64_t seed, int len = 6) {
  const FeatureSimulator sim(cfg.vocab_size, cfg.d_am);
  const TokenSeq ref =
      GenerateReference(len, len, cfg.vocab_size, seed);
  NoiseConfig noise;
  noise.p_sub = 0.2;
  noise.p_ins = 0.1;
  noise.p_del = 0.1;
  noise.seed = seed + 1;
  return Corrupt(ref, noise, sim, "tiny-" + std::to_string(seed));
}

// Random but shape-consistent outputs/targets for loss-level tests.
struct LossFixture {
  std::vector<ForwardOutputs> outputs;
  std::vector<TrainingTargets> targets_store;
  std::vector<const TrainingTargets*> targets;
  std::vector<Mat> teacher;
};

LossFixture MakeLossFixture(const ModelConfig& cfg, Rng* rng, int n_utts = 3,
                            int t_hyp = 5, int t_adj = 6) {
  LossFixture f;
  for (int u = 0; u < n_utts; ++u) {
    ForwardOutputs o;
    o.length_logits = Mat::NullaryExpr(t_hyp, cfg.l_max + 1,
                                       [&] { return rng->Normal(); });
    o.conf_logits = Mat::NullaryExpr(t_adj, 2, [&] { return rng->Normal(); });
    o.corr_logits =
        Mat::NullaryExpr(t_adj, cfg.vocab_size, [&] { return rng->Normal(); });
    o.decoder_states =
        Mat::NullaryExpr(t_adj, cfg.d_model, [&] { return rng->Normal(); });
    TrainingTargets t;
    for (int i = 0; i < t_hyp; ++i)
      t.length_targets.push_back(rng->UniformInt(cfg.l_max + 1));
    for (int i = 0; i < t_adj; ++i) {
      t.adjusted_hyp.ids.push_back(rng->UniformInt(cfg.vocab_size));
      t.correction_targets.push_back(rng->UniformInt(cfg.vocab_size));
      t.confidence_labels.push_back(rng->UniformInt(2));
    }
    f.teacher.push_back(
        Mat::NullaryExpr(t_adj, cfg.d_model, [&] { return rng->Normal(); }));
    f.outputs.push_back(std::move(o));
    f.targets_store.push_back(std::move(t));
  }
  for (const auto& t : f.targets_store) f.targets.push_back(&t);
  return f;
}

}  // namespace

TEST_CASE("fusion with all feature flags off is embedding plus positions") {
  ModelConfig cfg = TinyConfig();
  cfg.use_features = {false, false, false};
  const Parameters p = InitParameters(cfg);
  const Sample s = TinySample(cfg, 11);

  const Mat fused = FuseFeatures(s, p, cfg);
  const Mat pos = PositionalEncoding(s.hyp.size(), cfg.d_model);
  for (int i = 0; i < s.hyp.size(); ++i)
    for (int k = 0; k < cfg.d_model; ++k)
      CHECK(fused(i, k) == doctest::Approx(p.embedding(s.hyp.ids[i], k) +
                                           pos(i, k)).epsilon(1e-15));
}

TEST_CASE("zero acoustic vectors contribute only the projection bias") {
  ModelConfig cfg = TinyConfig();
  cfg.use_features = {true, false, false};
  Parameters p = InitParameters(cfg);
  p.am_b = Mat::Constant(1, cfg.d_model, 0.25);
  Sample s = TinySample(cfg, 13);
  for (auto& v : s.acoustic) std::fill(v.begin(), v.end(), 0.0);

  const Mat fused = FuseFeatures(s, p, cfg);
  const Mat pos = PositionalEncoding(s.hyp.size(), cfg.d_model);
  for (int i = 0; i < s.hyp.size(); ++i)
    for (int k = 0; k < cfg.d_model; ++k)
      CHECK(fused(i, k) == doctest::Approx(p.embedding(s.hyp.ids[i], k) +
                                           0.25 + pos(i, k)).epsilon(1e-12));
}

TEST_CASE("word_prob values matter iff the flag is on") {
  ModelConfig on = TinyConfig();
  on.use_features = {false, true, false};
  ModelConfig off = TinyConfig();
  off.use_features = {false, false, false};

  const Sample s = TinySample(on, 17);
  Sample perturbed = s;
  for (double& wp : perturbed.word_prob) wp = std::min(1.0, wp + 0.1);

  const Parameters p_on = InitParameters(on);
  CHECK(FuseFeatures(s, p_on, on) != FuseFeatures(perturbed, p_on, on));

  const Parameters p_off = InitParameters(off);
  CHECK(FuseFeatures(s, p_off, off) == FuseFeatures(perturbed, p_off, off));
}

TEST_CASE("choose_lengths takes the argmax with ties toward smaller") {
  Mat logits(3, 3);
  logits << 0.0, 5.0, 1.0,   // argmax 1
            2.0, 2.0, 0.0,   // tie between 0 and 1 -> 0
            0.0, 3.0, 3.0;   // tie between 1 and 2 -> 1
  CHECK(ChooseLengths(logits) == std::vector<int>{1, 0, 1});
}

TEST_CASE("adjust duplicates and drops tokens with their features") {
  const ModelConfig cfg = TinyConfig();
  Sample s;
  s.hyp.ids = {0, 1, 2, 3, 4};
  s.word_prob = {0.1, 0.2, 0.3, 0.4, 0.5};
  s.duration = {1, 2, 3, 4, 5};
  s.acoustic = {{0}, {1}, {2}, {3}, {4}};
  s.ovlp_prob = {0.0, 0.1, 0.2, 0.3, 0.4};

  const Sample adj = AdjustSample(s, {1, 1, 0, 1, 4});
  CHECK(adj.hyp.ids == std::vector<TokenId>{0, 1, 3, 4, 4, 4, 4});
  CHECK(adj.word_prob == std::vector<double>{0.1, 0.2, 0.4, 0.5, 0.5, 0.5, 0.5});
  CHECK(adj.duration == std::vector<int>{1, 2, 4, 5, 5, 5, 5});
  CHECK(adj.ovlp_prob.size() == 7);

  const Sample single = AdjustSample(s, {0, 0, 0, 0, 3});
  CHECK(single.hyp.ids == std::vector<TokenId>{4, 4, 4});

  const Sample empty = AdjustSample(s, {0, 0, 0, 0, 0});
  CHECK(empty.hyp.empty());
  CHECK(empty.word_prob.empty());
}

TEST_CASE("decode handles empty and single-token inputs") {
  const ModelConfig cfg = TinyConfig();
  const Parameters p = InitParameters(cfg);

  const DecodeOutputs empty = Decode(Mat(0, cfg.d_model), p, cfg);
  CHECK(empty.conf_logits.rows() == 0);
  CHECK(empty.corr_logits.rows() == 0);
  CHECK(empty.decoder_states.rows() == 0);

  const DecodeOutputs one = Decode(Mat::Random(1, cfg.d_model), p, cfg);
  CHECK(one.conf_logits.rows() == 1);
  CHECK(one.conf_logits.cols() == 2);
  CHECK(one.corr_logits.rows() == 1);
  CHECK(one.corr_logits.cols() == cfg.vocab_size);
}

TEST_CASE("decode without positions is permutation equivariant") {
  const ModelConfig cfg = TinyConfig();
  const Parameters p = InitParameters(cfg);
  const Sample s = TinySample(cfg, 23);

  const Mat fused = FuseFeatures(s, p, cfg, /*add_positions=*/false);
  REQUIRE(fused.rows() >= 3);
  Mat swapped = fused;
  swapped.row(1) = fused.row(2);
  swapped.row(2) = fused.row(1);

  const DecodeOutputs a = Decode(fused, p, cfg);
  const DecodeOutputs b = Decode(swapped, p, cfg);
  CHECK((a.corr_logits.row(1) - b.corr_logits.row(2)).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((a.corr_logits.row(2) - b.corr_logits.row(1)).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((a.corr_logits.row(0) - b.corr_logits.row(0)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("confidence scores are a stable binary softmax") {
  Mat logits(3, 2);
  logits << 0.0, 0.0,
            -10.0, 10.0,
            300.0, -300.0;
  const auto scores = ConfidenceScores(logits);
  CHECK(scores[0] == 0.5);
  CHECK(scores[1] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(scores[2] > 0.0);
  for (double s : scores) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("evaluation-mode forward is a pure function") {
  const ModelConfig cfg = TinyConfig();
  const Parameters p = InitParameters(cfg);
  const Sample s = TinySample(cfg, 31);
  const TrainingTargets t = DeriveTargets(s.hyp, s.ref, cfg.l_max);

  const auto a = TrainForward({&s}, {&t}, p, cfg, false, nullptr, nullptr);
  const auto b = TrainForward({&s}, {&t}, p, cfg, false, nullptr, nullptr);
  CHECK(a[0].length_logits == b[0].length_logits);
  CHECK(a[0].conf_logits == b[0].conf_logits);
  CHECK(a[0].corr_logits == b[0].corr_logits);
  CHECK(a[0].decoder_states == b[0].decoder_states);

  CHECK(a[0].length_logits.rows() == s.hyp.size());
  CHECK(a[0].length_logits.cols() == cfg.l_max + 1);
  CHECK(a[0].conf_logits.rows() == t.adjusted_hyp.size());
  CHECK(a[0].decoder_states.cols() == cfg.d_model);
}

TEST_CASE("loss total is exactly the sum of the five terms") {
  const ModelConfig cfg = TinyConfig();
  Rng rng(41);
  for (int it = 0; it < 20; ++it) {
    LossFixture f = MakeLossFixture(cfg, &rng);
    const LossBreakdown l =
        ComputeLosses(f.outputs, f.targets, &f.teacher, cfg, LossMask{},
                      nullptr, nullptr);
    CHECK(l.l_total == l.l_leng + l.l_esti + l.l_corr + l.l_dist + l.l_conf);
    CHECK(l.l_leng > 0.0);
    CHECK(l.l_dist > 0.0);
  }
}

TEST_CASE("uniform confidence scores reduce the weighted KL to the corrector CE") {
  const ModelConfig cfg = TinyConfig();
  Rng rng(43);
  LossFixture f = MakeLossFixture(cfg, &rng);
  for (auto& o : f.outputs)
    for (int i = 0; i < o.conf_logits.rows(); ++i) {
      o.conf_logits(i, 0) = 0.3;  // identical scores everywhere
      o.conf_logits(i, 1) = 0.9;
    }
  const LossBreakdown l = ComputeLosses(f.outputs, f.targets, &f.teacher, cfg,
                                        LossMask{}, nullptr, nullptr);
  CHECK(l.l_conf == doctest::Approx(l.l_corr).epsilon(1e-12));
}

TEST_CASE("confidence weights average to one") {
  Rng rng(47);
  for (int it = 0; it < 50; ++it) {
    std::vector<std::vector<double>> scores(1 + rng.UniformInt(4));
    int64_t n = 0;
    for (auto& utt : scores) {
      utt.resize(1 + rng.UniformInt(30));
      n += utt.size();
      for (double& c : utt) c = rng.Uniform() * 0.98;
    }
    double mean = 0.0;
    int clamps = 0;
    const auto weights = ConfidenceWeights(scores, &mean, &clamps);
    double wsum = 0.0;
    for (const auto& utt : weights)
      for (double w : utt) wsum += w;
    CHECK(std::abs(wsum / n - 1.0) <= 1e-12);
    CHECK(clamps == 0);
  }
}

TEST_CASE("near-certain batches clamp the weight denominator") {
  const ModelConfig cfg = TinyConfig();
  Rng rng(53);
  LossFixture f = MakeLossFixture(cfg, &rng);
  for (auto& o : f.outputs)
    for (int i = 0; i < o.conf_logits.rows(); ++i) {
      o.conf_logits(i, 0) = -40.0;
      o.conf_logits(i, 1) = 40.0;  // scores round to exactly 1
    }
  LossAux aux;
  const LossBreakdown l = ComputeLosses(f.outputs, f.targets, &f.teacher, cfg,
                                        LossMask{}, nullptr, &aux);
  CHECK(aux.denom_clamp_events == 1);
  CHECK(std::isfinite(l.l_conf));
}

TEST_CASE("a perfect corrector zeroes both corrector losses") {
  const ModelConfig cfg = TinyConfig();
  Rng rng(59);
  LossFixture f = MakeLossFixture(cfg, &rng);
  for (size_t u = 0; u < f.outputs.size(); ++u) {
    auto& o = f.outputs[u];
    o.corr_logits.setZero();
    for (int i = 0; i < o.corr_logits.rows(); ++i)
      o.corr_logits(i, f.targets[u]->correction_targets[i]) = 20.0;
  }
  const LossBreakdown l = ComputeLosses(f.outputs, f.targets, &f.teacher, cfg,
                                        LossMask{}, nullptr, nullptr);
  CHECK(l.l_corr <= 1e-6);
  CHECK(l.l_conf <= 1e-6);
}

TEST_CASE("matching teacher states zero the distillation loss") {
  const ModelConfig cfg = TinyConfig();
  Rng rng(61);
  LossFixture f = MakeLossFixture(cfg, &rng);
  for (size_t u = 0; u < f.outputs.size(); ++u)
    f.teacher[u] = f.outputs[u].decoder_states;
  const LossBreakdown l = ComputeLosses(f.outputs, f.targets, &f.teacher, cfg,
                                        LossMask{}, nullptr, nullptr);
  CHECK(l.l_dist == 0.0);
}

TEST_CASE("teacher states must match the distillation flag") {
  const ModelConfig cfg = TinyConfig();
  Rng rng(67);
  LossFixture f = MakeLossFixture(cfg, &rng);
  LossMask no_dist;
  no_dist.dist = false;
  CHECK_THROWS(ComputeLosses(f.outputs, f.targets, &f.teacher, cfg, no_dist,
                             nullptr, nullptr));
  CHECK_THROWS(ComputeLosses(f.outputs, f.targets, nullptr, cfg, LossMask{},
                             nullptr, nullptr));
}

TEST_CASE("invalid configs are rejected") {
  ModelConfig cfg = TinyConfig();
  cfg.d_model = 9;  // not divisible by n_heads=2
  CHECK_THROWS(cfg.Validate());
  cfg = TinyConfig();
  cfg.l_max = 0;
  CHECK_THROWS(cfg.Validate());
  cfg = TinyConfig();
  cfg.dropout_rate = 1.0;
  CHECK_THROWS(cfg.Validate());
}
