// tests/gradcheck_test.cc

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
#include <string>

#include "postasr/align.h"
#include "postasr/corpus.h"
#include "postasr/model.h"
#include "postasr/rng.h"

using namespace postasr;

namespace {

ModelConfig GradcheckConfig() {
  ModelConfig cfg;
  cfg.vocab_size = 11;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.n_heads = 2;
  cfg.n_blocks_length = 1;
  cfg.n_blocks_decoder = 1;
  cfg.d_am = 4;
  cfg.l_max = 2;
  cfg.dropout_rate = 0.0;  // finite differences need a smooth forward
  cfg.seed = 5;
  return cfg;
}

struct Fixture {
  std::vector<Sample> samples;
  std::vector<TrainingTargets> targets_store;
  std::vector<const Sample*> samples_p;
  std::vector<const TrainingTargets*> targets;
  std::vector<Mat> teacher;
};

Fixture MakeFixture(const ModelConfig& cfg) {
  Fixture f;
  const FeatureSimulator sim(cfg.vocab_size, cfg.d_am);
  Rng rng(271828);
  for (uint64_t seed : {14ULL, 15ULL}) {
    const TokenSeq ref = GenerateReference(5, 7, cfg.vocab_size, seed);
    NoiseConfig noise;
    noise.p_sub = 0.3;
    noise.p_ins = 0.15;
    noise.p_del = 0.15;
    noise.seed = seed * 11 + 1;
    Sample s = Corrupt(ref, noise, sim, "gc-" + std::to_string(seed));
    REQUIRE(!s.hyp.empty());
    f.samples.push_back(std::move(s));
  }
  for (const Sample& s : f.samples) {
    f.targets_store.push_back(DeriveTargets(s.hyp, s.ref, cfg.l_max));
    const int t_adj = f.targets_store.back().adjusted_hyp.size();
    f.teacher.push_back(
        Mat::NullaryExpr(t_adj, cfg.d_model, [&] { return rng.Normal(); }));
  }
  for (const Sample& s : f.samples) f.samples_p.push_back(&s);
  for (const auto& t : f.targets_store) f.targets.push_back(&t);
  return f;
}

double LossAt(const Fixture& f, const Parameters& p, const ModelConfig& cfg,
              const LossMask& mask,
              const std::vector<std::vector<double>>* frozen_weights) {
  const auto outputs =
      TrainForward(f.samples_p, f.targets, p, cfg, false, nullptr, nullptr);
  return ComputeLosses(outputs, f.targets, mask.dist ? &f.teacher : nullptr,
                       cfg, mask, frozen_weights, nullptr)
      .l_total;
}

// Central finite differences over every parameter entry, compared against
// the analytic gradients at relative error < 1e-3 (64-bit, step 1e-5).  The
// per-token regularization weights are constants of the loss, so they are
// frozen at the base point for both sides of the comparison.
void CheckGradients(const LossMask& mask, const char* label) {
  const ModelConfig cfg = GradcheckConfig();
  const Fixture f = MakeFixture(cfg);
  Parameters p = InitParameters(cfg);

  BatchTrace trace;
  const auto outputs =
      TrainForward(f.samples_p, f.targets, p, cfg, false, nullptr, &trace);
  LossAux aux;
  ComputeLosses(outputs, f.targets, mask.dist ? &f.teacher : nullptr, cfg,
                mask, nullptr, &aux);
  const Parameters grads =
      Backward(trace, outputs, f.targets, mask.dist ? &f.teacher : nullptr, p,
               cfg, mask, aux);
  const std::vector<std::vector<double>>* frozen =
      mask.conf ? &aux.conf_weights : nullptr;

  constexpr double kStep = 1e-5;
  constexpr double kRelTol = 1e-3;
  constexpr double kAbsGuard = 1e-8;

  int checked = 0;
  double worst = 0.0;
  std::string worst_name;

  std::vector<std::pair<std::string, Mat*>> plist;
  p.ForEach([&](const std::string& name, Mat& m) { plist.push_back({name, &m}); });
  std::vector<const Mat*> glist;
  grads.ForEach([&](const std::string&, const Mat& m) { glist.push_back(&m); });
  REQUIRE(plist.size() == glist.size());

  for (size_t b = 0; b < plist.size(); ++b) {
    Mat& m = *plist[b].second;
    const Mat& g = *glist[b];
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) {
        const double saved = m(i, j);
        m(i, j) = saved + kStep;
        const double up = LossAt(f, p, cfg, mask, frozen);
        m(i, j) = saved - kStep;
        const double down = LossAt(f, p, cfg, mask, frozen);
        m(i, j) = saved;
        const double fd = (up - down) / (2.0 * kStep);
        const double an = g(i, j);
        const double err = std::abs(fd - an);
        const double rel = err / std::max({std::abs(fd), std::abs(an), 1e-30});
        if (err > kAbsGuard && rel > worst) {
          worst = rel;
          worst_name = plist[b].first;
        }
        ++checked;
      }
  }
  INFO(label << ": checked " << checked << " parameters, worst rel err "
             << worst << " in " << worst_name);
  CHECK(worst < kRelTol);
}

}  // namespace

TEST_CASE("length loss gradients match finite differences") {
  LossMask m{true, false, false, false, false};
  CheckGradients(m, "leng");
}

TEST_CASE("estimator loss gradients match finite differences") {
  LossMask m{false, true, false, false, false};
  CheckGradients(m, "esti");
}

TEST_CASE("corrector loss gradients match finite differences") {
  LossMask m{false, false, true, false, false};
  CheckGradients(m, "corr");
}

TEST_CASE("distillation loss gradients match finite differences") {
  LossMask m{false, false, false, true, false};
  CheckGradients(m, "dist");
}

TEST_CASE("confidence regularization gradients match finite differences") {
  LossMask m{false, false, false, false, true};
  CheckGradients(m, "conf");
}

TEST_CASE("all five terms together match finite differences") {
  CheckGradients(LossMask{}, "total");
}

TEST_CASE("achieved targets give a vanishing gradient") {
  const ModelConfig cfg = GradcheckConfig();
  const Fixture f = MakeFixture(cfg);
  const Parameters p = InitParameters(cfg);

  BatchTrace trace;
  auto outputs =
      TrainForward(f.samples_p, f.targets, p, cfg, false, nullptr, &trace);

  // Saturate every head at its target and hand the decoder states to the
  // distillation term as their own teacher: all five losses are ~0 and the
  // backward signal must vanish with them.
  std::vector<Mat> teacher;
  for (size_t u = 0; u < outputs.size(); ++u) {
    auto& o = outputs[u];
    const auto& t = *f.targets[u];
    o.length_logits.setZero();
    for (int i = 0; i < o.length_logits.rows(); ++i)
      o.length_logits(i, t.length_targets[i]) = 30.0;
    o.conf_logits.setZero();
    for (int i = 0; i < o.conf_logits.rows(); ++i)
      o.conf_logits(i, t.confidence_labels[i]) = 30.0;
    o.corr_logits.setZero();
    for (int i = 0; i < o.corr_logits.rows(); ++i)
      o.corr_logits(i, t.correction_targets[i]) = 30.0;
    teacher.push_back(o.decoder_states);
  }
  LossAux aux;
  const LossBreakdown loss = ComputeLosses(outputs, f.targets, &teacher, cfg,
                                           LossMask{}, nullptr, &aux);
  CHECK(loss.l_total < 1e-9);

  const Parameters grads = Backward(trace, outputs, f.targets, &teacher, p,
                                    cfg, LossMask{}, aux);
  double norm_sq = 0.0;
  grads.ForEach([&](const std::string&, const Mat& m) {
    norm_sq += m.squaredNorm();
  });
  CHECK(std::sqrt(norm_sq) <= 1e-8);
}

TEST_CASE("duplicating an utterance leaves mean-reduced gradients unchanged") {
  const ModelConfig cfg = GradcheckConfig();
  const Fixture f = MakeFixture(cfg);
  const Parameters p = InitParameters(cfg);

  auto grads_for = [&](const std::vector<const Sample*>& samples,
                       const std::vector<const TrainingTargets*>& targets,
                       const std::vector<Mat>& teacher) {
    BatchTrace trace;
    const auto outputs =
        TrainForward(samples, targets, p, cfg, false, nullptr, &trace);
    LossAux aux;
    ComputeLosses(outputs, targets, &teacher, cfg, LossMask{}, nullptr, &aux);
    return Backward(trace, outputs, targets, &teacher, p, cfg, LossMask{}, aux);
  };

  const std::vector<Mat> teacher_one = {f.teacher[0]};
  const std::vector<Mat> teacher_two = {f.teacher[0], f.teacher[0]};
  const Parameters g1 =
      grads_for({f.samples_p[0]}, {f.targets[0]}, teacher_one);
  const Parameters g2 = grads_for({f.samples_p[0], f.samples_p[0]},
                                  {f.targets[0], f.targets[0]}, teacher_two);

  std::vector<const Mat*> l1, l2;
  g1.ForEach([&](const std::string&, const Mat& m) { l1.push_back(&m); });
  g2.ForEach([&](const std::string&, const Mat& m) { l2.push_back(&m); });
  REQUIRE(l1.size() == l2.size());
  for (size_t i = 0; i < l1.size(); ++i)
    CHECK((*l1[i] - *l2[i]).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("non-finite gradients raise an error naming the parameter block") {
  const ModelConfig cfg = GradcheckConfig();
  const Fixture f = MakeFixture(cfg);
  const Parameters p = InitParameters(cfg);

  BatchTrace trace;
  auto outputs =
      TrainForward(f.samples_p, f.targets, p, cfg, false, nullptr, &trace);
  outputs[0].corr_logits(0, 0) = std::numeric_limits<double>::infinity();
  LossAux aux;
  aux.n_length_tokens = 1;
  aux.n_adjusted_tokens = 1;
  aux.conf_weights.assign(outputs.size(), {});
  for (size_t u = 0; u < outputs.size(); ++u)
    aux.conf_weights[u].assign(outputs[u].conf_logits.rows(), 1.0);
  CHECK_THROWS_WITH_AS(
      Backward(trace, outputs, f.targets, &f.teacher, p, cfg, LossMask{}, aux),
      doctest::Contains("non-finite gradient"), std::runtime_error);
}
