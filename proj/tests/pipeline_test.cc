// tests/pipeline_test.cc

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

#include <set>

#include "postasr/align.h"
#include "postasr/corpus.h"
#include "postasr/metrics.h"
#include "postasr/pipeline.h"
#include "postasr/rng.h"

using namespace postasr;

namespace {

ModelConfig TinyConfig() {
  ModelConfig cfg;
  cfg.vocab_size = 18;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.n_heads = 2;
  cfg.n_blocks_length = 1;
  cfg.n_blocks_decoder = 1;
  cfg.d_am = 8;
  cfg.l_max = 3;
  cfg.dropout_rate = 0.0;
  cfg.seed = 9;
  return cfg;
}

std::vector<Sample> TinySamples(const ModelConfig& cfg, int n) {
  CorpusSpec spec;
  spec.vocab_size = cfg.vocab_size;
  spec.d_am = cfg.d_am;
  spec.len_min = 5;
  spec.len_max = 9;
  spec.seed = 2025;
  const FeatureSimulator sim(spec.vocab_size, spec.d_am);
  return BuildSplit(spec, spec.eval_noise, "pipe", n, sim);
}

// The running example: adjusted "A B D E E E E" with corrector output
// "a b d e f g h", high confidence on A, D and the first E.
constexpr TokenId A = 0, B = 1, D = 3, E = 4;
constexpr TokenId a = 10, b = 11, d = 13, e = 14, f = 15, g = 16, h = 17;

}  // namespace

TEST_CASE("confidence filtering keeps trusted tokens") {
  const TokenSeq adjusted({A, B, D, E, E, E, E});
  const TokenSeq corr_out({a, b, d, e, f, g, h});
  const std::vector<double> conf{0.9, 0.3, 0.8, 0.9, 0.2, 0.1, 0.1};

  const TokenSeq corrected = CorrectWithFiltering(adjusted, conf, corr_out, 0.5);
  CHECK(corrected.ids == std::vector<TokenId>{A, b, D, E, f, g, h});

  CHECK(CorrectWithFiltering(adjusted, conf, corr_out, 0.0).ids == adjusted.ids);
  CHECK(CorrectWithFiltering(adjusted, conf, corr_out, 1.0).ids == corr_out.ids);
}

TEST_CASE("filtering grows monotonically with the threshold") {
  Rng rng(404);
  for (int it = 0; it < 50; ++it) {
    const int n = 1 + rng.UniformInt(12);
    TokenSeq adjusted, corr;
    std::vector<double> conf;
    for (int i = 0; i < n; ++i) {
      adjusted.ids.push_back(rng.UniformInt(10));
      corr.ids.push_back(10 + rng.UniformInt(10));
      conf.push_back(rng.Uniform());
    }
    std::set<int> prev;
    for (double t : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
      const TokenSeq out = CorrectWithFiltering(adjusted, conf, corr, t);
      std::set<int> now;
      for (int i = 0; i < n; ++i)
        if (out.ids[i] != adjusted.ids[i]) now.insert(i);
      for (int i : prev) CHECK(now.count(i) == 1);
      prev = now;
    }
  }
}

TEST_CASE("smoothing is a truncated centered mean") {
  const std::vector<double> id = Smooth({0.3, 0.9, 0.1}, 1);
  CHECK(id == std::vector<double>{0.3, 0.9, 0.1});

  const std::vector<double> flat = Smooth({0.7, 0.7, 0.7, 0.7}, 3);
  for (double v : flat) CHECK(v == doctest::Approx(0.7));

  const std::vector<double> spike = Smooth({0.0, 1.0, 0.0}, 3);
  CHECK(spike[0] == doctest::Approx(0.5));
  CHECK(spike[1] == doctest::Approx(1.0 / 3.0));
  CHECK(spike[2] == doctest::Approx(0.5));

  CHECK_THROWS(Smooth({0.1}, 2));
  CHECK_THROWS(Smooth({0.1}, 0));
}

TEST_CASE("rejection follows the three-way conjunction") {
  // b is rescued by its high corrector probability (and low overlap); g and
  // h fail all three conditions and are removed.
  const std::vector<double> conf{0.9, 0.3, 0.8, 0.9, 0.2, 0.1, 0.1};
  const std::vector<double> ovlp{0.1, 0.2, 0.1, 0.2, 0.6, 0.9, 0.9};
  const std::vector<double> corr_prob{0.8, 0.9, 0.7, 0.8, 0.6, 0.2, 0.3};
  Thresholds th;  // 0.5 everywhere, token level

  const RejectDecision dec = Reject(conf, ovlp, corr_prob, th);
  CHECK(dec.rejected == std::vector<uint8_t>{0, 0, 0, 0, 0, 1, 1});
  CHECK(!dec.utterance_rejected);
}

TEST_CASE("fig-style end-to-end decision flow") {
  const TokenSeq adjusted({A, B, D, E, E, E, E});
  const TokenSeq corr_out({a, b, d, e, f, g, h});
  const std::vector<double> conf{0.9, 0.3, 0.8, 0.9, 0.2, 0.1, 0.1};
  const std::vector<double> ovlp{0.1, 0.2, 0.1, 0.2, 0.6, 0.9, 0.9};
  const std::vector<double> corr_prob{0.8, 0.9, 0.7, 0.8, 0.6, 0.2, 0.3};
  Thresholds th;
  th.smoothing_window = 1;

  const TokenSeq corrected =
      CorrectWithFiltering(adjusted, conf, corr_out, th.t_filter);
  const RejectDecision dec =
      Reject(Smooth(conf, th.smoothing_window), ovlp, corr_prob, th);
  TokenSeq final_seq;
  for (int i = 0; i < corrected.size(); ++i)
    if (!dec.rejected[i]) final_seq.ids.push_back(corrected.ids[i]);
  CHECK(final_seq.ids == std::vector<TokenId>{A, b, D, E, f});
}

TEST_CASE("degenerate overlap threshold rejects nothing") {
  Rng rng(7);
  std::vector<double> conf(20), ovlp(20), cp(20);
  for (int i = 0; i < 20; ++i) {
    conf[i] = rng.Uniform();
    ovlp[i] = rng.Uniform();
    cp[i] = rng.Uniform();
  }
  Thresholds th;
  th.t_ovlp = 1.0;
  const RejectDecision dec = Reject(conf, ovlp, cp, th);
  for (uint8_t r : dec.rejected) CHECK(r == 0);
}

TEST_CASE("flipping any satisfied condition un-rejects a token") {
  Rng rng(17);
  Thresholds th;
  for (int it = 0; it < 200; ++it) {
    const double c = rng.Uniform(), o = rng.Uniform(), p = rng.Uniform();
    const RejectDecision base = Reject({c}, {o}, {p}, th);
    if (!base.rejected[0]) continue;
    CHECK(Reject({0.9}, {o}, {p}, th).rejected[0] == 0);  // confident now
    CHECK(Reject({c}, {0.1}, {p}, th).rejected[0] == 0);  // not overlapped
    CHECK(Reject({c}, {o}, {0.9}, th).rejected[0] == 0);  // corrector sure
  }
}

TEST_CASE("segment level keeps only long enough runs") {
  const std::vector<double> conf{0.1, 0.1, 0.9, 0.1, 0.1, 0.1, 0.9, 0.1};
  const std::vector<double> ovlp(8, 0.9);
  const std::vector<double> cp(8, 0.1);
  Thresholds th;
  th.level = RejectionLevel::kSegment;
  th.segment_min_run = 3;
  const RejectDecision dec = Reject(conf, ovlp, cp, th);
  // Marked runs: [0,1] (len 2, dropped), [3,5] (len 3, kept), [7] (dropped).
  CHECK(dec.rejected == std::vector<uint8_t>{0, 0, 0, 1, 1, 1, 0, 0});
}

TEST_CASE("segment level with min_run 1 equals token level") {
  Rng rng(23);
  for (int it = 0; it < 50; ++it) {
    const int n = 1 + rng.UniformInt(15);
    std::vector<double> conf(n), ovlp(n), cp(n);
    for (int i = 0; i < n; ++i) {
      conf[i] = rng.Uniform();
      ovlp[i] = rng.Uniform();
      cp[i] = rng.Uniform();
    }
    Thresholds token_th;
    Thresholds seg_th;
    seg_th.level = RejectionLevel::kSegment;
    seg_th.segment_min_run = 1;
    CHECK(Reject(conf, ovlp, cp, token_th).rejected ==
          Reject(conf, ovlp, cp, seg_th).rejected);
  }
}

TEST_CASE("sequence level rejects the whole utterance past the fraction") {
  const std::vector<double> conf(6, 0.1);
  const std::vector<double> ovlp(6, 0.9);
  const std::vector<double> cp(6, 0.1);
  Thresholds th;
  th.level = RejectionLevel::kSequence;
  th.sequence_reject_fraction = 0.5;
  const RejectDecision dec = Reject(conf, ovlp, cp, th);
  CHECK(dec.utterance_rejected);
  for (uint8_t r : dec.rejected) CHECK(r == 1);

  // Below the fraction nothing is rejected at sequence level.
  std::vector<double> mixed_conf(6, 0.9);
  mixed_conf[0] = 0.1;
  const RejectDecision keep = Reject(mixed_conf, ovlp, cp, th);
  CHECK(!keep.utterance_rejected);
  for (uint8_t r : keep.rejected) CHECK(r == 0);
}

TEST_CASE("pipeline identity laws") {
  const ModelConfig cfg = TinyConfig();
  const Parameters p = InitParameters(cfg);  // untrained on purpose
  Thresholds degenerate;
  degenerate.t_filter = 0.0;
  degenerate.t_ovlp = 1.0;

  for (const Sample& s : TinySamples(cfg, 30)) {
    const PostProcessResult r =
        RunPipeline(s, p, cfg, degenerate, LengthMode::kPredicted);
    CHECK(r.final.ids == r.adjusted.ids);
    CHECK(r.corrected.ids == r.adjusted.ids);

    const PostProcessResult ones =
        RunPipeline(s, p, cfg, degenerate, LengthMode::kOnes);
    CHECK(ones.adjusted.ids == s.hyp.ids);
    CHECK(ones.final.ids == s.hyp.ids);
  }
}

TEST_CASE("final output is a subsequence of the corrected sequence") {
  const ModelConfig cfg = TinyConfig();
  const Parameters p = InitParameters(cfg);
  Thresholds th;
  th.t_rej_conf = 0.8;
  th.t_ovlp = 0.1;
  th.t_corr = 0.8;

  for (const Sample& s : TinySamples(cfg, 30)) {
    const PostProcessResult r = RunPipeline(s, p, cfg, th);
    CHECK(r.final.size() <= r.corrected.size());
    size_t at = 0;
    for (TokenId id : r.final.ids) {
      while (at < r.corrected.ids.size() && r.corrected.ids[at] != id) ++at;
      CHECK(at < r.corrected.ids.size());
      ++at;
    }
    CHECK(r.conf.size() == static_cast<size_t>(r.corrected.size()));
    CHECK(r.ovlp.size() == static_cast<size_t>(r.corrected.size()));
    CHECK(r.corr_prob.size() == static_cast<size_t>(r.corrected.size()));
    CHECK(r.rejected.size() == static_cast<size_t>(r.corrected.size()));
  }
}

TEST_CASE("gold lengths reproduce the derived adjustment") {
  const ModelConfig cfg = TinyConfig();
  const Parameters p = InitParameters(cfg);
  Thresholds th;
  for (const Sample& s : TinySamples(cfg, 10)) {
    const PostProcessResult r = RunPipeline(s, p, cfg, th, LengthMode::kGold);
    const TrainingTargets t = DeriveTargets(s.hyp, s.ref, cfg.l_max);
    CHECK(r.adjusted.ids == t.adjusted_hyp.ids);
  }
}

TEST_CASE("empty hypothesis is flagged") {
  const ModelConfig cfg = TinyConfig();
  const Parameters p = InitParameters(cfg);
  Sample s;
  const PostProcessResult r = RunPipeline(s, p, cfg, Thresholds{});
  CHECK(r.empty_adjusted);
  CHECK(r.final.empty());
}

TEST_CASE("a degenerate grid tunes to the identity pipeline") {
  const ModelConfig cfg = TinyConfig();
  const Parameters p = InitParameters(cfg);
  const auto dev = TinySamples(cfg, 20);

  ThresholdGrid grid;
  grid.t_filter = {0.0};
  grid.t_rej_conf = {0.0};
  grid.t_ovlp = {1.0};
  grid.t_corr = {0.0};
  grid.smoothing_window = {1};

  const Thresholds tuned = TuneThresholds(dev, p, cfg, grid, Thresholds{});
  CHECK(tuned.t_filter == 0.0);
  CHECK(tuned.t_ovlp == 1.0);

  // Its dev CER equals the plain length-adjusted CER.
  std::vector<std::pair<TokenSeq, TokenSeq>> pairs;
  for (const Sample& s : dev) {
    const PostProcessResult r = RunPipeline(s, p, cfg, tuned);
    pairs.push_back({r.final, s.ref});
    CHECK(r.final.ids == r.adjusted.ids);
  }
  std::vector<std::pair<TokenSeq, TokenSeq>> adjusted_pairs;
  for (const Sample& s : dev) {
    const PostProcessResult r = RunPipeline(s, p, cfg, tuned);
    adjusted_pairs.push_back({r.adjusted, s.ref});
  }
  CHECK(CorpusCer(pairs).cer == CorpusCer(adjusted_pairs).cer);
}

TEST_CASE("tuning never loses to the default thresholds") {
  const ModelConfig cfg = TinyConfig();
  const Parameters p = InitParameters(cfg);
  const auto dev = TinySamples(cfg, 25);
  const Thresholds base;

  const Thresholds tuned =
      TuneThresholds(dev, p, cfg, DefaultThresholdGrid(), base);

  auto corpus_cer = [&](const Thresholds& th) {
    std::vector<std::pair<TokenSeq, TokenSeq>> pairs;
    for (const Sample& s : dev)
      pairs.push_back({RunPipeline(s, p, cfg, th).final, s.ref});
    return CorpusCer(pairs).cer;
  };
  CHECK(corpus_cer(tuned) <= corpus_cer(base) + 1e-12);

  ThresholdGrid empty_grid;
  CHECK_THROWS(TuneThresholds(dev, p, cfg, empty_grid, base));
  CHECK_THROWS(TuneThresholds({}, p, cfg, DefaultThresholdGrid(), base));
}
