// core/src/eval.cc

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

#include "postasr/eval.h"

#include <stdexcept>

#include "postasr/align.h"
#include "postasr/parallel.h"

namespace postasr {

ScoredLabels GoldConfidenceScores(const std::vector<Sample>& samples,
                                  const Parameters& params,
                                  const ModelConfig& cfg, int threads) {
  const int n = static_cast<int>(samples.size());
  std::vector<ScoredLabels> per_utt(n);
  ParallelFor(n, threads, [&](int i) {
    const Sample& s = samples[i];
    if (s.hyp.empty() || s.ref.empty()) return;
    const TrainingTargets t = DeriveTargets(s.hyp, s.ref, cfg.l_max);
    const Sample adj = AdjustSample(s, t.length_targets);
    if (adj.hyp.empty()) return;
    const Mat fused = FuseFeatures(adj, params, cfg);
    const DecodeOutputs dec = Decode(fused, params, cfg);
    per_utt[i].scores = ConfidenceScores(dec.conf_logits);
    per_utt[i].labels = t.confidence_labels;
  });

  ScoredLabels pooled;
  for (const ScoredLabels& sl : per_utt) {
    pooled.scores.insert(pooled.scores.end(), sl.scores.begin(), sl.scores.end());
    pooled.labels.insert(pooled.labels.end(), sl.labels.begin(), sl.labels.end());
  }
  return pooled;
}

SetReport EvaluateSet(const std::string& set_name,
                      const std::vector<Sample>& samples,
                      const Parameters& params, const ModelConfig& cfg,
                      const Thresholds& th, LengthMode length_mode,
                      int threads) {
  if (samples.empty()) throw std::invalid_argument("EvaluateSet: empty set");

  const int n = static_cast<int>(samples.size());
  std::vector<PostProcessResult> results(n);
  ParallelFor(n, threads, [&](int i) {
    results[i] = RunPipeline(samples[i], params, cfg, th, length_mode);
  });

  std::vector<std::pair<TokenSeq, TokenSeq>> before, corrected, final_out;
  before.reserve(n);
  corrected.reserve(n);
  final_out.reserve(n);
  for (int i = 0; i < n; ++i) {
    before.push_back({samples[i].hyp, samples[i].ref});
    corrected.push_back({results[i].corrected, samples[i].ref});
    final_out.push_back({results[i].final, samples[i].ref});
  }

  SetReport report;
  report.set_name = set_name;
  report.utterances = n;
  report.cer_before = CorpusCer(before).cer;
  report.cer_after_correction = CorpusCer(corrected).cer;
  report.cer_after_rejection = CorpusCer(final_out).cer;

  const ScoredLabels sl = GoldConfidenceScores(samples, params, cfg, threads);
  try {
    report.auc = RocAuc(sl).auc;
    report.nce = Nce(sl);
    report.scores_defined = true;
  } catch (const std::invalid_argument&) {
    report.scores_defined = false;  // single-class set
  }
  return report;
}

}  // namespace postasr
