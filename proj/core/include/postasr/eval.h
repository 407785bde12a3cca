// core/include/postasr/eval.h

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

#ifndef POSTASR_EVAL_H_
#define POSTASR_EVAL_H_

#include <string>
#include <vector>

#include "postasr/metrics.h"
#include "postasr/model.h"
#include "postasr/pipeline.h"
#include "postasr/types.h"

namespace postasr {

/// One test-set row of the evaluation report.
struct SetReport {
  std::string set_name;
  int utterances = 0;
  double cer_before = 0.0;
  double cer_after_correction = 0.0;
  double cer_after_rejection = 0.0;
  double auc = 0.0;
  double nce = 0.0;
  bool scores_defined = false;  // false when only one label class occurred
};

/// Estimator scores under gold-length adjustment, pooled over the set, with
/// the matching alignment-derived labels.  This isolates estimator quality
/// from length-prediction quality.
ScoredLabels GoldConfidenceScores(const std::vector<Sample>& samples,
                                  const Parameters& params,
                                  const ModelConfig& cfg, int threads = 1);

/// CER before/after correction/after rejection (pipeline with the given
/// length mode) plus AUC and NCE of the gold-length estimator scores.
SetReport EvaluateSet(const std::string& set_name,
                      const std::vector<Sample>& samples,
                      const Parameters& params, const ModelConfig& cfg,
                      const Thresholds& th,
                      LengthMode length_mode = LengthMode::kPredicted,
                      int threads = 1);

}  // namespace postasr

#endif  // POSTASR_EVAL_H_
