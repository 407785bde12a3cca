// core/include/postasr/metrics.h

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

#ifndef POSTASR_METRICS_H_
#define POSTASR_METRICS_H_

#include <cstdint>
#include <utility>
#include <vector>

#include "postasr/types.h"

namespace postasr {

/// Per-token confidence scores in [0,1] with binary labels (1 = correct).
struct ScoredLabels {
  std::vector<double> scores;
  std::vector<uint8_t> labels;

  int size() const { return static_cast<int>(scores.size()); }
};

struct RocPoint {
  double threshold;  // predict positive when score >= threshold
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) at +inf down to (1,1)
  double auc = 0.0;
};

/// Pooled (micro-average) CER: error counts summed over utterances, divided
/// by the total reference length.  Throws if every reference is empty.
CerReport CorpusCer(const std::vector<std::pair<TokenSeq, TokenSeq>>& hyp_ref);

/// ROC curve with one point per distinct score plus both endpoints.  The AUC
/// is the normalized Mann-Whitney U statistic with ties counted half, which
/// coincides with the trapezoidal area under the curve points.  Throws if
/// only one class is present.
RocCurve RocAuc(const ScoredLabels& sl);

/// Normalized cross entropy: 1 - H(s|l)/H(l), natural log, scores clipped to
/// [1e-12, 1 - 1e-12] before the logs.  May be negative for miscalibrated
/// scores.  Throws if only one class is present (label entropy is zero).
double Nce(const ScoredLabels& sl);

}  // namespace postasr

#endif  // POSTASR_METRICS_H_
