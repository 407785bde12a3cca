// core/include/postasr/pipeline.h

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

#ifndef POSTASR_PIPELINE_H_
#define POSTASR_PIPELINE_H_

#include <string>
#include <vector>

#include "postasr/model.h"
#include "postasr/types.h"

namespace postasr {

enum class RejectionLevel { kToken, kSegment, kSequence };

std::string RejectionLevelName(RejectionLevel level);
RejectionLevel RejectionLevelFromName(const std::string& name);

struct Thresholds {
  double t_filter = 0.5;    // correct a token when its confidence is below
  double t_rej_conf = 0.5;  // rejection: confidence must be below
  double t_ovlp = 0.5;      // rejection: overlap probability must be above
  double t_corr = 0.5;      // rejection: corrector probability must be below
  int smoothing_window = 3;
  RejectionLevel level = RejectionLevel::kToken;
  int segment_min_run = 2;
  double sequence_reject_fraction = 0.5;

  void Validate() const;
};

/// Everything one pipeline pass produced, exposed for audit.
struct PostProcessResult {
  TokenSeq adjusted;
  TokenSeq corr_argmax;  // corrector's top token at every position
  TokenSeq corrected;
  std::vector<int> predicted_lengths;
  std::vector<double> conf;           // raw estimator scores
  std::vector<double> conf_smoothed;  // what rejection sees
  std::vector<double> ovlp;
  std::vector<double> corr_prob;      // max corrector softmax per token
  std::vector<uint8_t> rejected;
  TokenSeq final;
  bool utterance_rejected = false;
  bool empty_adjusted = false;
};

/// Position i takes corr_argmax[i] when conf[i] < t_filter, otherwise the
/// adjusted token is kept.
TokenSeq CorrectWithFiltering(const TokenSeq& adjusted,
                              const std::vector<double>& conf,
                              const TokenSeq& corr_argmax, double t_filter);

/// Centered moving average with truncated windows at the edges.  Window must
/// be odd and >= 1; window 1 is the identity.
std::vector<double> Smooth(const std::vector<double>& scores, int window);

struct RejectDecision {
  std::vector<uint8_t> rejected;
  bool utterance_rejected = false;
};

/// Token i is marked iff conf[i] < t_rej_conf AND ovlp[i] > t_ovlp AND
/// corr_prob[i] < t_corr; a single satisfied rescue condition keeps the
/// token.  Level token keeps the mask as-is; level segment keeps only
/// maximal marked runs of length >= segment_min_run; level sequence rejects
/// the whole utterance when the marked fraction exceeds
/// sequence_reject_fraction and otherwise rejects nothing.
RejectDecision Reject(const std::vector<double>& conf,
                      const std::vector<double>& ovlp,
                      const std::vector<double>& corr_prob,
                      const Thresholds& th);

enum class LengthMode { kPredicted, kGold, kOnes };

/// Full inference pass: fuse, predict lengths, adjust, decode, filter,
/// smooth, reject.  kGold derives lengths from the sample's reference,
/// kOnes forces the identity adjustment.
PostProcessResult RunPipeline(const Sample& sample, const Parameters& params,
                              const ModelConfig& cfg, const Thresholds& th,
                              LengthMode length_mode = LengthMode::kPredicted);

/// Candidate values per threshold for the exhaustive tuning search.  Every
/// list must be non-empty.
struct ThresholdGrid {
  std::vector<double> t_filter;
  std::vector<double> t_rej_conf;
  std::vector<double> t_ovlp;
  std::vector<double> t_corr;
  std::vector<int> smoothing_window;
};

ThresholdGrid DefaultThresholdGrid();

/// Exhaustive, deterministic grid search minimizing the corpus CER of the
/// final output on the dev set; ties break toward fewer rejected tokens,
/// then toward earlier grid order.  Model outputs are computed once per
/// utterance and reused across the grid.
Thresholds TuneThresholds(const std::vector<Sample>& dev,
                          const Parameters& params, const ModelConfig& cfg,
                          const ThresholdGrid& grid, const Thresholds& base);

}  // namespace postasr

#endif  // POSTASR_PIPELINE_H_
