// core/include/postasr/types.h

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

#ifndef POSTASR_TYPES_H_
#define POSTASR_TYPES_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace postasr {

using TokenId = int32_t;

/// A sequence of vocabulary indices, optionally paired with display strings.
/// This is the universal currency of the system: hypotheses, references,
/// adjusted and corrected sequences are all TokenSeqs.
struct TokenSeq {
  std::vector<TokenId> ids;
  std::vector<std::string> display;  // empty, or exactly one entry per id

  TokenSeq() = default;
  explicit TokenSeq(std::vector<TokenId> i) : ids(std::move(i)) {}

  int size() const { return static_cast<int>(ids.size()); }
  bool empty() const { return ids.empty(); }
  bool operator==(const TokenSeq&) const = default;
};

enum class EditOp { kMatch, kSubstitute, kInsert, kDelete };

/// One step of an edit script between a hypothesis and a reference.
/// Match/Substitute carry both indices, Insert (extra hypothesis token)
/// carries only hyp_index, Delete (missing reference token) only ref_index.
struct AlignOp {
  EditOp kind;
  int hyp_index = -1;
  int ref_index = -1;

  bool operator==(const AlignOp&) const = default;
};

struct CerReport {
  int64_t substitutions = 0;
  int64_t insertions = 0;
  int64_t deletions = 0;
  int64_t ref_len = 0;
  double cer = 0.0;
  // False when ref_len == 0; the caller must aggregate at corpus level.
  bool cer_defined = false;

  int64_t errors() const { return substitutions + insertions + deletions; }
};

/// Supervision derived from an aligned (hypothesis, reference) pair:
/// per-hypothesis-token expansion counts, the gold-expanded sequence, and
/// per-expanded-token binary labels plus target tokens.
struct TrainingTargets {
  std::vector<int> length_targets;      // one entry per hypothesis token
  TokenSeq adjusted_hyp;                // hypothesis expanded per length_targets
  std::vector<uint8_t> confidence_labels;   // 1 iff adjusted token == target
  std::vector<TokenId> correction_targets;  // aligned reference tokens in order
  bool clamped = false;  // true when a length target hit the cap
};

/// One utterance: hypothesis and reference token sequences plus simulated
/// per-hypothesis-token decoder and acoustic features.
struct Sample {
  TokenSeq hyp;
  TokenSeq ref;
  std::vector<double> word_prob;              // [0,1], per hyp token
  std::vector<int> duration;                  // frames, >= 1, per hyp token
  std::vector<std::vector<double>> acoustic;  // d_am reals per hyp token
  std::vector<double> ovlp_prob;              // [0,1], per hyp token
  std::string utterance_id;
};

/// Frame span of one hypothesis token: [start_frame, end_frame).
using TokenSpan = std::pair<int, int>;

/// A two-speaker mixture built from two single-speaker samples.  Frame
/// labels: 0 = silence/noise, 1 = single-speaker speech, 2 = overlapped.
struct OverlapMix {
  TokenSeq primary_ref;
  TokenSeq secondary_ref;
  std::vector<uint8_t> frame_labels;
  std::vector<TokenSpan> token_spans;  // per mixed-hypothesis token
  Sample mixed_sample;
  // True at positions of mixed_sample.hyp that came from the secondary
  // speaker; kept for tests and diagnostics.
  std::vector<uint8_t> from_secondary;
};

}  // namespace postasr

#endif  // POSTASR_TYPES_H_
