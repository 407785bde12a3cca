// core/include/postasr/align.h

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

#ifndef POSTASR_ALIGN_H_
#define POSTASR_ALIGN_H_

#include <vector>

#include "postasr/types.h"

namespace postasr {

/// Minimal-cost edit script between hypothesis and reference under unit
/// costs (Match free).  Deterministic: ties are broken by operation
/// preference Match > Insert > Substitute > Delete while reconstructing the
/// script front to back over suffix costs, which keeps genuine matches
/// matched and attaches runs of missing tokens as duplications.  Hypothesis
/// and reference indices each appear exactly once, in increasing order.
std::vector<AlignOp> LevenshteinAlign(const TokenSeq& hyp, const TokenSeq& ref);

/// Character error rate report for one pair.  With an empty reference the
/// counts are still filled in but cer is flagged undefined.
CerReport ComputeCer(const TokenSeq& hyp, const TokenSeq& ref);

/// Derives length targets, the gold-adjusted sequence, confidence labels and
/// correction targets from the edit script.  Per hypothesis token the length
/// target counts the reference tokens aligned to it: an extra hypothesis
/// token gets 0, a matched/substituted one gets 1 plus any immediately
/// following missing reference tokens, which attach to the nearest preceding
/// hypothesis token with nonzero length (leading ones to the first token).
/// Length targets above l_max are clamped, dropping the excess reference
/// tokens and setting the clamped flag.  Requires hyp non-empty, l_max >= 1.
TrainingTargets DeriveTargets(const TokenSeq& hyp, const TokenSeq& ref,
                              int l_max);

/// Expands tokens per expansion counts: token i is emitted lengths[i] times.
TokenSeq ExpandByLengths(const TokenSeq& tokens, const std::vector<int>& lengths);

}  // namespace postasr

#endif  // POSTASR_ALIGN_H_
