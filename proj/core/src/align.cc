// core/src/align.cc

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

#include "postasr/align.h"

#include <limits>
#include <stdexcept>

namespace postasr {

std::vector<AlignOp> LevenshteinAlign(const TokenSeq& hyp, const TokenSeq& ref) {
  const int n = hyp.size();
  const int m = ref.size();

  // d[i][j] = edit distance between the suffixes hyp[i..n) and ref[j..m).
  // Filling suffix costs lets the script be reconstructed front to back, so
  // the tie-break preference is applied in reading order.
  std::vector<int> d(static_cast<size_t>(n + 1) * (m + 1));
  auto at = [&](int i, int j) -> int& { return d[static_cast<size_t>(i) * (m + 1) + j]; };
  for (int j = 0; j <= m; ++j) at(n, j) = m - j;
  for (int i = n - 1; i >= 0; --i) {
    at(i, m) = n - i;
    for (int j = m - 1; j >= 0; --j) {
      int best = at(i + 1, j + 1) + (hyp.ids[i] == ref.ids[j] ? 0 : 1);
      best = std::min(best, at(i, j + 1) + 1);  // ref[j] missing from hyp
      best = std::min(best, at(i + 1, j) + 1);  // hyp[i] is an extra token
      at(i, j) = best;
    }
  }

  // Preference at equal cost: Match > Insert > Substitute > Delete.  Taking
  // the extra-token op ahead of a substitution keeps later genuine matches
  // matched, which is what turns a run of missing tokens into duplication
  // counts on the preceding token instead of a cascade of substitutions.
  std::vector<AlignOp> ops;
  ops.reserve(n + m);
  int i = 0, j = 0;
  while (i < n || j < m) {
    if (i < n && j < m && hyp.ids[i] == ref.ids[j] &&
        at(i, j) == at(i + 1, j + 1)) {
      ops.push_back({EditOp::kMatch, i, j});
      ++i, ++j;
    } else if (i < n && at(i, j) == at(i + 1, j) + 1) {
      ops.push_back({EditOp::kInsert, i, -1});
      ++i;
    } else if (i < n && j < m && at(i, j) == at(i + 1, j + 1) + 1) {
      ops.push_back({EditOp::kSubstitute, i, j});
      ++i, ++j;
    } else {
      ops.push_back({EditOp::kDelete, -1, j});
      ++j;
    }
  }
  return ops;
}

CerReport ComputeCer(const TokenSeq& hyp, const TokenSeq& ref) {
  CerReport report;
  for (const AlignOp& op : LevenshteinAlign(hyp, ref)) {
    switch (op.kind) {
      case EditOp::kSubstitute: ++report.substitutions; break;
      case EditOp::kInsert: ++report.insertions; break;
      case EditOp::kDelete: ++report.deletions; break;
      case EditOp::kMatch: break;
    }
  }
  report.ref_len = ref.size();
  if (report.ref_len > 0) {
    report.cer = static_cast<double>(report.errors()) / report.ref_len;
    report.cer_defined = true;
  } else {
    report.cer = std::numeric_limits<double>::quiet_NaN();
    report.cer_defined = false;
  }
  return report;
}

TrainingTargets DeriveTargets(const TokenSeq& hyp, const TokenSeq& ref,
                              int l_max) {
  if (hyp.empty())
    throw std::invalid_argument("DeriveTargets: hypothesis must be non-empty");
  if (l_max < 1)
    throw std::invalid_argument("DeriveTargets: l_max must be >= 1");

  const int n = hyp.size();
  TrainingTargets t;
  t.length_targets.assign(n, 0);
  // Reference tokens owned by each hypothesis token, in reference order.
  std::vector<std::vector<TokenId>> owned(n);

  int last_nonzero = -1;
  for (const AlignOp& op : LevenshteinAlign(hyp, ref)) {
    switch (op.kind) {
      case EditOp::kMatch:
      case EditOp::kSubstitute:
        t.length_targets[op.hyp_index] += 1;
        owned[op.hyp_index].push_back(ref.ids[op.ref_index]);
        last_nonzero = op.hyp_index;
        break;
      case EditOp::kDelete: {
        const int target = last_nonzero >= 0 ? last_nonzero : 0;
        t.length_targets[target] += 1;
        owned[target].push_back(ref.ids[op.ref_index]);
        last_nonzero = target;
        break;
      }
      case EditOp::kInsert:
        break;  // extra hypothesis token, expansion count stays 0
    }
  }

  for (int i = 0; i < n; ++i) {
    if (t.length_targets[i] > l_max) {
      owned[i].resize(l_max);  // drop excess reference tokens
      t.length_targets[i] = l_max;
      t.clamped = true;
    }
  }

  t.adjusted_hyp = ExpandByLengths(hyp, t.length_targets);
  for (const auto& refs : owned)
    t.correction_targets.insert(t.correction_targets.end(), refs.begin(),
                                refs.end());
  t.confidence_labels.resize(t.adjusted_hyp.size());
  for (int i = 0; i < t.adjusted_hyp.size(); ++i)
    t.confidence_labels[i] =
        t.adjusted_hyp.ids[i] == t.correction_targets[i] ? 1 : 0;
  return t;
}

TokenSeq ExpandByLengths(const TokenSeq& tokens,
                         const std::vector<int>& lengths) {
  if (static_cast<int>(lengths.size()) != tokens.size())
    throw std::invalid_argument("ExpandByLengths: lengths/tokens size mismatch");
  TokenSeq out;
  const bool has_display = !tokens.display.empty();
  for (int i = 0; i < tokens.size(); ++i) {
    for (int k = 0; k < lengths[i]; ++k) {
      out.ids.push_back(tokens.ids[i]);
      if (has_display) out.display.push_back(tokens.display[i]);
    }
  }
  return out;
}

}  // namespace postasr
