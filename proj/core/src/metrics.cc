// core/src/metrics.cc

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

#include "postasr/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "postasr/align.h"

namespace postasr {

CerReport CorpusCer(
    const std::vector<std::pair<TokenSeq, TokenSeq>>& hyp_ref) {
  CerReport total;
  for (const auto& [hyp, ref] : hyp_ref) {
    const CerReport r = ComputeCer(hyp, ref);
    total.substitutions += r.substitutions;
    total.insertions += r.insertions;
    total.deletions += r.deletions;
    total.ref_len += r.ref_len;
  }
  if (total.ref_len == 0)
    throw std::invalid_argument("CorpusCer: all references are empty");
  total.cer = static_cast<double>(total.errors()) / total.ref_len;
  total.cer_defined = true;
  return total;
}

namespace {

void CheckScoredLabels(const ScoredLabels& sl, const char* who) {
  if (sl.scores.size() != sl.labels.size())
    throw std::invalid_argument(std::string(who) + ": scores/labels size mismatch");
  int64_t pos = 0;
  for (uint8_t l : sl.labels) {
    if (l > 1) throw std::invalid_argument(std::string(who) + ": labels must be 0/1");
    pos += l;
  }
  if (pos == 0 || pos == static_cast<int64_t>(sl.labels.size()))
    throw std::invalid_argument(std::string(who) +
                                ": both classes must be present");
}

}  // namespace

RocCurve RocAuc(const ScoredLabels& sl) {
  CheckScoredLabels(sl, "RocAuc");
  const int n = sl.size();

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return sl.scores[a] < sl.scores[b];
  });

  int64_t n_pos = 0;
  for (uint8_t l : sl.labels) n_pos += l;
  const int64_t n_neg = n - n_pos;

  // Mann-Whitney U via average ranks over tied groups.
  double rank_sum_pos = 0.0;
  RocCurve curve;
  curve.points.push_back(
      {std::numeric_limits<double>::infinity(), 0.0, 0.0});
  // Sweep distinct scores in descending order for the curve, ascending for
  // the ranks; one grouping pass serves both.
  int i = 0;
  std::vector<std::pair<double, std::pair<int64_t, int64_t>>> groups;  // score -> (pos, neg)
  while (i < n) {
    int j = i;
    int64_t gp = 0, gn = 0;
    while (j < n && sl.scores[order[j]] == sl.scores[order[i]]) {
      if (sl.labels[order[j]]) ++gp; else ++gn;
      ++j;
    }
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + j);  // 1-based
    rank_sum_pos += avg_rank * static_cast<double>(gp);
    groups.push_back({sl.scores[order[i]], {gp, gn}});
    i = j;
  }
  int64_t tp = 0, fp = 0;
  for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
    tp += it->second.first;
    fp += it->second.second;
    curve.points.push_back({it->first,
                            static_cast<double>(fp) / n_neg,
                            static_cast<double>(tp) / n_pos});
  }

  const double u = rank_sum_pos -
                   0.5 * static_cast<double>(n_pos) * (n_pos + 1);
  curve.auc = u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return curve;
}

double Nce(const ScoredLabels& sl) {
  CheckScoredLabels(sl, "Nce");
  constexpr double kEps = 1e-12;
  const int n = sl.size();

  int64_t n_pos = 0;
  for (uint8_t l : sl.labels) n_pos += l;
  const double p = static_cast<double>(n_pos) / n;
  const double h_labels = -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);

  double h_cross = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = std::clamp(sl.scores[i], kEps, 1.0 - kEps);
    h_cross -= sl.labels[i] ? std::log(s) : std::log(1.0 - s);
  }
  h_cross /= n;
  return (h_labels - h_cross) / h_labels;
}

}  // namespace postasr
