// core/src/pipeline.cc

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

#include "postasr/pipeline.h"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "postasr/align.h"
#include "postasr/metrics.h"

namespace postasr {

std::string RejectionLevelName(RejectionLevel level) {
  switch (level) {
    case RejectionLevel::kToken: return "token";
    case RejectionLevel::kSegment: return "segment";
    case RejectionLevel::kSequence: return "sequence";
  }
  return "token";
}

RejectionLevel RejectionLevelFromName(const std::string& name) {
  if (name == "token") return RejectionLevel::kToken;
  if (name == "segment") return RejectionLevel::kSegment;
  if (name == "sequence") return RejectionLevel::kSequence;
  throw std::invalid_argument("unknown rejection level: " + name);
}

void Thresholds::Validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(t_filter) || !unit(t_rej_conf) || !unit(t_ovlp) || !unit(t_corr) ||
      !unit(sequence_reject_fraction))
    throw std::invalid_argument("Thresholds: values must be in [0,1]");
  if (smoothing_window < 1 || smoothing_window % 2 == 0)
    throw std::invalid_argument("Thresholds: smoothing_window must be odd and >= 1");
  if (segment_min_run < 1)
    throw std::invalid_argument("Thresholds: segment_min_run must be >= 1");
}

TokenSeq CorrectWithFiltering(const TokenSeq& adjusted,
                              const std::vector<double>& conf,
                              const TokenSeq& corr_argmax, double t_filter) {
  const int n = adjusted.size();
  if (static_cast<int>(conf.size()) != n || corr_argmax.size() != n)
    throw std::invalid_argument("CorrectWithFiltering: length mismatch");
  TokenSeq out = adjusted;
  for (int i = 0; i < n; ++i)
    if (conf[i] < t_filter) {
      out.ids[i] = corr_argmax.ids[i];
      if (!out.display.empty() && !corr_argmax.display.empty())
        out.display[i] = corr_argmax.display[i];
    }
  return out;
}

std::vector<double> Smooth(const std::vector<double>& scores, int window) {
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("Smooth: window must be odd and >= 1");
  if (window == 1) return scores;
  const int n = static_cast<int>(scores.size());
  const int half = window / 2;
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double sum = 0.0;
    for (int j = lo; j <= hi; ++j) sum += scores[j];
    out[i] = sum / (hi - lo + 1);
  }
  return out;
}

RejectDecision Reject(const std::vector<double>& conf,
                      const std::vector<double>& ovlp,
                      const std::vector<double>& corr_prob,
                      const Thresholds& th) {
  th.Validate();
  const int n = static_cast<int>(conf.size());
  if (static_cast<int>(ovlp.size()) != n ||
      static_cast<int>(corr_prob.size()) != n)
    throw std::invalid_argument("Reject: length mismatch");

  RejectDecision d;
  d.rejected.assign(n, 0);
  int marked = 0;
  for (int i = 0; i < n; ++i) {
    const bool low_conf = conf[i] < th.t_rej_conf;
    const bool high_ovlp = ovlp[i] > th.t_ovlp;
    const bool low_corr = corr_prob[i] < th.t_corr;
    if (low_conf && high_ovlp && low_corr) {
      d.rejected[i] = 1;
      ++marked;
    }
  }

  switch (th.level) {
    case RejectionLevel::kToken:
      break;
    case RejectionLevel::kSegment: {
      int i = 0;
      while (i < n) {
        if (!d.rejected[i]) { ++i; continue; }
        int j = i;
        while (j < n && d.rejected[j]) ++j;
        if (j - i < th.segment_min_run)
          for (int k = i; k < j; ++k) d.rejected[k] = 0;
        i = j;
      }
      break;
    }
    case RejectionLevel::kSequence: {
      const double fraction = n > 0 ? static_cast<double>(marked) / n : 0.0;
      if (fraction > th.sequence_reject_fraction) {
        d.utterance_rejected = true;
        std::fill(d.rejected.begin(), d.rejected.end(), 1);
      } else {
        std::fill(d.rejected.begin(), d.rejected.end(), 0);
      }
      break;
    }
  }
  return d;
}

PostProcessResult RunPipeline(const Sample& sample, const Parameters& params,
                              const ModelConfig& cfg, const Thresholds& th,
                              LengthMode length_mode) {
  th.Validate();
  PostProcessResult r;
  if (sample.hyp.empty()) {
    r.empty_adjusted = true;
    return r;
  }

  switch (length_mode) {
    case LengthMode::kPredicted: {
      const Mat fused = FuseFeatures(sample, params, cfg);
      r.predicted_lengths = ChooseLengths(PredictLengths(fused, params, cfg));
      break;
    }
    case LengthMode::kGold: {
      if (sample.ref.empty())
        throw std::invalid_argument("RunPipeline: gold lengths need a reference");
      r.predicted_lengths =
          DeriveTargets(sample.hyp, sample.ref, cfg.l_max).length_targets;
      break;
    }
    case LengthMode::kOnes:
      r.predicted_lengths.assign(sample.hyp.size(), 1);
      break;
  }

  const Sample adjusted = AdjustSample(sample, r.predicted_lengths);
  r.adjusted = adjusted.hyp;
  r.ovlp = adjusted.ovlp_prob;
  if (adjusted.hyp.empty()) {
    r.empty_adjusted = true;
    r.corrected = r.adjusted;
    r.final = r.adjusted;
    return r;
  }

  const Mat fused_adj = FuseFeatures(adjusted, params, cfg);
  const DecodeOutputs dec = Decode(fused_adj, params, cfg);
  r.conf = ConfidenceScores(dec.conf_logits);

  const int t_adj = adjusted.hyp.size();
  r.corr_argmax.ids.resize(t_adj);
  r.corr_prob.resize(t_adj);
  for (int i = 0; i < t_adj; ++i) {
    int best = 0;
    for (int c = 1; c < dec.corr_logits.cols(); ++c)
      if (dec.corr_logits(i, c) > dec.corr_logits(i, best)) best = c;
    r.corr_argmax.ids[i] = best;
    const double mx = dec.corr_logits.row(i).maxCoeff();
    const double z = (dec.corr_logits.row(i).array() - mx).exp().sum();
    r.corr_prob[i] = 1.0 / z;  // exp(mx - mx) / sum
  }

  r.corrected =
      CorrectWithFiltering(r.adjusted, r.conf, r.corr_argmax, th.t_filter);
  r.conf_smoothed = Smooth(r.conf, th.smoothing_window);
  const RejectDecision d = Reject(r.conf_smoothed, r.ovlp, r.corr_prob, th);
  r.rejected = d.rejected;
  r.utterance_rejected = d.utterance_rejected;

  if (!r.utterance_rejected)
    for (int i = 0; i < t_adj; ++i)
      if (!r.rejected[i]) r.final.ids.push_back(r.corrected.ids[i]);
  return r;
}

ThresholdGrid DefaultThresholdGrid() {
  ThresholdGrid g;
  g.t_filter = {0.0, 0.3, 0.5, 0.7, 1.0};
  g.t_rej_conf = {0.3, 0.5, 0.7, 0.9, 1.0};
  g.t_ovlp = {0.3, 0.5, 0.7, 1.0};
  g.t_corr = {0.3, 0.5, 0.8, 1.0};
  g.smoothing_window = {1, 3};
  return g;
}

Thresholds TuneThresholds(const std::vector<Sample>& dev,
                          const Parameters& params, const ModelConfig& cfg,
                          const ThresholdGrid& grid, const Thresholds& base) {
  if (dev.empty()) throw std::invalid_argument("TuneThresholds: empty dev set");
  if (grid.t_filter.empty() || grid.t_rej_conf.empty() || grid.t_ovlp.empty() ||
      grid.t_corr.empty() || grid.smoothing_window.empty())
    throw std::invalid_argument("TuneThresholds: empty grid");

  // The model pass does not depend on the thresholds; run it once per
  // utterance and replay only the decision logic across the grid.
  struct Cached {
    TokenSeq adjusted;
    TokenSeq corr_argmax;
    std::vector<double> conf, ovlp, corr_prob;
    const TokenSeq* ref;
  };
  std::vector<Cached> cache;
  cache.reserve(dev.size());
  for (const Sample& s : dev) {
    PostProcessResult r =
        RunPipeline(s, params, cfg, base, LengthMode::kPredicted);
    Cached c;
    c.adjusted = std::move(r.adjusted);
    c.corr_argmax = std::move(r.corr_argmax);
    c.conf = std::move(r.conf);
    c.ovlp = std::move(r.ovlp);
    c.corr_prob = std::move(r.corr_prob);
    c.ref = &s.ref;
    cache.push_back(std::move(c));
  }

  Thresholds best = base;
  double best_cer = std::numeric_limits<double>::infinity();
  int64_t best_rejections = 0;
  bool have_best = false;

  for (int window : grid.smoothing_window)
    for (double tf : grid.t_filter)
      for (double trc : grid.t_rej_conf)
        for (double tov : grid.t_ovlp)
          for (double tco : grid.t_corr) {
            Thresholds th = base;
            th.t_filter = tf;
            th.t_rej_conf = trc;
            th.t_ovlp = tov;
            th.t_corr = tco;
            th.smoothing_window = window;

            CerReport total;
            int64_t rejections = 0;
            for (const Cached& c : cache) {
              TokenSeq corrected = c.adjusted;
              for (size_t i = 0; i < corrected.ids.size(); ++i)
                if (c.conf[i] < tf) corrected.ids[i] = c.corr_argmax.ids[i];
              const std::vector<double> smoothed = Smooth(c.conf, window);
              const RejectDecision d = Reject(smoothed, c.ovlp, c.corr_prob, th);
              TokenSeq final_seq;
              if (!d.utterance_rejected)
                for (size_t i = 0; i < corrected.ids.size(); ++i) {
                  if (!d.rejected[i]) final_seq.ids.push_back(corrected.ids[i]);
                  else ++rejections;
                }
              else
                rejections += static_cast<int64_t>(corrected.ids.size());
              const CerReport r = ComputeCer(final_seq, *c.ref);
              total.substitutions += r.substitutions;
              total.insertions += r.insertions;
              total.deletions += r.deletions;
              total.ref_len += r.ref_len;
            }
            const double cer =
                total.ref_len > 0
                    ? static_cast<double>(total.errors()) / total.ref_len
                    : std::numeric_limits<double>::infinity();
            if (!have_best || cer < best_cer ||
                (cer == best_cer && rejections < best_rejections)) {
              have_best = true;
              best_cer = cer;
              best_rejections = rejections;
              best = th;
            }
          }
  return best;
}

}  // namespace postasr
