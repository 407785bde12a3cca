// core/include/postasr/corpus.h

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

#ifndef POSTASR_CORPUS_H_
#define POSTASR_CORPUS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "postasr/types.h"

namespace postasr {

/// Error-channel settings for synthesizing hypotheses from references.
struct NoiseConfig {
  double p_sub = 0.10;   // per-token substitution probability
  double p_ins = 0.03;   // insertion probability after each emitted token
  double p_del = 0.03;   // per-token deletion probability
  double confusion_temperature = 1.0;  // > 0; smaller = sharper confusions
  double feature_noise_sigma = 0.15;   // gaussian noise on simulated features
  uint64_t seed = 1;

  void Validate() const;
};

/// Fixed per-vocabulary tables shared by every corpus with the same
/// (vocab_size, d_am): an acoustic codebook holding one vector per token and
/// a sparse confusion distribution over a few neighbor tokens.  Both are
/// derived from documented constant seeds, never from corpus seeds, so
/// models train and evaluate against the same tables.
class FeatureSimulator {
 public:
  FeatureSimulator(int vocab_size, int d_am);

  int vocab_size() const { return vocab_size_; }
  int d_am() const { return d_am_; }

  const std::vector<double>& Codebook(TokenId id) const;

  /// Draws a confusion replacement for `id` (never `id` itself) from its
  /// neighbor distribution sharpened by 1/temperature.
  TokenId DrawConfusion(TokenId id, double temperature, class Rng* rng) const;

  static constexpr int kNeighbors = 5;

 private:
  int vocab_size_;
  int d_am_;
  std::vector<std::vector<double>> codebook_;       // per token
  std::vector<std::vector<TokenId>> neighbor_ids_;  // per token, kNeighbors
  std::vector<std::vector<double>> neighbor_logw_;  // unsharpened log-weights
};

/// Uniform-random reference of length drawn uniformly from
/// [len_min, len_max].  Deterministic given the seed.
TokenSeq GenerateReference(int len_min, int len_max, int vocab_size,
                           uint64_t seed);

/// Pushes a reference through the synthetic ASR error channel: per-token
/// substitution/deletion, insertion after each emitted token, plus simulated
/// word probabilities, durations and acoustic embeddings.  The acoustic
/// vector of an emitted token is the codebook entry of its true underlying
/// token plus gaussian noise; inserted tokens carry pure noise (there is no
/// underlying token).  Deleted tokens donate their frames to the previous
/// emitted token's duration.  Deterministic function of (ref, cfg).
Sample Corrupt(const TokenSeq& ref, const NoiseConfig& cfg,
               const FeatureSimulator& sim, const std::string& utterance_id);

/// Builds a two-speaker mixture: a contiguous window covering
/// overlap_fraction of a's frames is marked overlapped, and b's leading
/// tokens are interleaved into a's hypothesis inside that window as spurious
/// recognitions.  Secondary tokens get degraded word probabilities and a
/// mixed acoustic vector; per-token overlap probabilities come from noisy
/// frame posteriors averaged over token spans.  The mixture keeps a's
/// reference, so every secondary token scores as an insertion error.
OverlapMix MixOverlap(const Sample& a, const Sample& b,
                      double overlap_fraction, uint64_t rng_seed,
                      const FeatureSimulator& sim,
                      double frame_posterior_sigma = 0.2);

/// Mean of frame_probs over each token span.  Empty spans yield 0.0 and are
/// counted into *empty_spans when provided.
std::vector<double> FrameToTokenOverlap(const std::vector<double>& frame_probs,
                                        const std::vector<TokenSpan>& spans,
                                        int* empty_spans = nullptr);

/// Corpus-level generation settings; the on-disk corpus spec mirrors this.
struct CorpusSpec {
  int vocab_size = 50;
  int d_am = 32;
  int len_min = 8;
  int len_max = 16;
  int n_train = 1500;
  int n_dev = 300;
  int n_test = 300;
  int n_overlap_dev = 200;
  int n_overlap_test = 300;
  NoiseConfig train_noise{0.14, 0.04, 0.04, 1.0, 0.15, 1};
  NoiseConfig eval_noise{0.10, 0.025, 0.025, 1.0, 0.15, 1};
  double overlap_fraction = 0.5;
  double frame_posterior_sigma = 0.2;
  uint64_t seed = 1;

  void Validate() const;
};

/// One single-speaker split: references drawn per utterance, corrupted with
/// the given noise.  Each utterance derives its own stream from
/// (spec.seed, split_name, index), so results are identical whether
/// utterances are generated serially or in parallel.
std::vector<Sample> BuildSplit(const CorpusSpec& spec, const NoiseConfig& noise,
                               const std::string& split_name, int n_utterances,
                               const FeatureSimulator& sim, int threads = 1);

/// Overlap split: pairs of eval-noise samples mixed per spec.
std::vector<Sample> BuildOverlapSplit(const CorpusSpec& spec,
                                      const std::string& split_name,
                                      int n_utterances,
                                      const FeatureSimulator& sim,
                                      int threads = 1);

}  // namespace postasr

#endif  // POSTASR_CORPUS_H_
