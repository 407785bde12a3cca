// core/src/corpus.cc

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

#include "postasr/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "postasr/parallel.h"
#include "postasr/rng.h"

namespace postasr {

namespace {

// Constant stream tags for the shared per-vocabulary tables.  These are
// independent of corpus seeds: every corpus over the same vocabulary sees
// the same codebook and confusion sets.
constexpr uint64_t kCodebookSeed = 0x61636F7573746963ULL;   // "acoustic"
constexpr uint64_t kConfusionSeed = 0x636F6E6675736500ULL;  // "confuse"

constexpr int kPadFrames = 3;

constexpr double kCleanWordProbMean = 0.9;
constexpr double kErrorWordProbMean = 0.4;

int DrawDuration(Rng* rng) { return 2 + rng->UniformInt(5); }  // frames, 2..6

double ClampUnit(double x) { return std::clamp(x, 0.0, 1.0); }

double DrawWordProb(bool corrupted, double sigma, Rng* rng) {
  const double mean = corrupted ? kErrorWordProbMean : kCleanWordProbMean;
  return ClampUnit(mean + sigma * rng->Normal());
}

// Single-speaker overlap posteriors sit near zero.
double DrawRestingOvlp(Rng* rng) {
  return ClampUnit(0.05 * std::abs(rng->Normal()));
}

}  // namespace

void NoiseConfig::Validate() const {
  auto unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!unit(p_sub) || !unit(p_ins) || !unit(p_del))
    throw std::invalid_argument("NoiseConfig: probabilities must be in [0,1]");
  if (p_sub + p_ins + p_del > 1.0)
    throw std::invalid_argument("NoiseConfig: p_sub + p_ins + p_del must be <= 1");
  if (confusion_temperature <= 0.0)
    throw std::invalid_argument("NoiseConfig: confusion_temperature must be > 0");
  if (feature_noise_sigma < 0.0)
    throw std::invalid_argument("NoiseConfig: feature_noise_sigma must be >= 0");
}

void CorpusSpec::Validate() const {
  if (vocab_size < 2) throw std::invalid_argument("CorpusSpec: vocab_size must be >= 2");
  if (d_am < 1) throw std::invalid_argument("CorpusSpec: d_am must be >= 1");
  if (len_min < 1 || len_max < len_min)
    throw std::invalid_argument("CorpusSpec: bad length range");
  if (overlap_fraction < 0.0 || overlap_fraction > 1.0)
    throw std::invalid_argument("CorpusSpec: overlap_fraction must be in [0,1]");
  train_noise.Validate();
  eval_noise.Validate();
}

FeatureSimulator::FeatureSimulator(int vocab_size, int d_am)
    : vocab_size_(vocab_size), d_am_(d_am) {
  if (vocab_size < 2) throw std::invalid_argument("FeatureSimulator: vocab_size must be >= 2");
  if (d_am < 1) throw std::invalid_argument("FeatureSimulator: d_am must be >= 1");

  std::ostringstream shape;
  shape << vocab_size << "x" << d_am;
  Rng cb_rng(Rng::MixSeed(kCodebookSeed, shape.str()));
  codebook_.resize(vocab_size);
  for (auto& v : codebook_) {
    v.resize(d_am);
    for (double& x : v) x = cb_rng.Normal();
  }

  neighbor_ids_.resize(vocab_size);
  neighbor_logw_.resize(vocab_size);
  for (TokenId t = 0; t < vocab_size; ++t) {
    Rng nb_rng(Rng::MixSeed(kConfusionSeed,
                            shape.str() + "/" + std::to_string(t)));
    const int n_neighbors = std::min(kNeighbors, vocab_size - 1);
    auto& ids = neighbor_ids_[t];
    while (static_cast<int>(ids.size()) < n_neighbors) {
      const TokenId cand = nb_rng.UniformInt(vocab_size);
      if (cand == t) continue;
      if (std::find(ids.begin(), ids.end(), cand) != ids.end()) continue;
      ids.push_back(cand);
    }
    auto& logw = neighbor_logw_[t];
    logw.resize(n_neighbors);
    for (double& w : logw) w = std::log(nb_rng.Uniform() + 1e-3);
  }
}

const std::vector<double>& FeatureSimulator::Codebook(TokenId id) const {
  return codebook_.at(static_cast<size_t>(id));
}

TokenId FeatureSimulator::DrawConfusion(TokenId id, double temperature,
                                        Rng* rng) const {
  const auto& ids = neighbor_ids_.at(static_cast<size_t>(id));
  const auto& logw = neighbor_logw_[static_cast<size_t>(id)];
  const int k = static_cast<int>(ids.size());
  double probs[kNeighbors];
  double total = 0.0;
  double max_l = *std::max_element(logw.begin(), logw.end());
  for (int i = 0; i < k; ++i) {
    probs[i] = std::exp((logw[i] - max_l) / temperature);
    total += probs[i];
  }
  double u = rng->Uniform() * total;
  for (int i = 0; i < k; ++i) {
    u -= probs[i];
    if (u <= 0.0) return ids[i];
  }
  return ids[k - 1];
}

TokenSeq GenerateReference(int len_min, int len_max, int vocab_size,
                           uint64_t seed) {
  if (vocab_size < 2) throw std::invalid_argument("GenerateReference: vocab_size must be >= 2");
  if (len_min < 0 || len_max < len_min)
    throw std::invalid_argument("GenerateReference: bad length range");
  Rng rng(seed);
  const int len = len_min + rng.UniformInt(len_max - len_min + 1);
  TokenSeq out;
  out.ids.reserve(len);
  for (int i = 0; i < len; ++i) out.ids.push_back(rng.UniformInt(vocab_size));
  return out;
}

Sample Corrupt(const TokenSeq& ref, const NoiseConfig& cfg,
               const FeatureSimulator& sim, const std::string& utterance_id) {
  if (ref.empty()) throw std::invalid_argument("Corrupt: reference must be non-empty");
  cfg.Validate();

  Rng rng(cfg.seed);
  const double sigma = cfg.feature_noise_sigma;
  const int d_am = sim.d_am();

  Sample s;
  s.ref = ref;
  s.utterance_id = utterance_id;

  auto emit = [&](TokenId token, bool corrupted, bool has_truth,
                  TokenId truth) {
    s.hyp.ids.push_back(token);
    s.word_prob.push_back(DrawWordProb(corrupted, sigma, &rng));
    s.duration.push_back(DrawDuration(&rng));
    std::vector<double> ac(d_am);
    if (has_truth) {
      const auto& code = sim.Codebook(truth);
      for (int k = 0; k < d_am; ++k) ac[k] = code[k] + sigma * rng.Normal();
    } else {
      for (int k = 0; k < d_am; ++k) ac[k] = sigma * rng.Normal();
    }
    s.acoustic.push_back(std::move(ac));
    s.ovlp_prob.push_back(DrawRestingOvlp(&rng));
  };

  int pending_frames = 0;  // frames of deleted tokens awaiting an owner
  for (TokenId r : ref.ids) {
    const double u = rng.Uniform();
    if (u < cfg.p_del) {
      // The token is dropped but its audio frames remain; the nearest
      // emitted token absorbs them, matching where length targets attach.
      const int frames = DrawDuration(&rng);
      if (!s.duration.empty())
        s.duration.back() += frames;
      else
        pending_frames += frames;
    } else {
      const bool substituted = u < cfg.p_del + cfg.p_sub;
      const TokenId token =
          substituted ? sim.DrawConfusion(r, cfg.confusion_temperature, &rng)
                      : r;
      emit(token, substituted, /*has_truth=*/true, /*truth=*/r);
      if (pending_frames > 0) {
        s.duration.back() += pending_frames;
        pending_frames = 0;
      }
    }
    if (rng.Uniform() < cfg.p_ins) {
      const TokenId junk = rng.UniformInt(sim.vocab_size());
      emit(junk, /*corrupted=*/true, /*has_truth=*/false, 0);
    }
  }
  if (pending_frames > 0 && !s.duration.empty())
    s.duration.back() += pending_frames;
  return s;
}

std::vector<double> FrameToTokenOverlap(const std::vector<double>& frame_probs,
                                        const std::vector<TokenSpan>& spans,
                                        int* empty_spans) {
  std::vector<double> out;
  out.reserve(spans.size());
  const int n_frames = static_cast<int>(frame_probs.size());
  for (const auto& [start, end] : spans) {
    if (start < 0 || end < start || end > n_frames)
      throw std::invalid_argument("FrameToTokenOverlap: span out of range");
    if (start == end) {
      if (empty_spans) ++*empty_spans;
      out.push_back(0.0);
      continue;
    }
    double sum = 0.0;
    for (int f = start; f < end; ++f) sum += frame_probs[f];
    out.push_back(sum / (end - start));
  }
  return out;
}

OverlapMix MixOverlap(const Sample& a, const Sample& b,
                      double overlap_fraction, uint64_t rng_seed,
                      const FeatureSimulator& sim,
                      double frame_posterior_sigma) {
  if (overlap_fraction < 0.0 || overlap_fraction > 1.0)
    throw std::invalid_argument("MixOverlap: overlap_fraction must be in [0,1]");
  if (a.hyp.empty()) throw std::invalid_argument("MixOverlap: primary hypothesis is empty");

  Rng rng(rng_seed);
  const int na = a.hyp.size();

  // Primary token spans in speech coordinates (pads added at the end).
  std::vector<int> cum(na + 1, 0);
  for (int i = 0; i < na; ++i) {
    if (a.duration[i] < 1) throw std::invalid_argument("MixOverlap: durations must be >= 1");
    cum[i + 1] = cum[i] + a.duration[i];
  }
  const int speech_frames = cum[na];

  const int window_len =
      static_cast<int>(std::llround(overlap_fraction * speech_frames));
  const int window_start =
      window_len < speech_frames ? rng.UniformInt(speech_frames - window_len + 1)
                                 : 0;
  const int window_end = window_start + window_len;

  // Primary tokens belong to the window when their span midpoint does; the
  // effective window is then snapped to those token boundaries.
  int k1 = na, k2 = na;
  for (int i = 0; i < na; ++i) {
    const double mid = 0.5 * (cum[i] + cum[i + 1]);
    const bool inside = mid >= window_start && mid < window_end;
    if (inside && k1 == na) k1 = i;
    if (inside) k2 = i + 1;
  }
  if (k1 == na) k2 = k1 = 0;  // empty window
  const int win_lo = cum[k1], win_hi = cum[k2];
  const int win_frames = win_hi - win_lo;

  // Secondary speaker talks through the window: take its leading tokens
  // until their claimed duration fills the window.
  int nb = 0, b_cum = 0;
  while (nb < b.hyp.size() && win_frames > 0 && b_cum < win_frames) {
    b_cum += b.duration[nb];
    ++nb;
  }

  // Interleave window tokens by virtual start time (primary wins ties).
  struct Piece {
    bool secondary;
    int index;
    double start;
    int duration;
  };
  std::vector<Piece> window_pieces;
  for (int i = k1; i < k2; ++i)
    window_pieces.push_back({false, i, static_cast<double>(cum[i]), a.duration[i]});
  int b_at = 0;
  for (int j = 0; j < nb; ++j) {
    window_pieces.push_back(
        {true, j, win_lo + b_at + 0.5, b.duration[j]});
    b_at += b.duration[j];
  }
  std::stable_sort(window_pieces.begin(), window_pieces.end(),
                   [](const Piece& x, const Piece& y) { return x.start < y.start; });

  OverlapMix mix;
  mix.primary_ref = a.ref;
  mix.secondary_ref = b.ref;

  Sample& out = mix.mixed_sample;
  out.ref = a.ref;
  out.utterance_id = a.utterance_id + "+" + b.utterance_id;

  auto push_primary = [&](int i) {
    out.hyp.ids.push_back(a.hyp.ids[i]);
    out.word_prob.push_back(a.word_prob[i]);
    out.duration.push_back(a.duration[i]);
    out.acoustic.push_back(a.acoustic[i]);
    mix.from_secondary.push_back(0);
  };

  std::vector<int> piece_token_index;  // window piece -> mixed hyp position
  for (int i = 0; i < k1; ++i) push_primary(i);
  // Nearest primary window token (by interleave order) lends its acoustic
  // vector to the secondary tokens recognized over the same audio.
  int last_primary_in_window = k1 < k2 ? k1 : -1;
  for (const Piece& p : window_pieces) {
    if (!p.secondary) {
      last_primary_in_window = p.index;
      piece_token_index.push_back(static_cast<int>(out.hyp.ids.size()));
      push_primary(p.index);
    } else {
      piece_token_index.push_back(static_cast<int>(out.hyp.ids.size()));
      out.hyp.ids.push_back(b.hyp.ids[p.index]);
      out.word_prob.push_back(
          DrawWordProb(/*corrupted=*/true, frame_posterior_sigma, &rng));
      out.duration.push_back(b.duration[p.index]);
      std::vector<double> ac(sim.d_am());
      const auto& own = b.acoustic[p.index];
      if (last_primary_in_window >= 0) {
        const auto& other = a.acoustic[last_primary_in_window];
        for (int k = 0; k < sim.d_am(); ++k)
          ac[k] = 0.6 * own[k] + 0.4 * other[k];
      } else {
        ac = own;
      }
      out.acoustic.push_back(std::move(ac));
      mix.from_secondary.push_back(1);
    }
  }
  for (int i = k2; i < na; ++i) push_primary(i);

  // Token spans: outside the window the primary spans carry over; inside,
  // the window frames are re-tiled over the interleaved tokens proportional
  // to their claimed durations.
  mix.token_spans.resize(out.hyp.size());
  int pos = 0;
  for (int i = 0; i < k1; ++i, ++pos)
    mix.token_spans[pos] = {kPadFrames + cum[i], kPadFrames + cum[i + 1]};
  if (!window_pieces.empty()) {
    int total_dur = 0;
    for (const Piece& p : window_pieces) total_dur += p.duration;
    int running = 0, prev_edge = win_lo;
    for (size_t w = 0; w < window_pieces.size(); ++w) {
      running += window_pieces[w].duration;
      const int edge =
          win_lo + static_cast<int>(std::llround(
                       static_cast<double>(win_frames) * running / total_dur));
      mix.token_spans[piece_token_index[w]] = {kPadFrames + prev_edge,
                                               kPadFrames + edge};
      prev_edge = edge;
    }
    pos += static_cast<int>(window_pieces.size());
  }
  for (int i = k2; i < na; ++i, ++pos)
    mix.token_spans[pos] = {kPadFrames + cum[i], kPadFrames + cum[i + 1]};

  // Frame labels over pad + speech + pad.
  mix.frame_labels.assign(kPadFrames + speech_frames + kPadFrames, 0);
  for (int f = 0; f < speech_frames; ++f)
    mix.frame_labels[kPadFrames + f] =
        (f >= win_lo && f < win_hi) ? 2 : 1;

  // Noisy frame posteriors of the overlapped class, then span means.
  std::vector<double> posteriors(mix.frame_labels.size());
  for (size_t f = 0; f < posteriors.size(); ++f) {
    const double truth = mix.frame_labels[f] == 2 ? 1.0 : 0.0;
    posteriors[f] = ClampUnit(truth + frame_posterior_sigma * rng.Normal());
  }
  out.ovlp_prob = FrameToTokenOverlap(posteriors, mix.token_spans);
  return mix;
}

namespace {

std::string UttId(const std::string& split, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%06d", split.c_str(), index);
  return buf;
}

Sample MakeSample(const CorpusSpec& spec, const NoiseConfig& noise,
                  const FeatureSimulator& sim, const std::string& split,
                  const std::string& utt_id) {
  const uint64_t utt_seed = Rng::MixSeed(spec.seed, split + "/" + utt_id);
  // An all-deleted hypothesis cannot be post-processed; redraw on a derived
  // stream (astronomically rare at the default lengths).
  for (int attempt = 0;; ++attempt) {
    const std::string tag = attempt == 0 ? "" : "/retry" + std::to_string(attempt);
    const TokenSeq ref = GenerateReference(
        spec.len_min, spec.len_max, spec.vocab_size,
        Rng::MixSeed(utt_seed, "ref" + tag));
    NoiseConfig cfg = noise;
    cfg.seed = Rng::MixSeed(utt_seed, "noise" + tag);
    Sample s = Corrupt(ref, cfg, sim, utt_id);
    if (!s.hyp.empty()) return s;
  }
}

}  // namespace

std::vector<Sample> BuildSplit(const CorpusSpec& spec, const NoiseConfig& noise,
                               const std::string& split_name, int n_utterances,
                               const FeatureSimulator& sim, int threads) {
  spec.Validate();
  std::vector<Sample> out(n_utterances);
  ParallelFor(n_utterances, threads, [&](int i) {
    out[i] = MakeSample(spec, noise, sim, split_name, UttId(split_name, i));
  });
  return out;
}

std::vector<Sample> BuildOverlapSplit(const CorpusSpec& spec,
                                      const std::string& split_name,
                                      int n_utterances,
                                      const FeatureSimulator& sim,
                                      int threads) {
  spec.Validate();
  std::vector<Sample> out(n_utterances);
  ParallelFor(n_utterances, threads, [&](int i) {
    const std::string id = UttId(split_name, i);
    const Sample a = MakeSample(spec, spec.eval_noise, sim, split_name, id + "a");
    const Sample b = MakeSample(spec, spec.eval_noise, sim, split_name, id + "b");
    const uint64_t mix_seed =
        Rng::MixSeed(spec.seed, split_name + "/" + id + "/mix");
    OverlapMix mix = MixOverlap(a, b, spec.overlap_fraction, mix_seed, sim,
                                spec.frame_posterior_sigma);
    mix.mixed_sample.utterance_id = id;
    out[i] = std::move(mix.mixed_sample);
  });
  return out;
}

}  // namespace postasr
