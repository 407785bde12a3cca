// core/include/postasr/model.h

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

#ifndef POSTASR_MODEL_H_
#define POSTASR_MODEL_H_

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "postasr/types.h"

namespace postasr {

class Rng;

using Mat = Eigen::MatrixXd;

struct FeatureFlags {
  bool acoustic = true;
  bool word_prob = true;
  bool duration = true;
};

struct LossFlags {
  bool distillation = true;
  bool conf_regularization = true;
};

/// Architecture and training-behavior settings.  The defaults are the
/// desk-scale configuration: CPU-trainable in minutes while keeping every
/// mechanism of the full-size model.
struct ModelConfig {
  int vocab_size = 50;
  int d_model = 64;
  int d_ff = 256;
  int n_heads = 4;
  int n_blocks_length = 2;
  int n_blocks_decoder = 2;
  int d_am = 32;
  int l_max = 4;  // expansion head has l_max + 1 classes
  FeatureFlags use_features;
  LossFlags loss_flags;
  double dropout_rate = 0.1;
  uint64_t seed = 1;

  int NumScalarFeatures() const {
    return (use_features.word_prob ? 1 : 0) + (use_features.duration ? 1 : 0);
  }
  void Validate() const;
};

/// One pre-norm transformer block: x += Attn(LN(x)); x += FF(LN(x)).
struct TransformerBlock {
  Mat ln1_gain, ln1_bias;
  Mat wq, bq, wk, bk, wv, bv, wo, bo;
  Mat ln2_gain, ln2_bias;
  Mat ff_w1, ff_b1, ff_w2, ff_b2;
};

/// All learnable weights.  Blocks are stored length-predictor blocks first,
/// decoder blocks after.  The embedding, scalar-fusion and acoustic
/// projections are shared by both branches.
struct Parameters {
  Mat embedding;       // vocab x d_model
  Mat fuse_w, fuse_b;  // (d_model + n_scalars) x d_model; absent when 0x0
  Mat am_w, am_b;      // d_am x d_model; absent when 0x0
  std::vector<TransformerBlock> blocks;
  Mat ln_len_gain, ln_len_bias;  // final norm of the length branch
  Mat ln_dec_gain, ln_dec_bias;  // final norm of the decoder branch
  Mat len_w, len_b;    // d_model x (l_max+1)
  Mat esti_w, esti_b;  // d_model x 2
  Mat corr_w, corr_b;  // d_model x vocab

  /// Visits every parameter with a stable, unique name (checkpointing,
  /// optimizer state, gradient checks).
  void ForEach(const std::function<void(const std::string&, Mat&)>& fn);
  void ForEach(
      const std::function<void(const std::string&, const Mat&)>& fn) const;
};

/// Scaled-uniform initialization, U(-a, a) with a = sqrt(6 / (fan_in +
/// fan_out)); layer-norm gains 1, all biases 0.  Deterministic in cfg.seed.
Parameters InitParameters(const ModelConfig& cfg);

/// Same shapes as `like`, every entry zero.  Used for gradients and
/// optimizer state.
Parameters ZeroLike(const Parameters& like);

struct ForwardOutputs {
  Mat length_logits;   // T_hyp x (l_max + 1)
  Mat conf_logits;     // T_adj x 2
  Mat corr_logits;     // T_adj x vocab
  Mat decoder_states;  // T_adj x d_model
};

// ---------------------------------------------------------------------------
// Inference-mode operations (pure functions of the parameters).

/// Token embedding, enabled scalar features (word probability and
/// log-duration) appended and projected back to d_model, acoustic vector
/// projected by one linear layer and added, sinusoidal position encoding
/// added.  Disabled features contribute exactly zero.
Mat FuseFeatures(const Sample& sample, const Parameters& p,
                 const ModelConfig& cfg, bool add_positions = true);

/// Length branch: transformer blocks, final norm, linear head.
Mat PredictLengths(const Mat& fused, const Parameters& p,
                   const ModelConfig& cfg);

/// Argmax per row; exact ties resolve toward the smaller length.
std::vector<int> ChooseLengths(const Mat& length_logits);

/// Emits token i lengths[i] times (0 drops it) and duplicates the per-token
/// features alongside.  The reference and utterance id carry over.
Sample AdjustSample(const Sample& sample, const std::vector<int>& lengths);

struct DecodeOutputs {
  Mat conf_logits;
  Mat corr_logits;
  Mat decoder_states;
};

/// Decoder branch on an adjusted, fused sequence: full self-attention
/// blocks, final norm, then the two parallel heads.  Empty input gives
/// empty outputs.
DecodeOutputs Decode(const Mat& fused_adjusted, const Parameters& p,
                     const ModelConfig& cfg);

/// Softmax probability of the "correct" class (column 1), one per token.
std::vector<double> ConfidenceScores(const Mat& conf_logits);

// ---------------------------------------------------------------------------
// Training-mode forward with recorded activations.

struct LayerNormTrace {
  Mat xhat;
  Eigen::VectorXd inv_std;
};

struct BlockTrace {
  Mat x_in;
  LayerNormTrace ln1;
  Mat z1;
  Mat q, k, v;
  std::vector<Mat> attn_probs;  // per head
  Mat ctx;
  Mat attn_mask;  // dropout scale factors; empty in eval mode
  Mat x_mid;
  LayerNormTrace ln2;
  Mat z2;
  Mat ff_pre;
  Mat ff_act;
  Mat ff_mask;
};

struct StackTrace {
  std::vector<BlockTrace> blocks;
  LayerNormTrace ln_final;
};

struct FuseTrace {
  std::vector<TokenId> tokens;
  Mat scalar_input;  // T x n_scalars (empty when none enabled)
  Mat am_input;      // T x d_am (empty when acoustic disabled)
};

struct UtteranceTrace {
  FuseTrace fuse_len;
  Mat fused_len;
  StackTrace len_stack;
  Mat len_states;
  FuseTrace fuse_dec;
  Mat fused_dec;
  StackTrace dec_stack;
};

struct BatchTrace {
  std::vector<UtteranceTrace> utts;
  bool train_mode = false;
};

/// Teacher-forced batch forward: the length branch reads the raw hypothesis,
/// the decoder branch reads the gold-adjusted sequence from the targets.
/// In train mode dropout masks are drawn from *dropout_rng and recorded.
std::vector<ForwardOutputs> TrainForward(
    const std::vector<const Sample*>& samples,
    const std::vector<const TrainingTargets*>& targets, const Parameters& p,
    const ModelConfig& cfg, bool train_mode, Rng* dropout_rng,
    BatchTrace* trace);

// ---------------------------------------------------------------------------
// Losses and gradients.

/// The five loss terms.  l_total is exactly their sum; disabled terms are
/// zero.
struct LossBreakdown {
  double l_leng = 0, l_esti = 0, l_corr = 0, l_dist = 0, l_conf = 0;
  double l_total = 0;
};

struct LossMask {
  bool leng = true, esti = true, corr = true, dist = true, conf = true;
};

/// Byproducts of the loss pass that the backward pass and tests reuse:
/// estimator scores c_i, their batch mean, and the per-token weights
/// (1 - c_i) / (1 - c_mean) actually applied.
struct LossAux {
  std::vector<std::vector<double>> conf_scores;
  std::vector<std::vector<double>> conf_weights;
  double conf_mean = 0.0;
  int64_t n_length_tokens = 0;
  int64_t n_adjusted_tokens = 0;
  int denom_clamp_events = 0;  // times 1 - c_mean was clamped at epsilon
};

/// Per-token weights (1 - c_i) / (1 - mean c), denominator clamped at 1e-6.
/// Their batch mean is 1 by construction.
std::vector<std::vector<double>> ConfidenceWeights(
    const std::vector<std::vector<double>>& conf_scores, double* conf_mean,
    int* clamp_events);

/// Mean cross-entropies for length/estimator/corrector, mean squared error
/// against the teacher states, and the confidence-weighted KL term.  The
/// weights are treated as constants; pass frozen_conf_weights to pin them to
/// values captured earlier (finite-difference tests), otherwise they are
/// computed from the outputs.  teacher_states must be present iff the dist
/// term is enabled.
LossBreakdown ComputeLosses(const std::vector<ForwardOutputs>& outputs,
                            const std::vector<const TrainingTargets*>& targets,
                            const std::vector<Mat>* teacher_states,
                            const ModelConfig& cfg, const LossMask& mask,
                            const std::vector<std::vector<double>>*
                                frozen_conf_weights,
                            LossAux* aux);

/// Exact analytic gradients of the masked total loss for every parameter.
/// Requires the recorded forward (trace + outputs) and the LossAux from the
/// matching ComputeLosses call so both passes use identical confidence
/// weights.  Throws, naming the parameter block, if any gradient entry is
/// non-finite.
Parameters Backward(const BatchTrace& trace,
                    const std::vector<ForwardOutputs>& outputs,
                    const std::vector<const TrainingTargets*>& targets,
                    const std::vector<Mat>* teacher_states,
                    const Parameters& p, const ModelConfig& cfg,
                    const LossMask& mask, const LossAux& aux);

// ---------------------------------------------------------------------------
// Shared internals, exposed for the teacher model, tests and benchmarks.

Mat PositionalEncoding(int rows, int d_model);

TransformerBlock InitBlock(int d_model, int d_ff, Rng* rng);

/// Runs a span of blocks over x.  When train mode is active, dropout masks
/// are drawn from *rng; when traces != nullptr one BlockTrace per block is
/// appended.
Mat RunBlocks(const TransformerBlock* blocks, int n_blocks, Mat x,
              const ModelConfig& cfg, bool train_mode, Rng* rng,
              std::vector<BlockTrace>* traces);

/// Backpropagates through a span of blocks; returns the gradient w.r.t. the
/// stack input and accumulates parameter gradients into grad_blocks.
Mat BlocksBackward(const TransformerBlock* blocks,
                   TransformerBlock* grad_blocks, int n_blocks,
                   const std::vector<BlockTrace>& traces, const Mat& d_out,
                   const ModelConfig& cfg);

Mat LayerNormForward(const Mat& x, const Mat& gain, const Mat& bias,
                     LayerNormTrace* trace);
Mat LayerNormBackward(const Mat& d_out, const Mat& gain,
                      const LayerNormTrace& trace, Mat* d_gain, Mat* d_bias);

}  // namespace postasr

#endif  // POSTASR_MODEL_H_
