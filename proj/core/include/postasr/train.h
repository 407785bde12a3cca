// core/include/postasr/train.h

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

#ifndef POSTASR_TRAIN_H_
#define POSTASR_TRAIN_H_

#include <iosfwd>
#include <vector>

#include "postasr/model.h"
#include "postasr/types.h"

namespace postasr {

struct OptimizerSettings {
  double peak_lr = 2e-3;
  int warmup_steps = 40;   // linear warmup, then inverse-square-root decay
  int steps = 400;
  int batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

/// Learning rate at 1-based step: peak * min(step/warmup, sqrt(warmup/step)).
double LearningRateAt(const OptimizerSettings& opt, int step);

enum class TaskMode { kJoint, kEstimatorOnly, kCorrectorOnly };

struct TrainLogEntry {
  int step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct TrainResult {
  Parameters params;
  std::vector<TrainLogEntry> log;
  bool diverged = false;
  int steps_done = 0;
  int clamped_targets = 0;  // samples whose length targets hit the cap
};

/// Small masked-prediction language model over the same vocabulary and
/// hidden size as the main model; its final hidden states act as the
/// distillation teacher.
class TeacherModel {
 public:
  struct Config {
    int vocab_size = 50;
    int d_model = 64;
    int d_ff = 256;
    int n_heads = 4;
    int n_blocks = 2;
    double mask_prob = 0.15;
    uint64_t seed = 7;
  };

  explicit TeacherModel(const Config& cfg);

  const Config& config() const { return cfg_; }

  /// Final hidden states for a token sequence, shape (len, d_model).
  Mat States(const TokenSeq& tokens) const;

  /// Visits every parameter with a stable name (checkpoints, optimizer).
  void ForEach(const std::function<void(const std::string&, Mat&)>& fn);

  TokenId mask_id() const { return cfg_.vocab_size; }

  friend TeacherModel TrainTeacherLm(const std::vector<TokenSeq>&,
                                     const Config&, const OptimizerSettings&,
                                     std::ostream*);
  friend double TeacherMaskedAccuracy(const TeacherModel&,
                                      const std::vector<TokenSeq>&, uint64_t);

 private:
  Config cfg_;
  Mat embedding_;  // (vocab_size + 1) x d_model; the extra row is the mask
  std::vector<TransformerBlock> blocks_;
  Mat ln_gain_, ln_bias_;
  Mat head_w_, head_b_;  // d_model x vocab_size
};

/// Trains the teacher with masked-token prediction on clean references.
TeacherModel TrainTeacherLm(const std::vector<TokenSeq>& clean_refs,
                            const TeacherModel::Config& cfg,
                            const OptimizerSettings& opt,
                            std::ostream* progress = nullptr);

/// Fraction of masked positions the teacher recovers on held-out sequences.
double TeacherMaskedAccuracy(const TeacherModel& teacher,
                             const std::vector<TokenSeq>& refs, uint64_t seed);

/// Mini-batch Adam training of the joint model with teacher forcing: the
/// decoder consumes gold-adjusted sequences while the length head trains in
/// parallel.  Deterministic for a fixed config.  A teacher must be supplied
/// iff cfg.loss_flags.distillation is set.  If the total loss goes
/// non-finite the run aborts and returns the last finite-loss parameters
/// with diverged = true.
TrainResult Train(const std::vector<Sample>& corpus, const ModelConfig& cfg,
                  const OptimizerSettings& opt, TaskMode task = TaskMode::kJoint,
                  const TeacherModel* teacher = nullptr,
                  std::ostream* progress = nullptr);

/// The loss-term mask implied by a task mode and the config's loss flags.
LossMask ResolveLossMask(const ModelConfig& cfg, TaskMode task,
                         bool has_teacher);

}  // namespace postasr

#endif  // POSTASR_TRAIN_H_
