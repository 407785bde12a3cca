// core/src/train.cc

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

#include "postasr/train.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "postasr/align.h"
#include "postasr/rng.h"

namespace postasr {

double LearningRateAt(const OptimizerSettings& opt, int step) {
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(std::max(opt.warmup_steps, 1));
  return opt.peak_lr * std::min(s / w, std::sqrt(w / s));
}

namespace {

// Flat Adam over a list of parameter matrices (order fixed by ForEach).
class Adam {
 public:
  Adam(std::vector<Mat*> params, const OptimizerSettings& opt)
      : params_(std::move(params)), opt_(opt) {
    for (Mat* p : params_) {
      m_.push_back(Mat::Zero(p->rows(), p->cols()));
      v_.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }

  void Step(const std::vector<const Mat*>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, t_);
    const double bc2 = 1.0 - std::pow(opt_.beta2, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * (*grads[i]);
      v_[i] = opt_.beta2 * v_[i] +
              (1.0 - opt_.beta2) * grads[i]->cwiseProduct(*grads[i]);
      params_[i]->array() -=
          lr * (m_[i].array() / bc1) /
          ((v_[i].array() / bc2).sqrt() + opt_.eps);
    }
  }

 private:
  std::vector<Mat*> params_;
  OptimizerSettings opt_;
  std::vector<Mat> m_, v_;
  int t_ = 0;
};

std::vector<Mat*> CollectParams(Parameters* p) {
  std::vector<Mat*> out;
  p->ForEach([&](const std::string&, Mat& m) { out.push_back(&m); });
  return out;
}

std::vector<const Mat*> CollectGrads(const Parameters& g) {
  std::vector<const Mat*> out;
  g.ForEach([&](const std::string&, const Mat& m) { out.push_back(&m); });
  return out;
}

ModelConfig TeacherShim(const TeacherModel::Config& c) {
  // RunBlocks only reads d_model / n_heads / dropout_rate.
  ModelConfig cfg;
  cfg.vocab_size = c.vocab_size;
  cfg.d_model = c.d_model;
  cfg.d_ff = c.d_ff;
  cfg.n_heads = c.n_heads;
  cfg.n_blocks_length = 0;
  cfg.n_blocks_decoder = c.n_blocks;
  cfg.dropout_rate = 0.0;
  return cfg;
}

}  // namespace

LossMask ResolveLossMask(const ModelConfig& cfg, TaskMode task,
                         bool has_teacher) {
  LossMask mask;
  mask.dist = cfg.loss_flags.distillation && has_teacher;
  mask.conf = cfg.loss_flags.conf_regularization;
  switch (task) {
    case TaskMode::kJoint:
      break;
    case TaskMode::kEstimatorOnly:
      mask.corr = false;
      mask.conf = false;  // weighted corrector KL needs a corrector
      break;
    case TaskMode::kCorrectorOnly:
      mask.esti = false;
      mask.conf = false;  // the weights come from the estimator
      break;
  }
  return mask;
}

TrainResult Train(const std::vector<Sample>& corpus, const ModelConfig& cfg,
                  const OptimizerSettings& opt, TaskMode task,
                  const TeacherModel* teacher, std::ostream* progress) {
  cfg.Validate();
  if (corpus.empty()) throw std::invalid_argument("Train: empty corpus");
  if (cfg.loss_flags.distillation && teacher == nullptr)
    throw std::invalid_argument("Train: distillation enabled but no teacher");
  if (teacher != nullptr && teacher->config().d_model != cfg.d_model)
    throw std::invalid_argument("Train: teacher d_model " +
                                std::to_string(teacher->config().d_model) +
                                " does not match student d_model " +
                                std::to_string(cfg.d_model));

  const LossMask mask = ResolveLossMask(cfg, task, teacher != nullptr);

  TrainResult result;

  // Targets (and teacher states, which depend only on them) are fixed for
  // the whole run; compute them once.
  const int n = static_cast<int>(corpus.size());
  std::vector<TrainingTargets> targets(n);
  std::vector<Mat> teacher_states(mask.dist ? n : 0);
  for (int i = 0; i < n; ++i) {
    if (corpus[i].hyp.empty())
      throw std::invalid_argument("Train: sample " + corpus[i].utterance_id +
                                  " has an empty hypothesis");
    targets[i] = DeriveTargets(corpus[i].hyp, corpus[i].ref, cfg.l_max);
    if (targets[i].clamped) ++result.clamped_targets;
    if (mask.dist) teacher_states[i] = teacher->States(targets[i].adjusted_hyp);
  }

  Parameters params = InitParameters(cfg);
  Adam adam(CollectParams(&params), opt);
  Rng shuffle_rng(Rng::MixSeed(cfg.seed, "train/shuffle"));
  Rng dropout_rng(Rng::MixSeed(cfg.seed, "train/dropout"));

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  int cursor = n;  // force a reshuffle on first use

  Parameters last_good = params;
  for (int step = 1; step <= opt.steps; ++step) {
    std::vector<const Sample*> batch;
    std::vector<const TrainingTargets*> batch_targets;
    std::vector<Mat> batch_teacher;
    for (int b = 0; b < opt.batch_size; ++b) {
      if (cursor >= n) {
        for (int i = n - 1; i > 0; --i)
          std::swap(order[i], order[shuffle_rng.UniformInt(i + 1)]);
        cursor = 0;
      }
      const int idx = order[cursor++];
      batch.push_back(&corpus[idx]);
      batch_targets.push_back(&targets[idx]);
      if (mask.dist) batch_teacher.push_back(teacher_states[idx]);
    }

    BatchTrace trace;
    const std::vector<ForwardOutputs> outputs = TrainForward(
        batch, batch_targets, params, cfg, /*train_mode=*/true, &dropout_rng,
        &trace);
    LossAux aux;
    const LossBreakdown loss =
        ComputeLosses(outputs, batch_targets, mask.dist ? &batch_teacher : nullptr,
                      cfg, mask, nullptr, &aux);
    if (!std::isfinite(loss.l_total)) {
      result.diverged = true;
      params = last_good;
      if (progress)
        *progress << "train: diverged at step " << step
                  << ", reverting to last finite checkpoint\n";
      break;
    }
    last_good = params;

    const Parameters grads =
        Backward(trace, outputs, batch_targets,
                 mask.dist ? &batch_teacher : nullptr, params, cfg, mask, aux);
    const double lr = LearningRateAt(opt, step);
    adam.Step(CollectGrads(grads), lr);

    result.log.push_back({step, lr, loss});
    result.steps_done = step;
    if (progress && (step % 100 == 0 || step == opt.steps))
      *progress << "train: step " << step << " l_total " << loss.l_total
                << "\n";
  }

  result.params = std::move(params);
  return result;
}

// ---------------------------------------------------------------------------
// Teacher language model.

TeacherModel::TeacherModel(const Config& cfg) : cfg_(cfg) {
  if (cfg.vocab_size < 2 || cfg.d_model < 1 || cfg.d_model % cfg.n_heads != 0)
    throw std::invalid_argument("TeacherModel: bad config");
  Rng rng(cfg.seed);
  const double a = std::sqrt(6.0 / (cfg.vocab_size + 1 + cfg.d_model));
  embedding_ = Mat(cfg.vocab_size + 1, cfg.d_model);
  for (int i = 0; i < embedding_.rows(); ++i)
    for (int j = 0; j < embedding_.cols(); ++j)
      embedding_(i, j) = (2.0 * rng.Uniform() - 1.0) * a;
  for (int i = 0; i < cfg.n_blocks; ++i)
    blocks_.push_back(InitBlock(cfg.d_model, cfg.d_ff, &rng));
  ln_gain_ = Mat::Ones(1, cfg.d_model);
  ln_bias_ = Mat::Zero(1, cfg.d_model);
  const double ah = std::sqrt(6.0 / (cfg.d_model + cfg.vocab_size));
  head_w_ = Mat(cfg.d_model, cfg.vocab_size);
  for (int i = 0; i < head_w_.rows(); ++i)
    for (int j = 0; j < head_w_.cols(); ++j)
      head_w_(i, j) = (2.0 * rng.Uniform() - 1.0) * ah;
  head_b_ = Mat::Zero(1, cfg.vocab_size);
}

void TeacherModel::ForEach(
    const std::function<void(const std::string&, Mat&)>& fn) {
  fn("embedding", embedding_);
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const std::string pre = "block" + std::to_string(i) + ".";
    TransformerBlock& b = blocks_[i];
    fn(pre + "ln1_gain", b.ln1_gain);
    fn(pre + "ln1_bias", b.ln1_bias);
    fn(pre + "wq", b.wq);
    fn(pre + "bq", b.bq);
    fn(pre + "wk", b.wk);
    fn(pre + "bk", b.bk);
    fn(pre + "wv", b.wv);
    fn(pre + "bv", b.bv);
    fn(pre + "wo", b.wo);
    fn(pre + "bo", b.bo);
    fn(pre + "ln2_gain", b.ln2_gain);
    fn(pre + "ln2_bias", b.ln2_bias);
    fn(pre + "ff_w1", b.ff_w1);
    fn(pre + "ff_b1", b.ff_b1);
    fn(pre + "ff_w2", b.ff_w2);
    fn(pre + "ff_b2", b.ff_b2);
  }
  fn("ln_gain", ln_gain_);
  fn("ln_bias", ln_bias_);
  fn("head_w", head_w_);
  fn("head_b", head_b_);
}

namespace {

Mat TeacherEmbed(const Mat& embedding, const std::vector<TokenId>& tokens,
                 int d_model) {
  Mat x(static_cast<int>(tokens.size()), d_model);
  for (size_t i = 0; i < tokens.size(); ++i)
    x.row(static_cast<int>(i)) = embedding.row(tokens[i]);
  if (!tokens.empty())
    x += PositionalEncoding(static_cast<int>(tokens.size()), d_model);
  return x;
}

}  // namespace

Mat TeacherModel::States(const TokenSeq& tokens) const {
  const ModelConfig shim = TeacherShim(cfg_);
  Mat x = TeacherEmbed(embedding_, tokens.ids, cfg_.d_model);
  x = RunBlocks(blocks_.data(), cfg_.n_blocks, std::move(x), shim, false,
                nullptr, nullptr);
  return LayerNormForward(x, ln_gain_, ln_bias_, nullptr);
}

TeacherModel TrainTeacherLm(const std::vector<TokenSeq>& clean_refs,
                            const TeacherModel::Config& cfg,
                            const OptimizerSettings& opt,
                            std::ostream* progress) {
  if (clean_refs.empty())
    throw std::invalid_argument("TrainTeacherLm: empty reference corpus");
  TeacherModel teacher(cfg);
  const ModelConfig shim = TeacherShim(cfg);

  std::vector<Mat*> param_list;
  std::vector<std::string> names;
  teacher.ForEach([&](const std::string& n, Mat& m) {
    param_list.push_back(&m);
    names.push_back(n);
  });
  Adam adam(param_list, opt);

  Rng rng(Rng::MixSeed(cfg.seed, "teacher/train"));
  const int n = static_cast<int>(clean_refs.size());

  for (int step = 1; step <= opt.steps; ++step) {
    // One batch: mask ~mask_prob positions per sequence, predict originals.
    struct Item {
      std::vector<TokenId> input;
      std::vector<int> masked_pos;
      const TokenSeq* truth;
    };
    std::vector<Item> batch;
    int n_masked = 0;
    for (int b = 0; b < opt.batch_size; ++b) {
      const TokenSeq& ref = clean_refs[rng.UniformInt(n)];
      if (ref.empty()) continue;
      Item item;
      item.truth = &ref;
      item.input = ref.ids;
      for (int i = 0; i < ref.size(); ++i)
        if (rng.Uniform() < cfg.mask_prob) {
          item.input[i] = teacher.mask_id();
          item.masked_pos.push_back(i);
        }
      if (item.masked_pos.empty()) {
        const int i = rng.UniformInt(ref.size());
        item.input[i] = teacher.mask_id();
        item.masked_pos.push_back(i);
      }
      n_masked += static_cast<int>(item.masked_pos.size());
      batch.push_back(std::move(item));
    }

    // Forward with traces, loss at masked positions, manual backward.
    std::vector<const Mat*> grad_list;
    std::vector<Mat> gmats;
    gmats.reserve(param_list.size());
    for (Mat* p : param_list) gmats.push_back(Mat::Zero(p->rows(), p->cols()));
    auto grad_of = [&](const std::string& name) -> Mat& {
      for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return gmats[i];
      throw std::logic_error("teacher grad lookup: " + name);
    };

    double loss_sum = 0.0;
    for (const Item& item : batch) {
      std::vector<BlockTrace> traces;
      Mat x0 = TeacherEmbed(teacher.embedding_, item.input, cfg.d_model);
      Mat x = RunBlocks(teacher.blocks_.data(), cfg.n_blocks, x0, shim, false,
                        nullptr, &traces);
      LayerNormTrace ln;
      Mat states = LayerNormForward(x, teacher.ln_gain_, teacher.ln_bias_, &ln);
      Mat logits = (states * teacher.head_w_).rowwise() + teacher.head_b_.row(0);

      Mat dlogits = Mat::Zero(logits.rows(), logits.cols());
      for (int pos : item.masked_pos) {
        const TokenId truth = item.truth->ids[pos];
        const double mx = logits.row(pos).maxCoeff();
        Eigen::RowVectorXd ex = (logits.row(pos).array() - mx).exp();
        const double z = ex.sum();
        loss_sum += std::log(z) + mx - logits(pos, truth);
        dlogits.row(pos) = ex / z / n_masked;
        dlogits(pos, truth) -= 1.0 / n_masked;
      }

      grad_of("head_w") += states.transpose() * dlogits;
      grad_of("head_b") += dlogits.colwise().sum();
      Mat dstates = dlogits * teacher.head_w_.transpose();
      Mat dx = LayerNormBackward(dstates, teacher.ln_gain_, ln,
                                 &grad_of("ln_gain"), &grad_of("ln_bias"));
      std::vector<TransformerBlock> gblocks(cfg.n_blocks);
      for (int i = 0; i < cfg.n_blocks; ++i) {
        TransformerBlock& gb = gblocks[i];
        gb.ln1_gain = Mat::Zero(1, cfg.d_model);
        gb.ln1_bias = Mat::Zero(1, cfg.d_model);
        gb.wq = Mat::Zero(cfg.d_model, cfg.d_model);
        gb.bq = Mat::Zero(1, cfg.d_model);
        gb.wk = Mat::Zero(cfg.d_model, cfg.d_model);
        gb.bk = Mat::Zero(1, cfg.d_model);
        gb.wv = Mat::Zero(cfg.d_model, cfg.d_model);
        gb.bv = Mat::Zero(1, cfg.d_model);
        gb.wo = Mat::Zero(cfg.d_model, cfg.d_model);
        gb.bo = Mat::Zero(1, cfg.d_model);
        gb.ln2_gain = Mat::Zero(1, cfg.d_model);
        gb.ln2_bias = Mat::Zero(1, cfg.d_model);
        gb.ff_w1 = Mat::Zero(cfg.d_model, cfg.d_ff);
        gb.ff_b1 = Mat::Zero(1, cfg.d_ff);
        gb.ff_w2 = Mat::Zero(cfg.d_ff, cfg.d_model);
        gb.ff_b2 = Mat::Zero(1, cfg.d_model);
      }
      Mat dx0 = BlocksBackward(teacher.blocks_.data(), gblocks.data(),
                               cfg.n_blocks, traces, dx, shim);
      for (int i = 0; i < cfg.n_blocks; ++i) {
        const std::string pre = "block" + std::to_string(i) + ".";
        grad_of(pre + "ln1_gain") += gblocks[i].ln1_gain;
        grad_of(pre + "ln1_bias") += gblocks[i].ln1_bias;
        grad_of(pre + "wq") += gblocks[i].wq;
        grad_of(pre + "bq") += gblocks[i].bq;
        grad_of(pre + "wk") += gblocks[i].wk;
        grad_of(pre + "bk") += gblocks[i].bk;
        grad_of(pre + "wv") += gblocks[i].wv;
        grad_of(pre + "bv") += gblocks[i].bv;
        grad_of(pre + "wo") += gblocks[i].wo;
        grad_of(pre + "bo") += gblocks[i].bo;
        grad_of(pre + "ln2_gain") += gblocks[i].ln2_gain;
        grad_of(pre + "ln2_bias") += gblocks[i].ln2_bias;
        grad_of(pre + "ff_w1") += gblocks[i].ff_w1;
        grad_of(pre + "ff_b1") += gblocks[i].ff_b1;
        grad_of(pre + "ff_w2") += gblocks[i].ff_w2;
        grad_of(pre + "ff_b2") += gblocks[i].ff_b2;
      }
      Mat& gemb = grad_of("embedding");
      for (size_t i = 0; i < item.input.size(); ++i)
        gemb.row(item.input[i]) += dx0.row(static_cast<int>(i));
    }

    for (const Mat& g : gmats) grad_list.push_back(&g);
    adam.Step(grad_list, LearningRateAt(opt, step));
    if (progress && (step % 100 == 0 || step == opt.steps))
      *progress << "teacher: step " << step << " masked-ce "
                << loss_sum / std::max(n_masked, 1) << "\n";
  }
  return teacher;
}

double TeacherMaskedAccuracy(const TeacherModel& teacher,
                             const std::vector<TokenSeq>& refs,
                             uint64_t seed) {
  const TeacherModel::Config& cfg = teacher.cfg_;
  const ModelConfig shim = TeacherShim(cfg);
  Rng rng(seed);
  int64_t hits = 0, total = 0;
  for (const TokenSeq& ref : refs) {
    if (ref.empty()) continue;
    std::vector<TokenId> input = ref.ids;
    std::vector<int> masked;
    for (int i = 0; i < ref.size(); ++i)
      if (rng.Uniform() < cfg.mask_prob) {
        input[i] = teacher.mask_id();
        masked.push_back(i);
      }
    if (masked.empty()) continue;
    Mat x = TeacherEmbed(teacher.embedding_, input, cfg.d_model);
    x = RunBlocks(teacher.blocks_.data(), cfg.n_blocks, std::move(x), shim,
                  false, nullptr, nullptr);
    Mat states = LayerNormForward(x, teacher.ln_gain_, teacher.ln_bias_, nullptr);
    Mat logits = (states * teacher.head_w_).rowwise() + teacher.head_b_.row(0);
    for (int pos : masked) {
      int best = 0;
      for (int c = 1; c < logits.cols(); ++c)
        if (logits(pos, c) > logits(pos, best)) best = c;
      hits += best == ref.ids[pos] ? 1 : 0;
      ++total;
    }
  }
  return total > 0 ? static_cast<double>(hits) / total : 0.0;
}

}  // namespace postasr
