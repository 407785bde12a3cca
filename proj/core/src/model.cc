// core/src/model.cc

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

#include "postasr/model.h"

#include <cmath>
#include <stdexcept>

#include "postasr/align.h"
#include "postasr/rng.h"

namespace postasr {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kConfDenatorEps = 1e-6;

void SoftmaxRowsInPlace(Mat* m) {
  for (int i = 0; i < m->rows(); ++i) {
    const double mx = m->row(i).maxCoeff();
    m->row(i) = (m->row(i).array() - mx).exp();
    m->row(i) /= m->row(i).sum();
  }
}

Mat SoftmaxRows(const Mat& logits) {
  Mat p = logits;
  SoftmaxRowsInPlace(&p);
  return p;
}

// -log softmax(logits_row)[target], numerically stable.
double CrossEntropyRow(const Mat& logits, int row, int target) {
  const double mx = logits.row(row).maxCoeff();
  const double lse =
      mx + std::log((logits.row(row).array() - mx).exp().sum());
  return lse - logits(row, target);
}

Mat DropoutMask(int rows, int cols, double rate, Rng* rng) {
  const double keep = 1.0 - rate;
  Mat mask(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      mask(i, j) = rng->Uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

Mat Xavier(int in, int out, Rng* rng) {
  const double a = std::sqrt(6.0 / (in + out));
  Mat m(in, out);
  for (int i = 0; i < in; ++i)
    for (int j = 0; j < out; ++j) m(i, j) = (2.0 * rng->Uniform() - 1.0) * a;
  return m;
}

}  // namespace

void ModelConfig::Validate() const {
  if (vocab_size < 2) throw std::invalid_argument("ModelConfig: vocab_size must be >= 2");
  if (d_model < 1 || d_ff < 1 || n_heads < 1 || d_am < 1)
    throw std::invalid_argument("ModelConfig: dimensions must be >= 1");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
  if (l_max < 1) throw std::invalid_argument("ModelConfig: l_max must be >= 1");
  if (n_blocks_length < 0 || n_blocks_decoder < 0)
    throw std::invalid_argument("ModelConfig: block counts must be >= 0");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("ModelConfig: dropout_rate must be in [0,1)");
}

void Parameters::ForEach(
    const std::function<void(const std::string&, Mat&)>& fn) {
  auto visit = [&](const std::string& name, Mat& m) {
    if (m.size() > 0) fn(name, m);
  };
  visit("embedding", embedding);
  visit("fuse_w", fuse_w);
  visit("fuse_b", fuse_b);
  visit("am_w", am_w);
  visit("am_b", am_b);
  for (size_t i = 0; i < blocks.size(); ++i) {
    const std::string pre = "block" + std::to_string(i) + ".";
    TransformerBlock& b = blocks[i];
    visit(pre + "ln1_gain", b.ln1_gain);
    visit(pre + "ln1_bias", b.ln1_bias);
    visit(pre + "wq", b.wq);
    visit(pre + "bq", b.bq);
    visit(pre + "wk", b.wk);
    visit(pre + "bk", b.bk);
    visit(pre + "wv", b.wv);
    visit(pre + "bv", b.bv);
    visit(pre + "wo", b.wo);
    visit(pre + "bo", b.bo);
    visit(pre + "ln2_gain", b.ln2_gain);
    visit(pre + "ln2_bias", b.ln2_bias);
    visit(pre + "ff_w1", b.ff_w1);
    visit(pre + "ff_b1", b.ff_b1);
    visit(pre + "ff_w2", b.ff_w2);
    visit(pre + "ff_b2", b.ff_b2);
  }
  visit("ln_len_gain", ln_len_gain);
  visit("ln_len_bias", ln_len_bias);
  visit("ln_dec_gain", ln_dec_gain);
  visit("ln_dec_bias", ln_dec_bias);
  visit("len_w", len_w);
  visit("len_b", len_b);
  visit("esti_w", esti_w);
  visit("esti_b", esti_b);
  visit("corr_w", corr_w);
  visit("corr_b", corr_b);
}

void Parameters::ForEach(
    const std::function<void(const std::string&, const Mat&)>& fn) const {
  const_cast<Parameters*>(this)->ForEach(
      [&](const std::string& n, Mat& m) { fn(n, m); });
}

TransformerBlock InitBlock(int d_model, int d_ff, Rng* rng) {
  TransformerBlock b;
  b.ln1_gain = Mat::Ones(1, d_model);
  b.ln1_bias = Mat::Zero(1, d_model);
  b.wq = Xavier(d_model, d_model, rng);
  b.bq = Mat::Zero(1, d_model);
  b.wk = Xavier(d_model, d_model, rng);
  b.bk = Mat::Zero(1, d_model);
  b.wv = Xavier(d_model, d_model, rng);
  b.bv = Mat::Zero(1, d_model);
  b.wo = Xavier(d_model, d_model, rng);
  b.bo = Mat::Zero(1, d_model);
  b.ln2_gain = Mat::Ones(1, d_model);
  b.ln2_bias = Mat::Zero(1, d_model);
  b.ff_w1 = Xavier(d_model, d_ff, rng);
  b.ff_b1 = Mat::Zero(1, d_ff);
  b.ff_w2 = Xavier(d_ff, d_model, rng);
  b.ff_b2 = Mat::Zero(1, d_model);
  return b;
}

Parameters InitParameters(const ModelConfig& cfg) {
  cfg.Validate();
  Rng rng(cfg.seed);
  Parameters p;
  p.embedding = Xavier(cfg.vocab_size, cfg.d_model, &rng);
  const int s = cfg.NumScalarFeatures();
  if (s > 0) {
    p.fuse_w = Xavier(cfg.d_model + s, cfg.d_model, &rng);
    p.fuse_b = Mat::Zero(1, cfg.d_model);
  }
  if (cfg.use_features.acoustic) {
    p.am_w = Xavier(cfg.d_am, cfg.d_model, &rng);
    p.am_b = Mat::Zero(1, cfg.d_model);
  }
  const int n_blocks = cfg.n_blocks_length + cfg.n_blocks_decoder;
  p.blocks.reserve(n_blocks);
  for (int i = 0; i < n_blocks; ++i)
    p.blocks.push_back(InitBlock(cfg.d_model, cfg.d_ff, &rng));
  p.ln_len_gain = Mat::Ones(1, cfg.d_model);
  p.ln_len_bias = Mat::Zero(1, cfg.d_model);
  p.ln_dec_gain = Mat::Ones(1, cfg.d_model);
  p.ln_dec_bias = Mat::Zero(1, cfg.d_model);
  p.len_w = Xavier(cfg.d_model, cfg.l_max + 1, &rng);
  p.len_b = Mat::Zero(1, cfg.l_max + 1);
  p.esti_w = Xavier(cfg.d_model, 2, &rng);
  p.esti_b = Mat::Zero(1, 2);
  p.corr_w = Xavier(cfg.d_model, cfg.vocab_size, &rng);
  p.corr_b = Mat::Zero(1, cfg.vocab_size);
  return p;
}

Parameters ZeroLike(const Parameters& like) {
  Parameters z = like;
  z.ForEach([](const std::string&, Mat& m) { m.setZero(); });
  return z;
}

Mat PositionalEncoding(int rows, int d_model) {
  Mat pe(rows, d_model);
  for (int pos = 0; pos < rows; ++pos) {
    for (int i = 0; i < d_model; i += 2) {
      const double angle =
          pos * std::exp(-std::log(10000.0) * i / d_model);
      pe(pos, i) = std::sin(angle);
      if (i + 1 < d_model) pe(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Mat LayerNormForward(const Mat& x, const Mat& gain, const Mat& bias,
                     LayerNormTrace* trace) {
  const int t = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  Mat xhat(t, d);
  Eigen::VectorXd inv_std(t);
  Mat y(t, d);
  for (int i = 0; i < t; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std(i) = is;
    xhat.row(i) = ((x.row(i).array() - mu) * is).matrix();
    y.row(i) = xhat.row(i).cwiseProduct(gain.row(0)) + bias.row(0);
  }
  if (trace) {
    trace->xhat = std::move(xhat);
    trace->inv_std = std::move(inv_std);
  }
  return y;
}

Mat LayerNormBackward(const Mat& d_out, const Mat& gain,
                      const LayerNormTrace& trace, Mat* d_gain, Mat* d_bias) {
  const int t = static_cast<int>(d_out.rows());
  const int d = static_cast<int>(d_out.cols());
  Mat dx(t, d);
  for (int i = 0; i < t; ++i) {
    const Eigen::RowVectorXd dxhat = d_out.row(i).cwiseProduct(gain.row(0));
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(trace.xhat.row(i)).mean();
    dx.row(i) = (trace.inv_std(i) *
                 (dxhat.array() - m1 - trace.xhat.row(i).array() * m2))
                    .matrix();
  }
  if (t > 0) {
    if (d_gain) *d_gain += d_out.cwiseProduct(trace.xhat).colwise().sum();
    if (d_bias) *d_bias += d_out.colwise().sum();
  }
  return dx;
}

Mat RunBlocks(const TransformerBlock* blocks, int n_blocks, Mat x,
              const ModelConfig& cfg, bool train_mode, Rng* rng,
              std::vector<BlockTrace>* traces) {
  const int d = cfg.d_model;
  const int h = cfg.n_heads;
  const int dh = d / h;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool dropout = train_mode && cfg.dropout_rate > 0.0;

  for (int bi = 0; bi < n_blocks; ++bi) {
    const TransformerBlock& b = blocks[bi];
    const int t = static_cast<int>(x.rows());
    BlockTrace tr;
    if (traces) tr.x_in = x;

    LayerNormTrace ln1;
    Mat z1 = LayerNormForward(x, b.ln1_gain, b.ln1_bias, traces ? &ln1 : nullptr);
    Mat q = (z1 * b.wq).rowwise() + b.bq.row(0);
    Mat k = (z1 * b.wk).rowwise() + b.bk.row(0);
    Mat v = (z1 * b.wv).rowwise() + b.bv.row(0);
    Mat ctx(t, d);
    std::vector<Mat> probs;
    if (traces) probs.reserve(h);
    for (int hi = 0; hi < h; ++hi) {
      Mat scores =
          q.middleCols(hi * dh, dh) * k.middleCols(hi * dh, dh).transpose();
      scores *= scale;
      SoftmaxRowsInPlace(&scores);
      ctx.middleCols(hi * dh, dh) = scores * v.middleCols(hi * dh, dh);
      if (traces) probs.push_back(std::move(scores));
    }
    Mat attn = (ctx * b.wo).rowwise() + b.bo.row(0);
    Mat attn_mask;
    if (dropout) {
      attn_mask = DropoutMask(t, d, cfg.dropout_rate, rng);
      attn = attn.cwiseProduct(attn_mask);
    }
    Mat x_mid = x + attn;

    LayerNormTrace ln2;
    Mat z2 =
        LayerNormForward(x_mid, b.ln2_gain, b.ln2_bias, traces ? &ln2 : nullptr);
    Mat ff_pre = (z2 * b.ff_w1).rowwise() + b.ff_b1.row(0);
    Mat ff_act = ff_pre.cwiseMax(0.0);
    Mat ff = (ff_act * b.ff_w2).rowwise() + b.ff_b2.row(0);
    Mat ff_mask;
    if (dropout) {
      ff_mask = DropoutMask(t, d, cfg.dropout_rate, rng);
      ff = ff.cwiseProduct(ff_mask);
    }
    Mat x_out = x_mid + ff;

    if (traces) {
      tr.ln1 = std::move(ln1);
      tr.z1 = std::move(z1);
      tr.q = std::move(q);
      tr.k = std::move(k);
      tr.v = std::move(v);
      tr.attn_probs = std::move(probs);
      tr.ctx = std::move(ctx);
      tr.attn_mask = std::move(attn_mask);
      tr.x_mid = std::move(x_mid);
      tr.ln2 = std::move(ln2);
      tr.z2 = std::move(z2);
      tr.ff_pre = std::move(ff_pre);
      tr.ff_act = std::move(ff_act);
      tr.ff_mask = std::move(ff_mask);
      traces->push_back(std::move(tr));
    }
    x = std::move(x_out);
  }
  return x;
}

Mat BlocksBackward(const TransformerBlock* blocks,
                   TransformerBlock* grad_blocks, int n_blocks,
                   const std::vector<BlockTrace>& traces, const Mat& d_out,
                   const ModelConfig& cfg) {
  const int d = cfg.d_model;
  const int h = cfg.n_heads;
  const int dh = d / h;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat dx = d_out;
  for (int bi = n_blocks - 1; bi >= 0; --bi) {
    const TransformerBlock& b = blocks[bi];
    TransformerBlock& g = grad_blocks[bi];
    const BlockTrace& tr = traces[bi];
    const int t = static_cast<int>(dx.rows());
    if (t == 0) continue;

    // x_out = x_mid + dropout(ff)
    Mat dff = tr.ff_mask.size() > 0 ? dx.cwiseProduct(tr.ff_mask).eval() : dx;
    g.ff_w2 += tr.ff_act.transpose() * dff;
    g.ff_b2 += dff.colwise().sum();
    Mat dact = dff * b.ff_w2.transpose();
    Mat dpre =
        ((tr.ff_pre.array() > 0.0).cast<double>() * dact.array()).matrix();
    g.ff_w1 += tr.z2.transpose() * dpre;
    g.ff_b1 += dpre.colwise().sum();
    Mat dz2 = dpre * b.ff_w1.transpose();
    Mat dx_mid =
        dx + LayerNormBackward(dz2, b.ln2_gain, tr.ln2, &g.ln2_gain, &g.ln2_bias);

    // x_mid = x_in + dropout(attn)
    Mat dattn =
        tr.attn_mask.size() > 0 ? dx_mid.cwiseProduct(tr.attn_mask).eval() : dx_mid;
    g.wo += tr.ctx.transpose() * dattn;
    g.bo += dattn.colwise().sum();
    Mat dctx = dattn * b.wo.transpose();

    Mat dq(t, d), dk(t, d), dv(t, d);
    for (int hi = 0; hi < h; ++hi) {
      const auto p = tr.attn_probs[hi];
      const auto dctx_h = dctx.middleCols(hi * dh, dh);
      const auto v_h = tr.v.middleCols(hi * dh, dh);
      Mat dp = dctx_h * v_h.transpose();
      dv.middleCols(hi * dh, dh) = p.transpose() * dctx_h;
      const Eigen::VectorXd r = (dp.array() * p.array()).rowwise().sum();
      Mat ds = (p.array() * (dp.array().colwise() - r.array())).matrix();
      dq.middleCols(hi * dh, dh) =
          ds * tr.k.middleCols(hi * dh, dh) * scale;
      dk.middleCols(hi * dh, dh) =
          ds.transpose() * tr.q.middleCols(hi * dh, dh) * scale;
    }
    g.wq += tr.z1.transpose() * dq;
    g.bq += dq.colwise().sum();
    g.wk += tr.z1.transpose() * dk;
    g.bk += dk.colwise().sum();
    g.wv += tr.z1.transpose() * dv;
    g.bv += dv.colwise().sum();
    Mat dz1 = dq * b.wq.transpose() + dk * b.wk.transpose() +
              dv * b.wv.transpose();
    dx = dx_mid +
         LayerNormBackward(dz1, b.ln1_gain, tr.ln1, &g.ln1_gain, &g.ln1_bias);
  }
  return dx;
}

namespace {

// Shared forward for both branches: embedding lookup, optional scalar fusion,
// optional acoustic projection, position encoding.
Mat FuseForward(const std::vector<TokenId>& tokens,
                const std::vector<double>& word_prob,
                const std::vector<int>& duration,
                const std::vector<std::vector<double>>& acoustic,
                const Parameters& p, const ModelConfig& cfg,
                bool add_positions, FuseTrace* trace) {
  const int t = static_cast<int>(tokens.size());
  const int d = cfg.d_model;
  Mat e(t, d);
  for (int i = 0; i < t; ++i) {
    if (tokens[i] < 0 || tokens[i] >= cfg.vocab_size)
      throw std::invalid_argument("FuseFeatures: token id out of vocabulary");
    e.row(i) = p.embedding.row(tokens[i]);
  }

  const int s = cfg.NumScalarFeatures();
  Mat scalars(t, s);
  if (s > 0) {
    if (cfg.use_features.word_prob &&
        static_cast<int>(word_prob.size()) != t)
      throw std::invalid_argument("FuseFeatures: word_prob length mismatch");
    if (cfg.use_features.duration && static_cast<int>(duration.size()) != t)
      throw std::invalid_argument("FuseFeatures: duration length mismatch");
    int c = 0;
    if (cfg.use_features.word_prob) {
      for (int i = 0; i < t; ++i) scalars(i, c) = word_prob[i];
      ++c;
    }
    if (cfg.use_features.duration) {
      for (int i = 0; i < t; ++i)
        scalars(i, c) = std::log(static_cast<double>(duration[i]));
      ++c;
    }
  }

  Mat fused;
  if (s > 0) {
    Mat x(t, d + s);
    x << e, scalars;
    fused = (x * p.fuse_w).rowwise() + p.fuse_b.row(0);
  } else {
    fused = std::move(e);
  }

  Mat am(t, cfg.d_am);
  if (cfg.use_features.acoustic) {
    if (static_cast<int>(acoustic.size()) != t)
      throw std::invalid_argument("FuseFeatures: acoustic length mismatch");
    for (int i = 0; i < t; ++i) {
      if (static_cast<int>(acoustic[i].size()) != cfg.d_am)
        throw std::invalid_argument("FuseFeatures: acoustic dim mismatch");
      for (int k = 0; k < cfg.d_am; ++k) am(i, k) = acoustic[i][k];
    }
    fused += (am * p.am_w).rowwise() + p.am_b.row(0);
  }

  if (add_positions && t > 0) fused += PositionalEncoding(t, d);

  if (trace) {
    trace->tokens = tokens;
    trace->scalar_input = s > 0 ? scalars : Mat();
    trace->am_input = cfg.use_features.acoustic ? std::move(am) : Mat();
  }
  return fused;
}

void FuseBackward(const FuseTrace& tr, const Mat& d_fused,
                  const Parameters& p, const ModelConfig& cfg,
                  Parameters* grad) {
  const int t = static_cast<int>(tr.tokens.size());
  if (t == 0) return;
  const int d = cfg.d_model;
  const int s = cfg.NumScalarFeatures();

  if (cfg.use_features.acoustic) {
    grad->am_w += tr.am_input.transpose() * d_fused;
    grad->am_b += d_fused.colwise().sum();
  }

  Mat de;
  if (s > 0) {
    Mat x(t, d + s);
    for (int i = 0; i < t; ++i) {
      x.row(i).head(d) = p.embedding.row(tr.tokens[i]);
      x.row(i).tail(s) = tr.scalar_input.row(i);
    }
    grad->fuse_w += x.transpose() * d_fused;
    grad->fuse_b += d_fused.colwise().sum();
    de = (d_fused * p.fuse_w.transpose()).leftCols(d);
  } else {
    de = d_fused;
  }
  for (int i = 0; i < t; ++i)
    grad->embedding.row(tr.tokens[i]) += de.row(i);
}

}  // namespace

Mat FuseFeatures(const Sample& sample, const Parameters& p,
                 const ModelConfig& cfg, bool add_positions) {
  return FuseForward(sample.hyp.ids, sample.word_prob, sample.duration,
                     sample.acoustic, p, cfg, add_positions, nullptr);
}

Mat PredictLengths(const Mat& fused, const Parameters& p,
                   const ModelConfig& cfg) {
  Mat x = RunBlocks(p.blocks.data(), cfg.n_blocks_length, fused, cfg, false,
                    nullptr, nullptr);
  Mat states = LayerNormForward(x, p.ln_len_gain, p.ln_len_bias, nullptr);
  return (states * p.len_w).rowwise() + p.len_b.row(0);
}

std::vector<int> ChooseLengths(const Mat& length_logits) {
  std::vector<int> lengths(length_logits.rows());
  for (int i = 0; i < length_logits.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < length_logits.cols(); ++c)
      if (length_logits(i, c) > length_logits(i, best)) best = c;
    lengths[i] = best;
  }
  return lengths;
}

Sample AdjustSample(const Sample& sample, const std::vector<int>& lengths) {
  if (static_cast<int>(lengths.size()) != sample.hyp.size())
    throw std::invalid_argument("AdjustSample: lengths/hyp size mismatch");
  Sample out;
  out.ref = sample.ref;
  out.utterance_id = sample.utterance_id;
  out.hyp = ExpandByLengths(sample.hyp, lengths);
  const auto dup = [&](const auto& src, auto& dst) {
    for (int i = 0; i < sample.hyp.size(); ++i)
      for (int k = 0; k < lengths[i]; ++k) dst.push_back(src[i]);
  };
  if (!sample.word_prob.empty()) dup(sample.word_prob, out.word_prob);
  if (!sample.duration.empty()) dup(sample.duration, out.duration);
  if (!sample.acoustic.empty()) dup(sample.acoustic, out.acoustic);
  if (!sample.ovlp_prob.empty()) dup(sample.ovlp_prob, out.ovlp_prob);
  return out;
}

DecodeOutputs Decode(const Mat& fused_adjusted, const Parameters& p,
                     const ModelConfig& cfg) {
  Mat x = RunBlocks(p.blocks.data() + cfg.n_blocks_length,
                    cfg.n_blocks_decoder, fused_adjusted, cfg, false, nullptr,
                    nullptr);
  DecodeOutputs out;
  out.decoder_states = LayerNormForward(x, p.ln_dec_gain, p.ln_dec_bias, nullptr);
  out.conf_logits = (out.decoder_states * p.esti_w).rowwise() + p.esti_b.row(0);
  out.corr_logits = (out.decoder_states * p.corr_w).rowwise() + p.corr_b.row(0);
  return out;
}

std::vector<double> ConfidenceScores(const Mat& conf_logits) {
  std::vector<double> scores(conf_logits.rows());
  for (int i = 0; i < conf_logits.rows(); ++i) {
    const double mx = std::max(conf_logits(i, 0), conf_logits(i, 1));
    const double e0 = std::exp(conf_logits(i, 0) - mx);
    const double e1 = std::exp(conf_logits(i, 1) - mx);
    scores[i] = e1 / (e0 + e1);
  }
  return scores;
}

std::vector<ForwardOutputs> TrainForward(
    const std::vector<const Sample*>& samples,
    const std::vector<const TrainingTargets*>& targets, const Parameters& p,
    const ModelConfig& cfg, bool train_mode, Rng* dropout_rng,
    BatchTrace* trace) {
  if (samples.size() != targets.size())
    throw std::invalid_argument("TrainForward: samples/targets size mismatch");
  if (train_mode && cfg.dropout_rate > 0.0 && dropout_rng == nullptr)
    throw std::invalid_argument("TrainForward: dropout requires an rng");

  std::vector<ForwardOutputs> outputs(samples.size());
  if (trace) {
    trace->utts.assign(samples.size(), {});
    trace->train_mode = train_mode;
  }

  for (size_t u = 0; u < samples.size(); ++u) {
    const Sample& s = *samples[u];
    const TrainingTargets& t = *targets[u];
    UtteranceTrace* ut = trace ? &trace->utts[u] : nullptr;

    // Length branch on the raw hypothesis.
    Mat fused_len =
        FuseForward(s.hyp.ids, s.word_prob, s.duration, s.acoustic, p, cfg,
                    true, ut ? &ut->fuse_len : nullptr);
    Mat x = RunBlocks(p.blocks.data(), cfg.n_blocks_length, fused_len, cfg,
                      train_mode, dropout_rng,
                      ut ? &ut->len_stack.blocks : nullptr);
    Mat len_states = LayerNormForward(x, p.ln_len_gain, p.ln_len_bias,
                                      ut ? &ut->len_stack.ln_final : nullptr);
    outputs[u].length_logits = (len_states * p.len_w).rowwise() + p.len_b.row(0);

    // Decoder branch on the gold-adjusted sequence (teacher forcing).
    const Sample adj = AdjustSample(s, t.length_targets);
    Mat fused_dec =
        FuseForward(adj.hyp.ids, adj.word_prob, adj.duration, adj.acoustic, p,
                    cfg, true, ut ? &ut->fuse_dec : nullptr);
    Mat y = RunBlocks(p.blocks.data() + cfg.n_blocks_length,
                      cfg.n_blocks_decoder, fused_dec, cfg, train_mode,
                      dropout_rng, ut ? &ut->dec_stack.blocks : nullptr);
    Mat dec_states = LayerNormForward(y, p.ln_dec_gain, p.ln_dec_bias,
                                      ut ? &ut->dec_stack.ln_final : nullptr);
    outputs[u].conf_logits = (dec_states * p.esti_w).rowwise() + p.esti_b.row(0);
    outputs[u].corr_logits = (dec_states * p.corr_w).rowwise() + p.corr_b.row(0);
    outputs[u].decoder_states = std::move(dec_states);

    if (ut) {
      ut->fused_len = std::move(fused_len);
      ut->len_states = std::move(len_states);
      ut->fused_dec = std::move(fused_dec);
    }
  }
  return outputs;
}

std::vector<std::vector<double>> ConfidenceWeights(
    const std::vector<std::vector<double>>& conf_scores, double* conf_mean,
    int* clamp_events) {
  int64_t n = 0;
  double sum = 0.0;
  for (const auto& utt : conf_scores) {
    n += static_cast<int64_t>(utt.size());
    for (double c : utt) sum += c;
  }
  const double mean = n > 0 ? sum / n : 0.0;
  if (conf_mean) *conf_mean = mean;
  double denom = 1.0 - mean;
  if (denom < kConfDenatorEps) {
    denom = kConfDenatorEps;
    if (clamp_events) ++*clamp_events;
  }
  std::vector<std::vector<double>> weights(conf_scores.size());
  for (size_t u = 0; u < conf_scores.size(); ++u) {
    weights[u].resize(conf_scores[u].size());
    for (size_t i = 0; i < conf_scores[u].size(); ++i)
      weights[u][i] = (1.0 - conf_scores[u][i]) / denom;
  }
  return weights;
}

LossBreakdown ComputeLosses(const std::vector<ForwardOutputs>& outputs,
                            const std::vector<const TrainingTargets*>& targets,
                            const std::vector<Mat>* teacher_states,
                            const ModelConfig& cfg, const LossMask& mask,
                            const std::vector<std::vector<double>>*
                                frozen_conf_weights,
                            LossAux* aux) {
  if (outputs.size() != targets.size())
    throw std::invalid_argument("ComputeLosses: outputs/targets size mismatch");
  if (mask.dist && teacher_states == nullptr)
    throw std::invalid_argument(
        "ComputeLosses: distillation enabled but no teacher states");
  if (!mask.dist && teacher_states != nullptr)
    throw std::invalid_argument(
        "ComputeLosses: teacher states given but distillation disabled");

  int64_t n_len = 0, n_adj = 0;
  for (size_t u = 0; u < outputs.size(); ++u) {
    n_len += outputs[u].length_logits.rows();
    n_adj += outputs[u].conf_logits.rows();
  }

  // Estimator scores; inputs to the per-token regularization weights.
  std::vector<std::vector<double>> conf_scores(outputs.size());
  for (size_t u = 0; u < outputs.size(); ++u)
    conf_scores[u] = ConfidenceScores(outputs[u].conf_logits);

  double conf_mean = 0.0;
  int clamp_events = 0;
  std::vector<std::vector<double>> weights;
  const std::vector<std::vector<double>>* w = frozen_conf_weights;
  if (mask.conf && w == nullptr) {
    weights = ConfidenceWeights(conf_scores, &conf_mean, &clamp_events);
    w = &weights;
  }

  LossBreakdown loss;
  for (size_t u = 0; u < outputs.size(); ++u) {
    const ForwardOutputs& o = outputs[u];
    const TrainingTargets& t = *targets[u];
    const int t_hyp = static_cast<int>(o.length_logits.rows());
    const int t_adj = static_cast<int>(o.conf_logits.rows());
    if (static_cast<int>(t.length_targets.size()) != t_hyp ||
        static_cast<int>(t.correction_targets.size()) != t_adj)
      throw std::invalid_argument("ComputeLosses: target shapes mismatch");

    if (mask.leng)
      for (int i = 0; i < t_hyp; ++i)
        loss.l_leng += CrossEntropyRow(o.length_logits, i, t.length_targets[i]);
    if (mask.esti)
      for (int i = 0; i < t_adj; ++i)
        loss.l_esti += CrossEntropyRow(o.conf_logits, i, t.confidence_labels[i]);
    if (mask.corr)
      for (int i = 0; i < t_adj; ++i)
        loss.l_corr += CrossEntropyRow(o.corr_logits, i, t.correction_targets[i]);
    if (mask.conf)
      for (int i = 0; i < t_adj; ++i)
        loss.l_conf += (*w)[u][i] *
                       CrossEntropyRow(o.corr_logits, i, t.correction_targets[i]);
    if (mask.dist && t_adj > 0) {
      const Mat& ts = (*teacher_states)[u];
      if (ts.rows() != t_adj || ts.cols() != cfg.d_model)
        throw std::invalid_argument("ComputeLosses: teacher state shape mismatch");
      loss.l_dist += (o.decoder_states - ts).squaredNorm();
    }
  }

  if (n_len > 0) loss.l_leng /= static_cast<double>(n_len);
  if (n_adj > 0) {
    loss.l_esti /= static_cast<double>(n_adj);
    loss.l_corr /= static_cast<double>(n_adj);
    loss.l_conf /= static_cast<double>(n_adj);
    loss.l_dist /= static_cast<double>(n_adj) * cfg.d_model;
  }
  loss.l_total = loss.l_leng + loss.l_esti + loss.l_corr + loss.l_dist +
                 loss.l_conf;

  if (aux) {
    aux->conf_scores = std::move(conf_scores);
    aux->conf_weights = w != nullptr ? *w : std::vector<std::vector<double>>{};
    aux->conf_mean = conf_mean;
    aux->n_length_tokens = n_len;
    aux->n_adjusted_tokens = n_adj;
    aux->denom_clamp_events = clamp_events;
  }
  return loss;
}

Parameters Backward(const BatchTrace& trace,
                    const std::vector<ForwardOutputs>& outputs,
                    const std::vector<const TrainingTargets*>& targets,
                    const std::vector<Mat>* teacher_states,
                    const Parameters& p, const ModelConfig& cfg,
                    const LossMask& mask, const LossAux& aux) {
  if (trace.utts.size() != outputs.size())
    throw std::invalid_argument("Backward: trace/outputs size mismatch");
  Parameters grad = ZeroLike(p);
  const double n_len = static_cast<double>(aux.n_length_tokens);
  const double n_adj = static_cast<double>(aux.n_adjusted_tokens);

  for (size_t u = 0; u < outputs.size(); ++u) {
    const ForwardOutputs& o = outputs[u];
    const TrainingTargets& t = *targets[u];
    const UtteranceTrace& ut = trace.utts[u];
    const int t_hyp = static_cast<int>(o.length_logits.rows());
    const int t_adj = static_cast<int>(o.conf_logits.rows());

    // Length branch.
    if (t_hyp > 0) {
      Mat dlogits = Mat::Zero(t_hyp, cfg.l_max + 1);
      if (mask.leng && n_len > 0) {
        dlogits = SoftmaxRows(o.length_logits);
        for (int i = 0; i < t_hyp; ++i) dlogits(i, t.length_targets[i]) -= 1.0;
        dlogits /= n_len;
      }
      grad.len_w += ut.len_states.transpose() * dlogits;
      grad.len_b += dlogits.colwise().sum();
      Mat dstates = dlogits * p.len_w.transpose();
      Mat dx = LayerNormBackward(dstates, p.ln_len_gain, ut.len_stack.ln_final,
                                 &grad.ln_len_gain, &grad.ln_len_bias);
      Mat dfused =
          BlocksBackward(p.blocks.data(), grad.blocks.data(),
                         cfg.n_blocks_length, ut.len_stack.blocks, dx, cfg);
      FuseBackward(ut.fuse_len, dfused, p, cfg, &grad);
    }

    // Decoder branch.
    if (t_adj > 0) {
      Mat dconf = Mat::Zero(t_adj, 2);
      if (mask.esti && n_adj > 0) {
        dconf = SoftmaxRows(o.conf_logits);
        for (int i = 0; i < t_adj; ++i) dconf(i, t.confidence_labels[i]) -= 1.0;
        dconf /= n_adj;
      }
      Mat dcorr = Mat::Zero(t_adj, cfg.vocab_size);
      if ((mask.corr || mask.conf) && n_adj > 0) {
        const Mat sm = SoftmaxRows(o.corr_logits);
        for (int i = 0; i < t_adj; ++i) {
          double coeff = mask.corr ? 1.0 : 0.0;
          // The regularization weight is a constant: no gradient flows into
          // the estimator through it.
          if (mask.conf) coeff += aux.conf_weights[u][i];
          dcorr.row(i) = coeff / n_adj * sm.row(i);
          dcorr(i, t.correction_targets[i]) -= coeff / n_adj;
        }
      }
      Mat dstates = dconf * p.esti_w.transpose() + dcorr * p.corr_w.transpose();
      if (mask.dist && n_adj > 0)
        dstates += (2.0 / (n_adj * cfg.d_model)) *
                   (o.decoder_states - (*teacher_states)[u]);
      grad.esti_w += o.decoder_states.transpose() * dconf;
      grad.esti_b += dconf.colwise().sum();
      grad.corr_w += o.decoder_states.transpose() * dcorr;
      grad.corr_b += dcorr.colwise().sum();
      Mat dx = LayerNormBackward(dstates, p.ln_dec_gain, ut.dec_stack.ln_final,
                                 &grad.ln_dec_gain, &grad.ln_dec_bias);
      Mat dfused = BlocksBackward(p.blocks.data() + cfg.n_blocks_length,
                                  grad.blocks.data() + cfg.n_blocks_length,
                                  cfg.n_blocks_decoder, ut.dec_stack.blocks,
                                  dx, cfg);
      FuseBackward(ut.fuse_dec, dfused, p, cfg, &grad);
    }
  }

  grad.ForEach([](const std::string& name, Mat& m) {
    if (!m.allFinite())
      throw std::runtime_error("Backward: non-finite gradient in " + name);
  });
  return grad;
}

}  // namespace postasr
