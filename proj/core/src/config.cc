// core/src/config.cc

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

#include "postasr/config.h"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "postasr/rng.h"

namespace postasr {

namespace {

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool ParseBool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("config key '" + key + "': bad boolean '" + v + "'");
}

std::vector<double> ParseDoubleList(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  return out;
}

std::vector<int> ParseIntList(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

template <typename T>
std::string JoinList(const std::vector<T>& v) {
  std::ostringstream out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out << ',';
    if constexpr (std::is_same_v<T, double>)
      out << FormatDouble(v[i]);
    else
      out << v[i];
  }
  return out.str();
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

void AddNoiseKeys(std::map<std::string, Setter>* table, const std::string& pre,
                  NoiseConfig CorpusSpec::*field) {
  (*table)[pre + ".p_sub"] = [field](ExperimentConfig& c, const std::string& v) {
    (c.corpus.*field).p_sub = std::stod(v);
  };
  (*table)[pre + ".p_ins"] = [field](ExperimentConfig& c, const std::string& v) {
    (c.corpus.*field).p_ins = std::stod(v);
  };
  (*table)[pre + ".p_del"] = [field](ExperimentConfig& c, const std::string& v) {
    (c.corpus.*field).p_del = std::stod(v);
  };
  (*table)[pre + ".confusion_temperature"] =
      [field](ExperimentConfig& c, const std::string& v) {
        (c.corpus.*field).confusion_temperature = std::stod(v);
      };
  (*table)[pre + ".feature_noise_sigma"] =
      [field](ExperimentConfig& c, const std::string& v) {
        (c.corpus.*field).feature_noise_sigma = std::stod(v);
      };
}

const std::map<std::string, Setter>& SetterTable() {
  static const std::map<std::string, Setter>* table = [] {
    auto* t = new std::map<std::string, Setter>;
    auto& m = *t;
    m["seed"] = [](ExperimentConfig& c, const std::string& v) {
      c.seed = std::stoull(v);
    };
    m["corpus.vocab_size"] = [](ExperimentConfig& c, const std::string& v) {
      c.corpus.vocab_size = std::stoi(v);
    };
    m["corpus.d_am"] = [](ExperimentConfig& c, const std::string& v) {
      c.corpus.d_am = std::stoi(v);
    };
    m["corpus.len_min"] = [](ExperimentConfig& c, const std::string& v) {
      c.corpus.len_min = std::stoi(v);
    };
    m["corpus.len_max"] = [](ExperimentConfig& c, const std::string& v) {
      c.corpus.len_max = std::stoi(v);
    };
    m["corpus.n_train"] = [](ExperimentConfig& c, const std::string& v) {
      c.corpus.n_train = std::stoi(v);
    };
    m["corpus.n_dev"] = [](ExperimentConfig& c, const std::string& v) {
      c.corpus.n_dev = std::stoi(v);
    };
    m["corpus.n_test"] = [](ExperimentConfig& c, const std::string& v) {
      c.corpus.n_test = std::stoi(v);
    };
    m["corpus.n_overlap_dev"] = [](ExperimentConfig& c, const std::string& v) {
      c.corpus.n_overlap_dev = std::stoi(v);
    };
    m["corpus.n_overlap_test"] = [](ExperimentConfig& c, const std::string& v) {
      c.corpus.n_overlap_test = std::stoi(v);
    };
    m["corpus.overlap_fraction"] = [](ExperimentConfig& c, const std::string& v) {
      c.corpus.overlap_fraction = std::stod(v);
    };
    m["corpus.frame_posterior_sigma"] =
        [](ExperimentConfig& c, const std::string& v) {
          c.corpus.frame_posterior_sigma = std::stod(v);
        };
    AddNoiseKeys(t, "corpus.train_noise", &CorpusSpec::train_noise);
    AddNoiseKeys(t, "corpus.eval_noise", &CorpusSpec::eval_noise);

    m["model.d_model"] = [](ExperimentConfig& c, const std::string& v) {
      c.model.d_model = std::stoi(v);
    };
    m["model.d_ff"] = [](ExperimentConfig& c, const std::string& v) {
      c.model.d_ff = std::stoi(v);
    };
    m["model.n_heads"] = [](ExperimentConfig& c, const std::string& v) {
      c.model.n_heads = std::stoi(v);
    };
    m["model.n_blocks_length"] = [](ExperimentConfig& c, const std::string& v) {
      c.model.n_blocks_length = std::stoi(v);
    };
    m["model.n_blocks_decoder"] = [](ExperimentConfig& c, const std::string& v) {
      c.model.n_blocks_decoder = std::stoi(v);
    };
    m["model.l_max"] = [](ExperimentConfig& c, const std::string& v) {
      c.model.l_max = std::stoi(v);
    };
    m["model.dropout_rate"] = [](ExperimentConfig& c, const std::string& v) {
      c.model.dropout_rate = std::stod(v);
    };
    m["model.use_acoustic"] = [](ExperimentConfig& c, const std::string& v) {
      c.model.use_features.acoustic = ParseBool(v, "model.use_acoustic");
    };
    m["model.use_word_prob"] = [](ExperimentConfig& c, const std::string& v) {
      c.model.use_features.word_prob = ParseBool(v, "model.use_word_prob");
    };
    m["model.use_duration"] = [](ExperimentConfig& c, const std::string& v) {
      c.model.use_features.duration = ParseBool(v, "model.use_duration");
    };
    m["model.distillation"] = [](ExperimentConfig& c, const std::string& v) {
      c.model.loss_flags.distillation = ParseBool(v, "model.distillation");
    };
    m["model.conf_regularization"] = [](ExperimentConfig& c,
                                        const std::string& v) {
      c.model.loss_flags.conf_regularization =
          ParseBool(v, "model.conf_regularization");
    };

    m["optim.peak_lr"] = [](ExperimentConfig& c, const std::string& v) {
      c.optim.peak_lr = std::stod(v);
    };
    m["optim.warmup_steps"] = [](ExperimentConfig& c, const std::string& v) {
      c.optim.warmup_steps = std::stoi(v);
    };
    m["optim.steps"] = [](ExperimentConfig& c, const std::string& v) {
      c.optim.steps = std::stoi(v);
    };
    m["optim.batch_size"] = [](ExperimentConfig& c, const std::string& v) {
      c.optim.batch_size = std::stoi(v);
    };
    m["optim.teacher_steps"] = [](ExperimentConfig& c, const std::string& v) {
      c.teacher_steps = std::stoi(v);
    };

    m["thresholds.t_filter"] = [](ExperimentConfig& c, const std::string& v) {
      c.thresholds.t_filter = std::stod(v);
    };
    m["thresholds.t_rej_conf"] = [](ExperimentConfig& c, const std::string& v) {
      c.thresholds.t_rej_conf = std::stod(v);
    };
    m["thresholds.t_ovlp"] = [](ExperimentConfig& c, const std::string& v) {
      c.thresholds.t_ovlp = std::stod(v);
    };
    m["thresholds.t_corr"] = [](ExperimentConfig& c, const std::string& v) {
      c.thresholds.t_corr = std::stod(v);
    };
    m["thresholds.smoothing_window"] = [](ExperimentConfig& c,
                                          const std::string& v) {
      c.thresholds.smoothing_window = std::stoi(v);
    };
    m["thresholds.level"] = [](ExperimentConfig& c, const std::string& v) {
      c.thresholds.level = RejectionLevelFromName(v);
    };
    m["thresholds.segment_min_run"] = [](ExperimentConfig& c,
                                         const std::string& v) {
      c.thresholds.segment_min_run = std::stoi(v);
    };
    m["thresholds.sequence_reject_fraction"] =
        [](ExperimentConfig& c, const std::string& v) {
          c.thresholds.sequence_reject_fraction = std::stod(v);
        };

    m["tune.t_filter"] = [](ExperimentConfig& c, const std::string& v) {
      c.grid.t_filter = ParseDoubleList(v);
    };
    m["tune.t_rej_conf"] = [](ExperimentConfig& c, const std::string& v) {
      c.grid.t_rej_conf = ParseDoubleList(v);
    };
    m["tune.t_ovlp"] = [](ExperimentConfig& c, const std::string& v) {
      c.grid.t_ovlp = ParseDoubleList(v);
    };
    m["tune.t_corr"] = [](ExperimentConfig& c, const std::string& v) {
      c.grid.t_corr = ParseDoubleList(v);
    };
    m["tune.smoothing_window"] = [](ExperimentConfig& c, const std::string& v) {
      c.grid.smoothing_window = ParseIntList(v);
    };
    return t;
  }();
  return *table;
}

}  // namespace

void ExperimentConfig::Resolve() {
  corpus.seed = Rng::MixSeed(seed, "corpus");
  corpus.train_noise.seed = Rng::MixSeed(seed, "train_noise");
  corpus.eval_noise.seed = Rng::MixSeed(seed, "eval_noise");
  model.vocab_size = corpus.vocab_size;
  model.d_am = corpus.d_am;
  model.seed = Rng::MixSeed(seed, "model");
  corpus.Validate();
  model.Validate();
  thresholds.Validate();
}

ExperimentConfig ParseExperimentConfig(std::istream& in,
                                       const std::string& origin) {
  ExperimentConfig cfg;
  const auto& table = SetterTable();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string key, value;
    if (!(ls >> key)) continue;  // blank
    if (!(ls >> value))
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": key '" + key + "' has no value");
    const auto it = table.find(key);
    if (it == table.end())
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": unknown config key '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": bad value '" + value + "' for key '" +
                                  key + "'");
    }
  }
  cfg.Resolve();
  return cfg;
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  return ParseExperimentConfig(in, path);
}

void WriteExperimentConfig(std::ostream& out, const ExperimentConfig& c) {
  out << "# postasr experiment config (resolved)\n";
  out << "seed " << c.seed << "\n\n";
  out << "corpus.vocab_size " << c.corpus.vocab_size << '\n';
  out << "corpus.d_am " << c.corpus.d_am << '\n';
  out << "corpus.len_min " << c.corpus.len_min << '\n';
  out << "corpus.len_max " << c.corpus.len_max << '\n';
  out << "corpus.n_train " << c.corpus.n_train << '\n';
  out << "corpus.n_dev " << c.corpus.n_dev << '\n';
  out << "corpus.n_test " << c.corpus.n_test << '\n';
  out << "corpus.n_overlap_dev " << c.corpus.n_overlap_dev << '\n';
  out << "corpus.n_overlap_test " << c.corpus.n_overlap_test << '\n';
  out << "corpus.overlap_fraction " << FormatDouble(c.corpus.overlap_fraction)
      << '\n';
  out << "corpus.frame_posterior_sigma "
      << FormatDouble(c.corpus.frame_posterior_sigma) << '\n';
  const auto noise = [&](const char* pre, const NoiseConfig& n) {
    out << pre << ".p_sub " << FormatDouble(n.p_sub) << '\n';
    out << pre << ".p_ins " << FormatDouble(n.p_ins) << '\n';
    out << pre << ".p_del " << FormatDouble(n.p_del) << '\n';
    out << pre << ".confusion_temperature "
        << FormatDouble(n.confusion_temperature) << '\n';
    out << pre << ".feature_noise_sigma "
        << FormatDouble(n.feature_noise_sigma) << '\n';
  };
  noise("corpus.train_noise", c.corpus.train_noise);
  noise("corpus.eval_noise", c.corpus.eval_noise);
  out << '\n';
  out << "model.d_model " << c.model.d_model << '\n';
  out << "model.d_ff " << c.model.d_ff << '\n';
  out << "model.n_heads " << c.model.n_heads << '\n';
  out << "model.n_blocks_length " << c.model.n_blocks_length << '\n';
  out << "model.n_blocks_decoder " << c.model.n_blocks_decoder << '\n';
  out << "model.l_max " << c.model.l_max << '\n';
  out << "model.dropout_rate " << FormatDouble(c.model.dropout_rate) << '\n';
  out << "model.use_acoustic " << (c.model.use_features.acoustic ? 1 : 0) << '\n';
  out << "model.use_word_prob " << (c.model.use_features.word_prob ? 1 : 0)
      << '\n';
  out << "model.use_duration " << (c.model.use_features.duration ? 1 : 0) << '\n';
  out << "model.distillation " << (c.model.loss_flags.distillation ? 1 : 0)
      << '\n';
  out << "model.conf_regularization "
      << (c.model.loss_flags.conf_regularization ? 1 : 0) << '\n';
  out << '\n';
  out << "optim.peak_lr " << FormatDouble(c.optim.peak_lr) << '\n';
  out << "optim.warmup_steps " << c.optim.warmup_steps << '\n';
  out << "optim.steps " << c.optim.steps << '\n';
  out << "optim.batch_size " << c.optim.batch_size << '\n';
  out << "optim.teacher_steps " << c.teacher_steps << '\n';
  out << '\n';
  out << "thresholds.t_filter " << FormatDouble(c.thresholds.t_filter) << '\n';
  out << "thresholds.t_rej_conf " << FormatDouble(c.thresholds.t_rej_conf)
      << '\n';
  out << "thresholds.t_ovlp " << FormatDouble(c.thresholds.t_ovlp) << '\n';
  out << "thresholds.t_corr " << FormatDouble(c.thresholds.t_corr) << '\n';
  out << "thresholds.smoothing_window " << c.thresholds.smoothing_window << '\n';
  out << "thresholds.level " << RejectionLevelName(c.thresholds.level) << '\n';
  out << "thresholds.segment_min_run " << c.thresholds.segment_min_run << '\n';
  out << "thresholds.sequence_reject_fraction "
      << FormatDouble(c.thresholds.sequence_reject_fraction) << '\n';
  out << '\n';
  out << "tune.t_filter " << JoinList(c.grid.t_filter) << '\n';
  out << "tune.t_rej_conf " << JoinList(c.grid.t_rej_conf) << '\n';
  out << "tune.t_ovlp " << JoinList(c.grid.t_ovlp) << '\n';
  out << "tune.t_corr " << JoinList(c.grid.t_corr) << '\n';
  out << "tune.smoothing_window " << JoinList(c.grid.smoothing_window) << '\n';
}

void SaveExperimentConfig(const std::string& path,
                          const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file " + path);
  WriteExperimentConfig(out, cfg);
}

Thresholds LoadThresholds(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open thresholds file " + path);
  Thresholds th;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string key, value;
    if (!(ls >> key)) continue;
    if (!(ls >> value))
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": key '" + key + "' has no value");
    if (key == "t_filter") th.t_filter = std::stod(value);
    else if (key == "t_rej_conf") th.t_rej_conf = std::stod(value);
    else if (key == "t_ovlp") th.t_ovlp = std::stod(value);
    else if (key == "t_corr") th.t_corr = std::stod(value);
    else if (key == "smoothing_window") th.smoothing_window = std::stoi(value);
    else if (key == "level") th.level = RejectionLevelFromName(value);
    else if (key == "segment_min_run") th.segment_min_run = std::stoi(value);
    else if (key == "sequence_reject_fraction")
      th.sequence_reject_fraction = std::stod(value);
    else
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": unknown thresholds key '" + key + "'");
  }
  th.Validate();
  return th;
}

void SaveThresholds(const std::string& path, const Thresholds& th) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write thresholds file " + path);
  out << "t_filter " << FormatDouble(th.t_filter) << '\n';
  out << "t_rej_conf " << FormatDouble(th.t_rej_conf) << '\n';
  out << "t_ovlp " << FormatDouble(th.t_ovlp) << '\n';
  out << "t_corr " << FormatDouble(th.t_corr) << '\n';
  out << "smoothing_window " << th.smoothing_window << '\n';
  out << "level " << RejectionLevelName(th.level) << '\n';
  out << "segment_min_run " << th.segment_min_run << '\n';
  out << "sequence_reject_fraction "
      << FormatDouble(th.sequence_reject_fraction) << '\n';
}

}  // namespace postasr
