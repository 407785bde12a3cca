// core/src/checkpoint.cc

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

#include "postasr/checkpoint.h"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace postasr {

namespace {

constexpr const char* kModelMagic = "postasr-checkpoint v1";
constexpr const char* kTeacherMagic = "postasr-teacher v1";

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void WriteMat(std::ostream& out, const std::string& name, const Mat& m) {
  out << "param " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << FormatDouble(m(i, j));
    }
    out << '\n';
  }
}

class LineReader {
 public:
  LineReader(std::istream& in, const std::string& path) : in_(in), path_(path) {}

  std::string Next() {
    std::string line;
    if (!std::getline(in_, line))
      throw std::runtime_error(path_ + ": unexpected end of file at line " +
                               std::to_string(line_no_ + 1));
    ++line_no_;
    return line;
  }

  int line_no() const { return line_no_; }

 private:
  std::istream& in_;
  std::string path_;
  int line_no_ = 0;
};

void ReadMatInto(LineReader* reader, const std::string& expected_name,
                 Mat* m, const std::string& path) {
  std::istringstream head(reader->Next());
  std::string tag, name;
  long rows = 0, cols = 0;
  head >> tag >> name >> rows >> cols;
  if (tag != "param" || name != expected_name)
    throw std::runtime_error(path + ": expected parameter block '" +
                             expected_name + "', found '" + name + "'");
  if (rows != m->rows() || cols != m->cols())
    throw std::runtime_error(path + ": parameter '" + name + "' has shape " +
                             std::to_string(rows) + "x" + std::to_string(cols) +
                             ", config implies " + std::to_string(m->rows()) +
                             "x" + std::to_string(m->cols()));
  for (long i = 0; i < rows; ++i) {
    std::istringstream row(reader->Next());
    for (long j = 0; j < cols; ++j)
      if (!(row >> (*m)(i, j)))
        throw std::runtime_error(path + ": short row in parameter '" + name +
                                 "' at line " + std::to_string(reader->line_no()));
  }
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues ReadHeader(LineReader* reader, const std::string& path) {
  KeyValues kv;
  for (;;) {
    const std::string line = reader->Next();
    if (line == "params") return kv;
    const auto space = line.find(' ');
    if (space == std::string::npos)
      throw std::runtime_error(path + ": malformed header line '" + line + "'");
    kv.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
}

}  // namespace

void SaveCheckpoint(const std::string& path, const ModelConfig& cfg,
                    const Parameters& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("SaveCheckpoint: cannot open " + path);
  out << kModelMagic << '\n';
  out << "vocab_size " << cfg.vocab_size << '\n';
  out << "d_model " << cfg.d_model << '\n';
  out << "d_ff " << cfg.d_ff << '\n';
  out << "n_heads " << cfg.n_heads << '\n';
  out << "n_blocks_length " << cfg.n_blocks_length << '\n';
  out << "n_blocks_decoder " << cfg.n_blocks_decoder << '\n';
  out << "d_am " << cfg.d_am << '\n';
  out << "l_max " << cfg.l_max << '\n';
  out << "use_acoustic " << (cfg.use_features.acoustic ? 1 : 0) << '\n';
  out << "use_word_prob " << (cfg.use_features.word_prob ? 1 : 0) << '\n';
  out << "use_duration " << (cfg.use_features.duration ? 1 : 0) << '\n';
  out << "distillation " << (cfg.loss_flags.distillation ? 1 : 0) << '\n';
  out << "conf_regularization " << (cfg.loss_flags.conf_regularization ? 1 : 0)
      << '\n';
  out << "dropout_rate " << FormatDouble(cfg.dropout_rate) << '\n';
  out << "seed " << cfg.seed << '\n';
  out << "params\n";
  params.ForEach([&](const std::string& name, const Mat& m) {
    WriteMat(out, name, m);
  });
  out << "end\n";
  if (!out) throw std::runtime_error("SaveCheckpoint: write failed for " + path);
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("LoadCheckpoint: cannot open " + path);
  LineReader reader(in, path);
  const std::string magic = reader.Next();
  if (magic != kModelMagic)
    throw std::runtime_error(path + ": checkpoint version mismatch: found '" +
                             magic + "', this build reads '" + kModelMagic +
                             "'");
  const KeyValues kv = ReadHeader(&reader, path);
  auto get = [&](const std::string& key) -> std::string {
    for (const auto& [k, v] : kv)
      if (k == key) return v;
    throw std::runtime_error(path + ": missing header key '" + key + "'");
  };

  Checkpoint ckpt;
  ModelConfig& cfg = ckpt.cfg;
  cfg.vocab_size = std::stoi(get("vocab_size"));
  cfg.d_model = std::stoi(get("d_model"));
  cfg.d_ff = std::stoi(get("d_ff"));
  cfg.n_heads = std::stoi(get("n_heads"));
  cfg.n_blocks_length = std::stoi(get("n_blocks_length"));
  cfg.n_blocks_decoder = std::stoi(get("n_blocks_decoder"));
  cfg.d_am = std::stoi(get("d_am"));
  cfg.l_max = std::stoi(get("l_max"));
  cfg.use_features.acoustic = get("use_acoustic") == "1";
  cfg.use_features.word_prob = get("use_word_prob") == "1";
  cfg.use_features.duration = get("use_duration") == "1";
  cfg.loss_flags.distillation = get("distillation") == "1";
  cfg.loss_flags.conf_regularization = get("conf_regularization") == "1";
  cfg.dropout_rate = std::stod(get("dropout_rate"));
  cfg.seed = std::stoull(get("seed"));
  cfg.Validate();

  ckpt.params = InitParameters(cfg);  // shapes; contents replaced below
  ckpt.params.ForEach([&](const std::string& name, Mat& m) {
    ReadMatInto(&reader, name, &m, path);
  });
  if (reader.Next() != "end")
    throw std::runtime_error(path + ": missing end marker");
  return ckpt;
}

void SaveTeacher(const std::string& path, const TeacherModel& teacher) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("SaveTeacher: cannot open " + path);
  const TeacherModel::Config& cfg = teacher.config();
  out << kTeacherMagic << '\n';
  out << "vocab_size " << cfg.vocab_size << '\n';
  out << "d_model " << cfg.d_model << '\n';
  out << "d_ff " << cfg.d_ff << '\n';
  out << "n_heads " << cfg.n_heads << '\n';
  out << "n_blocks " << cfg.n_blocks << '\n';
  out << "mask_prob " << FormatDouble(cfg.mask_prob) << '\n';
  out << "seed " << cfg.seed << '\n';
  out << "params\n";
  const_cast<TeacherModel&>(teacher).ForEach(
      [&](const std::string& name, Mat& m) { WriteMat(out, name, m); });
  out << "end\n";
  if (!out) throw std::runtime_error("SaveTeacher: write failed for " + path);
}

TeacherModel LoadTeacher(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("LoadTeacher: cannot open " + path);
  LineReader reader(in, path);
  const std::string magic = reader.Next();
  if (magic != kTeacherMagic)
    throw std::runtime_error(path + ": checkpoint version mismatch: found '" +
                             magic + "', this build reads '" + kTeacherMagic +
                             "'");
  const KeyValues kv = ReadHeader(&reader, path);
  auto get = [&](const std::string& key) -> std::string {
    for (const auto& [k, v] : kv)
      if (k == key) return v;
    throw std::runtime_error(path + ": missing header key '" + key + "'");
  };
  TeacherModel::Config cfg;
  cfg.vocab_size = std::stoi(get("vocab_size"));
  cfg.d_model = std::stoi(get("d_model"));
  cfg.d_ff = std::stoi(get("d_ff"));
  cfg.n_heads = std::stoi(get("n_heads"));
  cfg.n_blocks = std::stoi(get("n_blocks"));
  cfg.mask_prob = std::stod(get("mask_prob"));
  cfg.seed = std::stoull(get("seed"));

  TeacherModel teacher(cfg);
  teacher.ForEach([&](const std::string& name, Mat& m) {
    ReadMatInto(&reader, name, &m, path);
  });
  if (reader.Next() != "end")
    throw std::runtime_error(path + ": missing end marker");
  return teacher;
}

}  // namespace postasr
