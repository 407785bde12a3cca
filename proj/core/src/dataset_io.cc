// core/src/dataset_io.cc

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

#include "postasr/dataset_io.h"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace postasr {

namespace {

using nlohmann::json;

json TokenSeqToJson(const TokenSeq& seq) {
  json j;
  j["ids"] = seq.ids;
  if (!seq.display.empty()) j["display"] = seq.display;
  return j;
}

TokenSeq TokenSeqFromJson(const json& j, int line, const char* field) {
  TokenSeq seq;
  if (!j.is_object() || !j.contains("ids") || !j["ids"].is_array())
    throw std::runtime_error("dataset line " + std::to_string(line) +
                             ": field '" + field + "' is not a token sequence");
  seq.ids = j["ids"].get<std::vector<TokenId>>();
  if (j.contains("display")) {
    seq.display = j["display"].get<std::vector<std::string>>();
    if (seq.display.size() != seq.ids.size())
      throw std::runtime_error("dataset line " + std::to_string(line) +
                               ": field '" + field +
                               "' display/ids length mismatch");
  }
  return seq;
}

template <typename T>
T GetField(const json& j, const char* field, int line) {
  if (!j.contains(field))
    throw std::runtime_error("dataset line " + std::to_string(line) +
                             ": missing field '" + field + "'");
  try {
    return j.at(field).get<T>();
  } catch (const json::exception&) {
    throw std::runtime_error("dataset line " + std::to_string(line) +
                             ": field '" + field + "' has the wrong type");
  }
}

}  // namespace

void WriteDataset(const std::vector<Sample>& samples,
                  const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("WriteDataset: cannot open " + path);
  for (const Sample& s : samples) {
    json j;
    j["utterance_id"] = s.utterance_id;
    j["hyp"] = TokenSeqToJson(s.hyp);
    j["ref"] = TokenSeqToJson(s.ref);
    j["word_prob"] = s.word_prob;
    j["duration"] = s.duration;
    j["acoustic"] = s.acoustic;
    j["ovlp_prob"] = s.ovlp_prob;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("WriteDataset: write failed for " + path);
}

std::vector<Sample> ReadDataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ReadDataset: cannot open " + path);

  std::vector<Sample> samples;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded())
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": not valid JSON");
    Sample s;
    s.utterance_id = GetField<std::string>(j, "utterance_id", line_no);
    s.hyp = TokenSeqFromJson(j.contains("hyp") ? j["hyp"] : json(), line_no, "hyp");
    s.ref = TokenSeqFromJson(j.contains("ref") ? j["ref"] : json(), line_no, "ref");
    s.word_prob = GetField<std::vector<double>>(j, "word_prob", line_no);
    s.duration = GetField<std::vector<int>>(j, "duration", line_no);
    s.acoustic = GetField<std::vector<std::vector<double>>>(j, "acoustic", line_no);
    s.ovlp_prob = GetField<std::vector<double>>(j, "ovlp_prob", line_no);

    const size_t n = s.hyp.ids.size();
    if (s.word_prob.size() != n || s.duration.size() != n ||
        s.acoustic.size() != n || s.ovlp_prob.size() != n)
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": per-token field lengths do not match hyp");
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace postasr
