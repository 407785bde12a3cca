// core/include/postasr/config.h

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

#ifndef POSTASR_CONFIG_H_
#define POSTASR_CONFIG_H_

#include <iosfwd>
#include <string>

#include "postasr/corpus.h"
#include "postasr/model.h"
#include "postasr/pipeline.h"
#include "postasr/train.h"

namespace postasr {

/// Everything one experiment needs, with full defaults.  The on-disk form is
/// a flat `key value` text file; unknown keys are errors.
struct ExperimentConfig {
  uint64_t seed = 1;
  CorpusSpec corpus;
  ModelConfig model;
  OptimizerSettings optim;
  int teacher_steps = 300;
  Thresholds thresholds;
  ThresholdGrid grid = DefaultThresholdGrid();

  /// Propagates the experiment seed into derived streams and mirrors the
  /// corpus vocabulary/acoustic dimensions into the model config.
  void Resolve();
};

ExperimentConfig ParseExperimentConfig(std::istream& in,
                                       const std::string& origin);
ExperimentConfig LoadExperimentConfig(const std::string& path);
void WriteExperimentConfig(std::ostream& out, const ExperimentConfig& cfg);
void SaveExperimentConfig(const std::string& path, const ExperimentConfig& cfg);

/// Thresholds-only key-value files (written by tune-thresholds, read by eval
/// and run).
Thresholds LoadThresholds(const std::string& path);
void SaveThresholds(const std::string& path, const Thresholds& th);

}  // namespace postasr

#endif  // POSTASR_CONFIG_H_
