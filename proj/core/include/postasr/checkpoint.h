// core/include/postasr/checkpoint.h

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

#ifndef POSTASR_CHECKPOINT_H_
#define POSTASR_CHECKPOINT_H_

#include <string>

#include "postasr/model.h"
#include "postasr/train.h"

namespace postasr {

/// Versioned decimal-text container: a config header followed by named
/// parameter blocks.  Values round-trip bit for bit (%.17g).
void SaveCheckpoint(const std::string& path, const ModelConfig& cfg,
                    const Parameters& params);

struct Checkpoint {
  ModelConfig cfg;
  Parameters params;
};

/// Throws with the found/expected version on a format mismatch.
Checkpoint LoadCheckpoint(const std::string& path);

void SaveTeacher(const std::string& path, const TeacherModel& teacher);
TeacherModel LoadTeacher(const std::string& path);

}  // namespace postasr

#endif  // POSTASR_CHECKPOINT_H_
