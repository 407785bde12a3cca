// core/include/postasr/dataset_io.h

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

#ifndef POSTASR_DATASET_IO_H_
#define POSTASR_DATASET_IO_H_

#include <string>
#include <vector>

#include "postasr/types.h"

namespace postasr {

/// Writes one utterance per line as UTF-8 JSON records.  Reals are emitted
/// with shortest round-trip precision, so write/read is loss-free bit for
/// bit.
void WriteDataset(const std::vector<Sample>& samples, const std::string& path);

/// Reads a line-delimited dataset.  A malformed record raises an error that
/// names the line number and the offending field.
std::vector<Sample> ReadDataset(const std::string& path);

}  // namespace postasr

#endif  // POSTASR_DATASET_IO_H_
