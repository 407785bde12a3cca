// core/include/postasr/rng.h

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

#ifndef POSTASR_RNG_H_
#define POSTASR_RNG_H_

#include <cstdint>
#include <string_view>

namespace postasr {

/// Seedable, platform-independent random number generator (xoshiro256**
/// seeded through SplitMix64).  All stochastic code in this project goes
/// through this class; std:: distributions are implementation-defined and
/// would break cross-platform reproducibility of generated corpora.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t NextU64();

  /// Uniform double in [0, 1).
  double Uniform();

  /// Uniform integer in [0, n).  Requires n > 0; uses rejection sampling
  /// so the result is unbiased and stream-stable.
  int UniformInt(int n);

  /// Standard normal via Box-Muller.  Draws exactly two uniforms per call.
  double Normal();

  /// Derives an independent stream seed from (seed, tag), e.g. one stream
  /// per utterance id so parallel and serial generation agree.
  static uint64_t MixSeed(uint64_t seed, std::string_view tag);

 private:
  uint64_t state_[4];
};

}  // namespace postasr

#endif  // POSTASR_RNG_H_
