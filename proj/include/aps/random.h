// Copyright 2026 The APS Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef APS_RANDOM_H_
#define APS_RANDOM_H_

#include <cstdint>
#include <random>

namespace aps {

// Every stochastic operation draws from a caller-owned engine of this type.
using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent sub-stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream `index` of a master seed. Streams for distinct indices are
// statistically independent, so chunked work can be split across workers
// without changing results.
inline Rng derive_stream(std::uint64_t master_seed, std::uint64_t index) {
  return Rng(mix_seed(master_seed ^ mix_seed(index + 1)));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace aps

#endif  // APS_RANDOM_H_
