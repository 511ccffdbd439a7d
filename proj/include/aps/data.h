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

#ifndef APS_DATA_H_
#define APS_DATA_H_

#include <cstdint>
#include <string>
#include <vector>

#include "aps/image.h"

namespace aps {

struct ImageRecord {
  Image pixels;
  int label = 0;
  std::uint64_t source_id = 0;
};

// CIFAR-10 binary batches: 3073-byte records, one label byte followed by the
// 1024-byte R, G and B planes of a 32x32 image in row-major order.
inline constexpr int kCifarSide = 32;
inline constexpr int kCifarRecordBytes = 1 + 3 * kCifarSide * kCifarSide;

// Throws std::runtime_error on a missing or truncated file, or a label byte
// above `max_label`.
std::vector<ImageRecord> load_cifar(const std::string& path, int max_label = 9);
void save_cifar(const std::string& path, const std::vector<ImageRecord>& records);

struct SynthSpec {
  int per_class = 64;
  int classes = 2;
  int image_size = 32;
  std::uint64_t seed = 0;
};

// Procedural class-conditional images: sinusoidal gratings whose orientation,
// frequency band and tint depend on the class, with random phase, blob and
// noise per image. Deterministic in the seed. Throws std::invalid_argument
// for per_class < 1, classes < 1 or image_size < 4.
std::vector<ImageRecord> synth_dataset(const SynthSpec& spec);

// Plain-text "key value" header describing a generated dataset.
void write_synth_manifest(const std::string& path, const SynthSpec& spec);
SynthSpec read_synth_manifest(const std::string& path);

}  // namespace aps

#endif  // APS_DATA_H_
