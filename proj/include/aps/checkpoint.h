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

#ifndef APS_CHECKPOINT_H_
#define APS_CHECKPOINT_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace aps {

// Binary layout (little-endian):
//   "APSCKPT\0"              8-byte magic
//   u32 version
//   u64 payload length
//   payload:
//     str config_echo        (u64 length + bytes)
//     u32 n_meta, n_meta x (str key, str value)
//     u32 n_arrays, n_arrays x (str name, u32 ndim, i64 dims[ndim],
//                               f64 data[prod(dims)])
//   u64 FNV-1a hash of the payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

struct CheckpointBlob {
  std::string config_echo;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
  const std::string& meta_value(const std::string& key) const;

  friend bool operator==(const CheckpointBlob&, const CheckpointBlob&) = default;
};

std::string serialize_blob(const CheckpointBlob& blob);
// Throws CheckpointError on bad magic, version mismatch, truncation or a
// hash mismatch.
CheckpointBlob deserialize_blob(const std::string& bytes);

void write_blob(const std::string& path, const CheckpointBlob& blob);
CheckpointBlob read_blob(const std::string& path);

}  // namespace aps

#endif  // APS_CHECKPOINT_H_
