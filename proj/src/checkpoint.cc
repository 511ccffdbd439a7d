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

#include "aps/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "aps/errors.h"

namespace aps {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'P', 'S', 'C', 'K', 'P', 'T', '\0'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out += s;
}

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_str() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }

  void get_doubles(std::vector<double>& out, std::size_t n) {
    if (n > (size_ - pos_) / sizeof(double)) {
      throw CheckpointError("corrupt checkpoint: array exceeds payload");
    }
    out.resize(n);
    std::memcpy(out.data(), data_ + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  bool done() const { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    if (n > size_ - pos_) {
      throw CheckpointError("corrupt checkpoint: truncated payload");
    }
  }

  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedArray& CheckpointBlob::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw CheckpointError("checkpoint: missing array '" + name + "'");
}

const std::string& CheckpointBlob::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  throw CheckpointError("checkpoint: missing metadata '" + key + "'");
}

std::string serialize_blob(const CheckpointBlob& blob) {
  std::string payload;
  put_str(payload, blob.config_echo);
  put<std::uint32_t>(payload, static_cast<std::uint32_t>(blob.meta.size()));
  for (const auto& [k, v] : blob.meta) {
    put_str(payload, k);
    put_str(payload, v);
  }
  put<std::uint32_t>(payload, static_cast<std::uint32_t>(blob.arrays.size()));
  for (const NamedArray& a : blob.arrays) {
    std::int64_t count = 1;
    for (auto d : a.shape) count *= d;
    if (count != static_cast<std::int64_t>(a.data.size())) {
      throw std::invalid_argument("checkpoint: shape of '" + a.name +
                                  "' does not match its data");
    }
    put_str(payload, a.name);
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put<std::int64_t>(payload, d);
    payload.append(reinterpret_cast<const char*>(a.data.data()),
                   a.data.size() * sizeof(double));
  }

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, payload.size());
  out += payload;
  put<std::uint64_t>(out, fnv1a(payload.data(), payload.size()));
  return out;
}

CheckpointBlob deserialize_blob(const std::string& bytes) {
  constexpr std::size_t header = sizeof(kMagic) + 4 + 8;
  if (bytes.size() < header + 8) {
    throw CheckpointError("corrupt checkpoint: file too short");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("corrupt checkpoint: bad magic");
  }
  Reader head(bytes.data() + sizeof(kMagic), 12);
  const auto version = head.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) +
                          " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto length = head.get<std::uint64_t>();
  if (length != bytes.size() - header - 8) {
    throw CheckpointError("corrupt checkpoint: truncated or padded file");
  }
  const char* payload = bytes.data() + header;
  std::uint64_t stored;
  std::memcpy(&stored, payload + length, sizeof(stored));
  if (stored != fnv1a(payload, length)) {
    throw CheckpointError("corrupt checkpoint: hash mismatch");
  }

  Reader r(payload, length);
  CheckpointBlob blob;
  blob.config_echo = r.get_str();
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_str();
    std::string v = r.get_str();
    blob.meta.emplace_back(std::move(k), std::move(v));
  }
  const auto n_arrays = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    NamedArray a;
    a.name = r.get_str();
    const auto ndim = r.get<std::uint32_t>();
    std::int64_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto dim = r.get<std::int64_t>();
      if (dim < 0) throw CheckpointError("corrupt checkpoint: negative dim");
      a.shape.push_back(dim);
      count *= dim;
    }
    r.get_doubles(a.data, static_cast<std::size_t>(count));
    blob.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw CheckpointError("corrupt checkpoint: trailing bytes");
  return blob;
}

void write_blob(const std::string& path, const CheckpointBlob& blob) {
  const std::string bytes = serialize_blob(blob);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

CheckpointBlob read_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return deserialize_blob(bytes);
}

}  // namespace aps
