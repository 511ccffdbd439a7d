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

#include "aps/data.h"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "aps/random.h"

namespace aps {

std::vector<ImageRecord> load_cifar(const std::string& path, int max_label) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cifar: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw std::runtime_error("cifar: " + path + " is truncated (" +
                             std::to_string(bytes.size()) +
                             " bytes, not a multiple of 3073)");
  }
  constexpr int plane = kCifarSide * kCifarSide;
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  std::vector<ImageRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * kCifarRecordBytes;
    if (rec[0] > max_label) {
      throw std::runtime_error("cifar: record " + std::to_string(i) +
                               " has label " + std::to_string(rec[0]) +
                               " > " + std::to_string(max_label));
    }
    ImageRecord r;
    r.label = rec[0];
    r.source_id = i;
    r.pixels = Image(kCifarSide, kCifarSide);
    for (int c = 0; c < 3; ++c) {
      for (int p = 0; p < plane; ++p) {
        r.pixels.pixels[p * 3 + c] = rec[1 + c * plane + p] / 255.0f;
      }
    }
    records.push_back(std::move(r));
  }
  return records;
}

void save_cifar(const std::string& path,
                const std::vector<ImageRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cifar: cannot write " + path);
  constexpr int plane = kCifarSide * kCifarSide;
  std::vector<unsigned char> rec(kCifarRecordBytes);
  for (const ImageRecord& r : records) {
    if (r.pixels.width != kCifarSide || r.pixels.height != kCifarSide) {
      throw std::invalid_argument("cifar: records must be 32x32");
    }
    if (r.label < 0 || r.label > 255) {
      throw std::invalid_argument("cifar: label does not fit in a byte");
    }
    rec[0] = static_cast<unsigned char>(r.label);
    for (int c = 0; c < 3; ++c) {
      for (int p = 0; p < plane; ++p) {
        const float v = std::clamp(r.pixels.pixels[p * 3 + c], 0.0f, 1.0f);
        rec[1 + c * plane + p] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
    out.write(reinterpret_cast<const char*>(rec.data()), kCifarRecordBytes);
  }
}

std::vector<ImageRecord> synth_dataset(const SynthSpec& spec) {
  if (spec.per_class < 1) throw std::invalid_argument("synth: per_class < 1");
  if (spec.classes < 1) throw std::invalid_argument("synth: classes < 1");
  if (spec.image_size < 4) throw std::invalid_argument("synth: image_size < 4");

  constexpr double kPi = std::numbers::pi;
  const int S = spec.image_size;
  std::vector<ImageRecord> out;
  out.reserve(static_cast<std::size_t>(spec.per_class) * spec.classes);
  std::uint64_t id = 0;
  for (int i = 0; i < spec.per_class; ++i) {
    for (int c = 0; c < spec.classes; ++c, ++id) {
      Rng rng = derive_stream(spec.seed, id);
      std::normal_distribution<double> noise(0.0, 0.04);
      // Orientations spread over a half turn so that a horizontal flip maps
      // the two-class case (0 and pi/2) onto itself.
      const double theta = kPi * c / spec.classes + 0.15 * (uniform01(rng) - 0.5);
      const double freq = 2.0 + (c % 3) * 1.5 + uniform01(rng);
      const double phase = 2 * kPi * uniform01(rng);
      const double hue = static_cast<double>(c) / spec.classes +
                         0.08 * (uniform01(rng) - 0.5);
      double tint[3];
      for (int k = 0; k < 3; ++k) {
        tint[k] = 0.5 + 0.4 * std::cos(2 * kPi * (hue - k / 3.0));
      }
      const double bx = S * (0.2 + 0.6 * uniform01(rng));
      const double by = S * (0.2 + 0.6 * uniform01(rng));
      const double br = S * (0.1 + 0.1 * uniform01(rng));

      ImageRecord r;
      r.label = c;
      r.source_id = id;
      r.pixels = Image(S, S);
      for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
          const double t =
              (x * std::cos(theta) + y * std::sin(theta)) / S;
          const double g = 0.5 + 0.5 * std::sin(2 * kPi * freq * t + phase);
          const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
          const double blob = std::exp(-d2 / (2 * br * br));
          for (int k = 0; k < 3; ++k) {
            const double v = 0.15 + 0.7 * g * tint[k] + 0.25 * blob + noise(rng);
            r.pixels.at(x, y, k) =
                static_cast<float>(std::clamp(v, 0.0, 1.0));
          }
        }
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

void write_synth_manifest(const std::string& path, const SynthSpec& spec) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("synth: cannot write " + path);
  out << "# synthetic dataset manifest\n"
      << "seed " << spec.seed << "\n"
      << "classes " << spec.classes << "\n"
      << "per_class " << spec.per_class << "\n"
      << "image_size " << spec.image_size << "\n";
}

SynthSpec read_synth_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("synth: cannot read " + path);
  SynthSpec spec;
  std::string line;
  int seen = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "seed") {
      ls >> spec.seed;
    } else if (key == "classes") {
      ls >> spec.classes;
    } else if (key == "per_class") {
      ls >> spec.per_class;
    } else if (key == "image_size") {
      ls >> spec.image_size;
    } else {
      throw std::runtime_error("synth manifest: unknown key '" + key + "'");
    }
    if (!ls) throw std::runtime_error("synth manifest: bad value for " + key);
    ++seen;
  }
  if (seen != 4) throw std::runtime_error("synth manifest: incomplete header");
  return spec;
}

}  // namespace aps
