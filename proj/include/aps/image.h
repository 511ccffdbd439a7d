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

#ifndef APS_IMAGE_H_
#define APS_IMAGE_H_

#include <string>
#include <vector>

namespace aps {

// Interleaved RGB image with channel values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // (y * width + x) * 3 + c

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  float& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// Binary portable pixmap (P6, maxval 255).
void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

}  // namespace aps

#endif  // APS_IMAGE_H_
