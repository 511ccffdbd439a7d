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

#ifndef APS_AUGMENT_H_
#define APS_AUGMENT_H_

#include <cstdint>

#include "aps/geometry.h"
#include "aps/image.h"
#include "aps/random.h"

namespace aps {

// Random-resized-crop distribution: area fraction uniform in
// [area_min, area_max], aspect ratio (w/h) log-uniform in
// [ratio_min, ratio_max].
struct CropRange {
  double area_min = 0.15;
  double area_max = 1.0;
  double ratio_min = 3.0 / 4.0;
  double ratio_max = 4.0 / 3.0;
};

struct AugmentParams {
  int view_size = 32;
  CropRange crop;
  double flip_prob = 0.5;
  double jitter_prob = 0.8;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
  double grayscale_prob = 0.2;
  double blur_prob = 0.0;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  double solarize_prob = 0.0;

  // CIFAR columns of the augmentation table; no blur, no solarization.
  static AugmentParams cifar(int view_size = 32);
  // ImageNet columns; view 1 always blurs, view 2 blurs rarely and solarizes.
  static AugmentParams imagenet_view1(int view_size = 224);
  static AugmentParams imagenet_view2(int view_size = 224);
  // Whole image, no flip, no color ops.
  static AugmentParams identity(int view_size);

  // Throws std::invalid_argument for out-of-range probabilities or ranges.
  void validate() const;
};

// Per-branch parameters (T1 for view 1, T2 for view 2).
struct AugmentPair {
  AugmentParams view1;
  AugmentParams view2;
};

// Continuous crop rectangle. Ten attempts at a box that fits inside the
// image, then a center crop with the aspect ratio clamped into range, as in
// the usual random-resized-crop. Boxes thinner than one pixel are redrawn.
Rect sample_crop_rect(int image_width, int image_height, const CropRange& range,
                      Rng& rng);

struct AugmentedView {
  Image pixels;
  CropBox crop;
};

// Crop + bilinear resize + optional flip, then color ops. The returned
// CropBox records the geometry only; color ops never touch it.
AugmentedView augment(const Image& image, const AugmentParams& params,
                      Rng& rng, std::uint64_t source_id = 0);

// Bilinear resample of `crop` into a view_size x view_size image.
Image resample_crop(const Image& image, const CropBox& crop);

void adjust_brightness(Image& image, double factor);
void adjust_contrast(Image& image, double factor);
void adjust_saturation(Image& image, double factor);
// `shift` in turns, i.e. [-0.5, 0.5].
void adjust_hue(Image& image, double shift);
void to_grayscale(Image& image);
void gaussian_blur(Image& image, double sigma);
void solarize(Image& image, double threshold = 0.5);

}  // namespace aps

#endif  // APS_AUGMENT_H_
