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

#include "aps/augment.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace aps {

namespace {

double uniform(double a, double b, Rng& rng) {
  return a + (b - a) * uniform01(rng);
}

bool coin(double p, Rng& rng) { return p > 0.0 && uniform01(rng) < p; }

float luma(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument(std::string("augment: ") + name +
                                " must lie in [0, 1]");
  }
}

}  // namespace

AugmentParams AugmentParams::cifar(int view_size) {
  AugmentParams p;
  p.view_size = view_size;
  return p;
}

AugmentParams AugmentParams::imagenet_view1(int view_size) {
  AugmentParams p;
  p.view_size = view_size;
  p.crop.area_min = 0.08;
  p.saturation = 0.2;
  p.blur_prob = 1.0;
  p.solarize_prob = 0.0;
  return p;
}

AugmentParams AugmentParams::imagenet_view2(int view_size) {
  AugmentParams p = imagenet_view1(view_size);
  p.blur_prob = 0.1;
  p.solarize_prob = 0.2;
  return p;
}

AugmentParams AugmentParams::identity(int view_size) {
  AugmentParams p;
  p.view_size = view_size;
  p.crop = CropRange{1.0, 1.0, 1.0, 1.0};
  p.flip_prob = 0.0;
  p.jitter_prob = 0.0;
  p.grayscale_prob = 0.0;
  return p;
}

void AugmentParams::validate() const {
  if (view_size <= 0) throw std::invalid_argument("augment: view_size <= 0");
  if (!(crop.area_min > 0.0 && crop.area_min <= crop.area_max &&
        crop.area_max <= 1.0)) {
    throw std::invalid_argument("augment: crop area range must satisfy "
                                "0 < min <= max <= 1");
  }
  if (!(crop.ratio_min > 0.0 && crop.ratio_min <= crop.ratio_max)) {
    throw std::invalid_argument("augment: invalid aspect ratio range");
  }
  check_prob(flip_prob, "flip probability");
  check_prob(jitter_prob, "jitter probability");
  check_prob(grayscale_prob, "grayscale probability");
  check_prob(blur_prob, "blur probability");
  check_prob(solarize_prob, "solarize probability");
  if (brightness < 0 || contrast < 0 || saturation < 0 || hue < 0 ||
      hue > 0.5) {
    throw std::invalid_argument("augment: jitter intensities out of range");
  }
  if (!(blur_sigma_min > 0.0 && blur_sigma_min <= blur_sigma_max)) {
    throw std::invalid_argument("augment: invalid blur sigma range");
  }
}

Rect sample_crop_rect(int image_width, int image_height, const CropRange& range,
                      Rng& rng) {
  const double W = image_width;
  const double H = image_height;
  const double log_lo = std::log(range.ratio_min);
  const double log_hi = std::log(range.ratio_max);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double area = uniform(range.area_min, range.area_max, rng) * W * H;
    const double ratio = std::exp(uniform(log_lo, log_hi, rng));
    const double w = std::sqrt(area * ratio);
    const double h = std::sqrt(area / ratio);
    if (w <= W && h <= H && w >= 1.0 && h >= 1.0) {
      const double x0 = uniform(0.0, W - w, rng);
      const double y0 = uniform(0.0, H - h, rng);
      return Rect{x0, y0, x0 + w, y0 + h};
    }
  }
  double w = W;
  double h = H;
  const double in_ratio = W / H;
  if (in_ratio < range.ratio_min) {
    h = w / range.ratio_min;
  } else if (in_ratio > range.ratio_max) {
    w = h * range.ratio_max;
  }
  const double x0 = (W - w) / 2.0;
  const double y0 = (H - h) / 2.0;
  return Rect{x0, y0, x0 + w, y0 + h};
}

Image resample_crop(const Image& image, const CropBox& crop) {
  const int n = crop.view_size;
  Image view(n, n);
  const int W = image.width;
  const int H = image.height;
  for (int v = 0; v < n; ++v) {
    for (int u = 0; u < n; ++u) {
      // Pixel centers map through the crop's affine transform (flip included).
      const Point p = crop.view_to_image(Point{u + 0.5, v + 0.5});
      const double fx = std::clamp(p.x - 0.5, 0.0, W - 1.0);
      const double fy = std::clamp(p.y - 0.5, 0.0, H - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int y0 = static_cast<int>(std::floor(fy));
      const int x1 = std::min(x0 + 1, W - 1);
      const int y1 = std::min(y0 + 1, H - 1);
      const double ax = fx - x0;
      const double ay = fy - y0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - ax) * image.at(x0, y0, c) + ax * image.at(x1, y0, c);
        const double bot = (1 - ax) * image.at(x0, y1, c) + ax * image.at(x1, y1, c);
        view.at(u, v, c) = static_cast<float>((1 - ay) * top + ay * bot);
      }
    }
  }
  return view;
}

void adjust_brightness(Image& image, double factor) {
  for (float& v : image.pixels) {
    v = std::clamp(static_cast<float>(v * factor), 0.0f, 1.0f);
  }
}

void adjust_contrast(Image& image, double factor) {
  double mean = 0.0;
  const std::size_t n = image.pixels.size() / 3;
  for (std::size_t i = 0; i < n; ++i) {
    mean += luma(image.pixels[3 * i], image.pixels[3 * i + 1],
                 image.pixels[3 * i + 2]);
  }
  mean /= std::max<std::size_t>(n, 1);
  for (float& v : image.pixels) {
    v = std::clamp(static_cast<float>(mean + (v - mean) * factor), 0.0f, 1.0f);
  }
}

void adjust_saturation(Image& image, double factor) {
  const std::size_t n = image.pixels.size() / 3;
  for (std::size_t i = 0; i < n; ++i) {
    float* px = &image.pixels[3 * i];
    const float g = luma(px[0], px[1], px[2]);
    for (int c = 0; c < 3; ++c) {
      px[c] = std::clamp(static_cast<float>(g + (px[c] - g) * factor), 0.0f,
                         1.0f);
    }
  }
}

void adjust_hue(Image& image, double shift) {
  const std::size_t n = image.pixels.size() / 3;
  for (std::size_t i = 0; i < n; ++i) {
    float* px = &image.pixels[3 * i];
    const double r = px[0], g = px[1], b = px[2];
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    if (d <= 0.0) continue;  // achromatic: hue undefined, nothing to rotate
    double h;
    if (mx == r) {
      h = std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
      h = (b - r) / d + 2.0;
    } else {
      h = (r - g) / d + 4.0;
    }
    h = h / 6.0 + shift;
    h -= std::floor(h);
    const double s = d / mx;
    const double v = mx;
    const double hh = h * 6.0;
    const int sector = static_cast<int>(std::floor(hh)) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1 - s);
    const double q = v * (1 - s * f);
    const double t = v * (1 - s * (1 - f));
    std::array<double, 3> out;
    switch (sector) {
      case 0: out = {v, t, p}; break;
      case 1: out = {q, v, p}; break;
      case 2: out = {p, v, t}; break;
      case 3: out = {p, q, v}; break;
      case 4: out = {t, p, v}; break;
      default: out = {v, p, q}; break;
    }
    for (int c = 0; c < 3; ++c) {
      px[c] = std::clamp(static_cast<float>(out[c]), 0.0f, 1.0f);
    }
  }
}

void to_grayscale(Image& image) {
  const std::size_t n = image.pixels.size() / 3;
  for (std::size_t i = 0; i < n; ++i) {
    float* px = &image.pixels[3 * i];
    const float g = luma(px[0], px[1], px[2]);
    px[0] = px[1] = px[2] = g;
  }
}

void gaussian_blur(Image& image, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int W = image.width;
  const int H = image.height;
  Image tmp(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * image.at(std::clamp(x + i, 0, W - 1), y, c);
        }
        tmp.at(x, y, c) = static_cast<float>(acc);
      }
    }
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, H - 1), c);
        }
        image.at(x, y, c) = static_cast<float>(acc);
      }
    }
  }
}

void solarize(Image& image, double threshold) {
  for (float& v : image.pixels) {
    if (v >= threshold) v = 1.0f - v;
  }
}

AugmentedView augment(const Image& image, const AugmentParams& params,
                      Rng& rng, std::uint64_t source_id) {
  params.validate();
  if (image.width <= 0 || image.height <= 0) {
    throw std::invalid_argument("augment: empty image");
  }
  AugmentedView out;
  out.crop.rect = sample_crop_rect(image.width, image.height, params.crop, rng);
  out.crop.flip = coin(params.flip_prob, rng);
  out.crop.view_size = params.view_size;
  out.crop.image_width = image.width;
  out.crop.image_height = image.height;
  out.crop.source_id = source_id;
  out.pixels = resample_crop(image, out.crop);

  Image& px = out.pixels;
  if (coin(params.jitter_prob, rng)) {
    const double b = params.brightness;
    const double c = params.contrast;
    const double s = params.saturation;
    adjust_brightness(px, uniform(std::max(0.0, 1 - b), 1 + b, rng));
    adjust_contrast(px, uniform(std::max(0.0, 1 - c), 1 + c, rng));
    adjust_saturation(px, uniform(std::max(0.0, 1 - s), 1 + s, rng));
    adjust_hue(px, uniform(-params.hue, params.hue, rng));
  }
  if (coin(params.grayscale_prob, rng)) to_grayscale(px);
  if (coin(params.blur_prob, rng)) {
    gaussian_blur(px, uniform(params.blur_sigma_min, params.blur_sigma_max, rng));
  }
  if (coin(params.solarize_prob, rng)) solarize(px);
  return out;
}

}  // namespace aps
