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

#include "aps/geometry.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace aps {

CropBox CropBox::full_image(int image_width, int image_height, int view_size,
                            std::uint64_t source_id) {
  CropBox box;
  box.rect = Rect{0.0, 0.0, static_cast<double>(image_width),
                  static_cast<double>(image_height)};
  box.view_size = view_size;
  box.image_width = image_width;
  box.image_height = image_height;
  box.source_id = source_id;
  return box;
}

void CropBox::validate() const {
  if (view_size <= 0) {
    throw std::invalid_argument("crop box: view_size must be positive");
  }
  if (!rect.valid()) {
    throw std::invalid_argument("crop box: empty crop rect");
  }
  if (rect.x0 < 0.0 || rect.y0 < 0.0 || rect.x1 > image_width ||
      rect.y1 > image_height) {
    throw std::invalid_argument("crop box: crop rect outside image bounds");
  }
}

Point CropBox::view_to_image(Point view) const {
  const double sx = rect.width() / view_size;
  const double sy = rect.height() / view_size;
  const double u = flip ? view_size - view.x : view.x;
  return Point{rect.x0 + u * sx, rect.y0 + view.y * sy};
}

Point CropBox::image_to_view(Point image) const {
  const double u = (image.x - rect.x0) * view_size / rect.width();
  const double v = (image.y - rect.y0) * view_size / rect.height();
  return Point{flip ? view_size - u : u, v};
}

Rect CropBox::view_rect_to_image(double u0, double v0, double u1,
                                 double v1) const {
  const Point a = view_to_image(Point{u0, v0});
  const Point b = view_to_image(Point{u1, v1});
  return Rect{std::min(a.x, b.x), std::min(a.y, b.y), std::max(a.x, b.x),
              std::max(a.y, b.y)};
}

PatchGrid::PatchGrid(CropBox crop, int patch_size)
    : crop_(crop), patch_size_(patch_size), rows_(0), cols_(0) {
  if (patch_size <= 0 || crop.view_size <= 0 ||
      crop.view_size % patch_size != 0) {
    throw std::invalid_argument("patch grid: patch_size " +
                                std::to_string(patch_size) +
                                " does not tile view_size " +
                                std::to_string(crop.view_size));
  }
  rows_ = crop.view_size / patch_size;
  cols_ = rows_;
}

Rect PatchGrid::patch_in_view(int index) const {
  if (index < 0 || index >= size()) {
    throw std::out_of_range("patch index " + std::to_string(index) +
                            " outside grid of " + std::to_string(size()));
  }
  const int r = index / cols_;
  const int c = index % cols_;
  return Rect{static_cast<double>(c * patch_size_),
              static_cast<double>(r * patch_size_),
              static_cast<double>((c + 1) * patch_size_),
              static_cast<double>((r + 1) * patch_size_)};
}

Rect map_patch_to_image(const PatchGrid& grid, int index) {
  const Rect v = grid.patch_in_view(index);
  return grid.crop().view_rect_to_image(v.x0, v.y0, v.x1, v.y1);
}

double intersection_area(const Rect& a, const Rect& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double overlap_ratio(std::span<const Rect> sampled_view1, const Rect& patch2) {
  const double area = patch2.area();
  if (area <= 0.0) return 0.0;
  double covered = 0.0;
  for (const Rect& r : sampled_view1) covered += intersection_area(r, patch2);
  return std::clamp(covered / area, 0.0, 1.0);
}

namespace {

// Index range [lo, hi] of cells of width `cell` overlapping the open interval
// (a, b), clamped to [0, n). Empty when lo > hi.
std::pair<int, int> cell_range(double a, double b, int cell, int n) {
  const int lo = std::max(0, static_cast<int>(std::floor(a / cell)));
  const int hi = std::min(n - 1, static_cast<int>(std::ceil(b / cell)) - 1);
  return {lo, hi};
}

}  // namespace

std::vector<double> grid_overlap_profile(const PatchGrid& grid1,
                                         std::span<const int> sampled1,
                                         const PatchGrid& grid2) {
  if (!grid1.crop().same_source(grid2.crop())) {
    throw std::invalid_argument(
        "overlap profile: grids reference different source images");
  }
  const int n1 = grid1.size();
  std::vector<char> mask(n1, 0);
  for (int idx : sampled1) {
    if (idx < 0 || idx >= n1) {
      throw std::out_of_range("overlap profile: sampled index out of grid");
    }
    mask[idx] = 1;
  }
  std::vector<Rect> cells(n1);
  for (int i = 0; i < n1; ++i) cells[i] = map_patch_to_image(grid1, i);

  const CropBox& c1 = grid1.crop();
  const int p = grid1.patch_size();
  std::vector<double> profile(grid2.size(), 0.0);
  for (int i = 0; i < grid2.size(); ++i) {
    const Rect q = map_patch_to_image(grid2, i);
    const Point a = c1.image_to_view(Point{q.x0, q.y0});
    const Point b = c1.image_to_view(Point{q.x1, q.y1});
    const auto [c_lo, c_hi] =
        cell_range(std::min(a.x, b.x), std::max(a.x, b.x), p, grid1.cols());
    const auto [r_lo, r_hi] =
        cell_range(std::min(a.y, b.y), std::max(a.y, b.y), p, grid1.rows());
    double covered = 0.0;
    for (int r = r_lo; r <= r_hi; ++r) {
      for (int c = c_lo; c <= c_hi; ++c) {
        const int idx = r * grid1.cols() + c;
        if (mask[idx]) covered += intersection_area(cells[idx], q);
      }
    }
    profile[i] = std::clamp(covered / q.area(), 0.0, 1.0);
  }
  return profile;
}

}  // namespace aps
