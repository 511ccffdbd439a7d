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

#ifndef APS_GEOMETRY_H_
#define APS_GEOMETRY_H_

#include <cstdint>
#include <span>
#include <vector>

namespace aps {

// Axis-aligned rectangle in continuous original-image pixel coordinates.
// Half-open semantics: rectangles that only share an edge do not overlap.
struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool valid() const { return x0 < x1 && y0 < y1; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Crop region of the original image plus the horizontal flip applied after
// the crop was resized to a `view_size` x `view_size` view.
struct CropBox {
  Rect rect;
  bool flip = false;
  int view_size = 0;
  int image_width = 0;
  int image_height = 0;
  std::uint64_t source_id = 0;

  // Identity crop of a whole image resized to `view_size`.
  static CropBox full_image(int image_width, int image_height, int view_size,
                            std::uint64_t source_id = 0);

  // Throws std::invalid_argument unless the rect lies inside the image and
  // view_size is positive.
  void validate() const;

  bool same_source(const CropBox& other) const {
    return image_width == other.image_width &&
           image_height == other.image_height &&
           source_id == other.source_id;
  }

  // Affine map from view coordinates (u right, v down, in [0, view_size])
  // to original-image coordinates, and its inverse.
  Point view_to_image(Point view) const;
  Point image_to_view(Point image) const;

  // Footprint in image coordinates of the view-space rect [u0,u1)x[v0,v1).
  Rect view_rect_to_image(double u0, double v0, double u1, double v1) const;
};

// Square patch tokenization of a view.
class PatchGrid {
 public:
  // Throws std::invalid_argument if patch_size does not tile view_size.
  PatchGrid(CropBox crop, int patch_size);

  const CropBox& crop() const { return crop_; }
  int patch_size() const { return patch_size_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int size() const { return rows_ * cols_; }

  // Throws std::out_of_range for an invalid index.
  Rect patch_in_view(int index) const;

 private:
  CropBox crop_;
  int patch_size_;
  int rows_;
  int cols_;
};

// Footprint of grid patch `index` in original-image coordinates. Flip mirrors
// the column coordinate.
Rect map_patch_to_image(const PatchGrid& grid, int index);

// Area of a ∩ b; zero when disjoint or edge-adjacent.
double intersection_area(const Rect& a, const Rect& b);

// S(P1 ∩ P2) / S(P2) where P1 is the union of `sampled_view1`. The rects must
// be pairwise disjoint, which makes the union intersection the sum of the
// pairwise intersections. Result is clamped to [0, 1].
double overlap_ratio(std::span<const Rect> sampled_view1, const Rect& patch2);

// Per-patch overlap ratio of every patch of `grid2` against the union of the
// `sampled1` patches of `grid1`. Uses the regular structure of grid1 to visit
// only the cells under each query patch; equivalent to calling overlap_ratio
// with all mapped sampled rects. Throws std::invalid_argument when the grids
// come from different source images.
std::vector<double> grid_overlap_profile(const PatchGrid& grid1,
                                         std::span<const int> sampled1,
                                         const PatchGrid& grid2);

}  // namespace aps

#endif  // APS_GEOMETRY_H_
