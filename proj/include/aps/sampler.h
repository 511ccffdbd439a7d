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

#ifndef APS_SAMPLER_H_
#define APS_SAMPLER_H_

#include <span>
#include <vector>

#include "aps/geometry.h"
#include "aps/random.h"

namespace aps {

struct SamplerConfig {
  double s1 = 0.25;     // view-1 (uniform) sampling ratio
  double s2 = 0.25;     // view-2 (selective) sampling ratio
  double gamma = 3.0;   // sampling power
  int n_views = 1;      // disjoint views drawn per crop

  // Throws std::invalid_argument when a ratio is outside (0, 1], gamma is
  // negative, n_views < 1, or n_views * s exceeds 1 for multi-view reuse.
  void validate() const;
};

// Sorted, duplicate-free patch indices of a grid with `grid_size` patches.
struct PatchIndexSet {
  int grid_size = 0;
  std::vector<int> indices;

  int size() const { return static_cast<int>(indices.size()); }
  bool contains(int index) const;
};

// Per-patch r_overlap of a view-2 grid against view-1's sampled patches.
using OverlapProfile = std::vector<double>;

// round-half-up of s * n. Throws std::invalid_argument when s is outside
// (0, 1] or the count rounds to zero.
int sample_count(double s, int n);

PatchIndexSet sample_sparse(const PatchGrid& grid, double s1, Rng& rng);

OverlapProfile overlap_profile(const PatchGrid& grid1,
                               const PatchIndexSet& view1,
                               const PatchGrid& grid2);

// w_i = (1 - r_i)^gamma. The (gamma + 1) * s1 prefactor cancels in a
// normalized draw and is left to the analyzer.
std::vector<double> selective_weights(std::span<const double> profile,
                                      double gamma);

// Sequential weighted draws with renormalization after every pick. Indices
// flagged in `excluded` are never returned. When fewer than `count` eligible
// indices carry positive weight, the remainder is filled uniformly from the
// eligible zero-weight indices and reported through `padded`.
struct WeightedDraw {
  std::vector<int> indices;  // sorted
  int padded = 0;
};
WeightedDraw weighted_sample_without_replacement(
    std::span<const double> weights, int count, Rng& rng,
    std::span<const char> excluded = {});

struct SelectiveDraw {
  PatchIndexSet picked;
  int padded = 0;  // > 0 flags the degenerate-weight fallback
};
SelectiveDraw sample_selective(const PatchGrid& grid2,
                               std::span<const double> weights, double s2,
                               Rng& rng);

// n_views pairwise-disjoint uniform index sets.
std::vector<PatchIndexSet> sample_multi_view(const PatchGrid& grid, double s,
                                             int n_views, Rng& rng);

// One crop pair sampled asymmetrically: uniform views of crop 1, selective
// views of crop 2 weighted against the union of all crop-1 views.
struct AsymmetricSample {
  std::vector<PatchIndexSet> views1;
  std::vector<PatchIndexSet> views2;
  OverlapProfile profile;  // grid2 against union(views1)
  int padded = 0;
};
AsymmetricSample sample_asymmetric(const PatchGrid& grid1,
                                   const PatchGrid& grid2,
                                   const SamplerConfig& config, Rng& rng);

}  // namespace aps

#endif  // APS_SAMPLER_H_
