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

#include "aps/sampler.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace aps {

void SamplerConfig::validate() const {
  auto check_ratio = [](double s, const char* name) {
    if (!(s > 0.0 && s <= 1.0)) {
      throw std::invalid_argument(std::string("sampler: ") + name +
                                  " must lie in (0, 1]");
    }
  };
  check_ratio(s1, "s1");
  check_ratio(s2, "s2");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw std::invalid_argument("sampler: gamma must be finite and >= 0");
  }
  if (n_views < 1) throw std::invalid_argument("sampler: n_views must be >= 1");
  if (n_views > 1 && n_views * std::max(s1, s2) > 1.0 + 1e-12) {
    throw std::invalid_argument("sampler: n_views * s exceeds 1");
  }
}

bool PatchIndexSet::contains(int index) const {
  return std::binary_search(indices.begin(), indices.end(), index);
}

int sample_count(double s, int n) {
  if (!(s > 0.0 && s <= 1.0)) {
    throw std::invalid_argument("sampling ratio must lie in (0, 1]");
  }
  if (n <= 0) throw std::invalid_argument("cannot sample from an empty grid");
  const int k = static_cast<int>(std::floor(s * n + 0.5));
  if (k < 1) {
    throw std::invalid_argument("sampling ratio " + std::to_string(s) +
                                " selects no patch of a grid of " +
                                std::to_string(n));
  }
  return std::min(k, n);
}

namespace {

// First `k` entries of a partial Fisher-Yates shuffle of `pool`.
void partial_shuffle(std::vector<int>& pool, int k, Rng& rng) {
  const int n = static_cast<int>(pool.size());
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
}

// Fenwick tree over non-negative weights supporting prefix-sum descent.
class SumTree {
 public:
  explicit SumTree(std::span<const double> w) { rebuild(w); }

  void rebuild(std::span<const double> w) {
    n_ = static_cast<int>(w.size());
    tree_.assign(n_ + 1, 0.0);
    for (int i = 0; i < n_; ++i) {
      for (int j = i + 1; j <= n_; j += j & -j) tree_[j] += w[i];
    }
    total_ = std::accumulate(w.begin(), w.end(), 0.0);
  }

  void add(int i, double delta) {
    for (int j = i + 1; j <= n_; j += j & -j) tree_[j] += delta;
    total_ += delta;
  }

  double total() const { return total_; }

  // Smallest index whose inclusive prefix sum exceeds `target`.
  int find(double target) const {
    int pos = 0;
    int step = 1;
    while (step * 2 <= n_) step *= 2;
    for (; step > 0; step /= 2) {
      if (pos + step <= n_ && tree_[pos + step] <= target) {
        pos += step;
        target -= tree_[pos];
      }
    }
    return std::min(pos, n_ - 1);
  }

 private:
  int n_ = 0;
  std::vector<double> tree_;
  double total_ = 0.0;
};

}  // namespace

PatchIndexSet sample_sparse(const PatchGrid& grid, double s1, Rng& rng) {
  const int n = grid.size();
  const int k = sample_count(s1, n);
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  partial_shuffle(pool, k, rng);
  PatchIndexSet out{n, std::vector<int>(pool.begin(), pool.begin() + k)};
  std::sort(out.indices.begin(), out.indices.end());
  return out;
}

OverlapProfile overlap_profile(const PatchGrid& grid1,
                               const PatchIndexSet& view1,
                               const PatchGrid& grid2) {
  if (view1.grid_size != grid1.size()) {
    throw std::invalid_argument("overlap profile: index set / grid mismatch");
  }
  return grid_overlap_profile(grid1, view1.indices, grid2);
}

std::vector<double> selective_weights(std::span<const double> profile,
                                      double gamma) {
  if (!(gamma >= 0.0)) {
    throw std::invalid_argument("selective weights: gamma must be >= 0");
  }
  std::vector<double> w(profile.size());
  for (std::size_t i = 0; i < profile.size(); ++i) {
    const double r = profile[i];
    if (!(r >= 0.0 && r <= 1.0)) {
      throw std::invalid_argument("selective weights: overlap ratio " +
                                  std::to_string(r) + " outside [0, 1]");
    }
    w[i] = std::pow(1.0 - r, gamma);
  }
  return w;
}

WeightedDraw weighted_sample_without_replacement(
    std::span<const double> weights, int count, Rng& rng,
    std::span<const char> excluded) {
  const int n = static_cast<int>(weights.size());
  if (!excluded.empty() && static_cast<int>(excluded.size()) != n) {
    throw std::invalid_argument("weighted draw: exclusion mask size mismatch");
  }
  std::vector<double> w(weights.begin(), weights.end());
  int eligible = 0;
  int positive = 0;
  for (int i = 0; i < n; ++i) {
    if (!(w[i] >= 0.0) || !std::isfinite(w[i])) {
      throw std::invalid_argument("weighted draw: weights must be finite, >= 0");
    }
    if (!excluded.empty() && excluded[i]) w[i] = 0.0;
    const bool ok = excluded.empty() || !excluded[i];
    eligible += ok;
    positive += ok && w[i] > 0.0;
  }
  if (count < 0 || count > eligible) {
    throw std::invalid_argument("weighted draw: requested " +
                                std::to_string(count) + " of " +
                                std::to_string(eligible) + " eligible indices");
  }

  WeightedDraw out;
  out.indices.reserve(count);
  std::vector<char> taken(n, 0);
  const int weighted_picks = std::min(count, positive);
  SumTree tree(w);
  for (int k = 0; k < weighted_picks; ++k) {
    int idx = -1;
    for (int attempt = 0; attempt < 2 && idx < 0; ++attempt) {
      const double target = uniform01(rng) * tree.total();
      const int cand = tree.find(target);
      if (w[cand] > 0.0) {
        idx = cand;
      } else {
        tree.rebuild(w);  // floating drift in the running sums
      }
    }
    if (idx < 0) {
      // Exact linear scan as last resort.
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      double target = uniform01(rng) * total;
      for (int i = 0; i < n; ++i) {
        if (w[i] <= 0.0) continue;
        idx = i;
        if (target < w[i]) break;
        target -= w[i];
      }
    }
    out.indices.push_back(idx);
    taken[idx] = 1;
    tree.add(idx, -w[idx]);
    w[idx] = 0.0;
  }

  if (weighted_picks < count) {
    std::vector<int> pool;
    for (int i = 0; i < n; ++i) {
      if (!taken[i] && (excluded.empty() || !excluded[i])) pool.push_back(i);
    }
    const int missing = count - weighted_picks;
    partial_shuffle(pool, missing, rng);
    out.indices.insert(out.indices.end(), pool.begin(), pool.begin() + missing);
    out.padded = missing;
  }
  std::sort(out.indices.begin(), out.indices.end());
  return out;
}

SelectiveDraw sample_selective(const PatchGrid& grid2,
                               std::span<const double> weights, double s2,
                               Rng& rng) {
  if (static_cast<int>(weights.size()) != grid2.size()) {
    throw std::invalid_argument("selective sampling: weight count mismatch");
  }
  const int k = sample_count(s2, grid2.size());
  WeightedDraw draw = weighted_sample_without_replacement(weights, k, rng);
  return SelectiveDraw{PatchIndexSet{grid2.size(), std::move(draw.indices)},
                       draw.padded};
}

std::vector<PatchIndexSet> sample_multi_view(const PatchGrid& grid, double s,
                                             int n_views, Rng& rng) {
  if (n_views < 1) throw std::invalid_argument("multi-view: n_views < 1");
  const int n = grid.size();
  const int k = sample_count(s, n);
  if (static_cast<long>(k) * n_views > n) {
    throw std::invalid_argument("multi-view: " + std::to_string(n_views) +
                                " views of " + std::to_string(k) +
                                " patches exceed grid of " + std::to_string(n));
  }
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  partial_shuffle(pool, k * n_views, rng);
  std::vector<PatchIndexSet> views;
  views.reserve(n_views);
  for (int v = 0; v < n_views; ++v) {
    PatchIndexSet set{n, std::vector<int>(pool.begin() + v * k,
                                          pool.begin() + (v + 1) * k)};
    std::sort(set.indices.begin(), set.indices.end());
    views.push_back(std::move(set));
  }
  return views;
}

AsymmetricSample sample_asymmetric(const PatchGrid& grid1,
                                   const PatchGrid& grid2,
                                   const SamplerConfig& config, Rng& rng) {
  config.validate();
  AsymmetricSample out;
  out.views1 = sample_multi_view(grid1, config.s1, config.n_views, rng);

  PatchIndexSet union1{grid1.size(), {}};
  for (const auto& v : out.views1) {
    union1.indices.insert(union1.indices.end(), v.indices.begin(),
                          v.indices.end());
  }
  std::sort(union1.indices.begin(), union1.indices.end());
  out.profile = overlap_profile(grid1, union1, grid2);
  const std::vector<double> weights =
      selective_weights(out.profile, config.gamma);

  const int k2 = sample_count(config.s2, grid2.size());
  if (static_cast<long>(k2) * config.n_views > grid2.size()) {
    throw std::invalid_argument("multi-view: selective views exceed grid");
  }
  std::vector<char> used(grid2.size(), 0);
  for (int v = 0; v < config.n_views; ++v) {
    WeightedDraw draw =
        weighted_sample_without_replacement(weights, k2, rng, used);
    for (int idx : draw.indices) used[idx] = 1;
    out.padded += draw.padded;
    out.views2.push_back(PatchIndexSet{grid2.size(), std::move(draw.indices)});
  }
  return out;
}

}  // namespace aps
