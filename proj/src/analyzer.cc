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

#include "aps/analyzer.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <boost/math/quadrature/tanh_sinh.hpp>

namespace aps {

double expected_overlap_naive(double s1, double s2) { return s1 * s2; }

double expected_overlap_selective(double s1, double s2, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  return s1 * s2 / (gamma + 2.0);
}

double selection_density(double r, double gamma, double s1) {
  return (gamma + 1.0) * s1 * std::pow(1.0 - r, gamma);
}

double pdf_normalization(double gamma, double s1) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  boost::math::quadrature::tanh_sinh<double> integrator;
  return integrator.integrate(
      [&](double r) { return selection_density(r, gamma, s1); }, 0.0, 1.0);
}

double selective_overlap_quadrature(double s1, double s2, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  boost::math::quadrature::tanh_sinh<double> integrator;
  return integrator.integrate(
      [&](double r) { return s2 * selection_density(r, gamma, s1) * r; }, 0.0,
      1.0);
}

const char* to_string(Strategy s) {
  return s == Strategy::kNaive ? "naive" : "selective";
}

const char* to_string(CropModel m) {
  return m == CropModel::kIdentical ? "identical" : "random";
}

void MonteCarloConfig::validate() const {
  sampler.validate();
  if (trials < 1000) {
    throw std::invalid_argument("monte carlo: trials must be >= 1000");
  }
  if (grid < 1 || patch_size < 1 || image_size < 1) {
    throw std::invalid_argument("monte carlo: grid, patch and image sizes "
                                "must be positive");
  }
  if (workers < 1) throw std::invalid_argument("monte carlo: workers < 1");
}

namespace {

struct TrialValues {
  double naive = 0.0;
  double selective = 0.0;
};

CropBox draw_crop(const MonteCarloConfig& cfg, Rng& rng) {
  const int view = cfg.grid * cfg.patch_size;
  CropBox box = CropBox::full_image(cfg.image_size, cfg.image_size, view);
  if (cfg.crop_model == CropModel::kRandom) {
    box.rect = sample_crop_rect(cfg.image_size, cfg.image_size, cfg.crop_range,
                                rng);
  }
  return box;
}

double pair_overlap(const OverlapProfile& profile, const PatchIndexSet& view2) {
  double sum = 0.0;
  for (int idx : view2.indices) sum += profile[idx];
  return sum / static_cast<double>(profile.size());
}

TrialValues run_trial(const MonteCarloConfig& cfg, long t, bool want_naive,
                      bool want_selective) {
  const std::uint64_t base = 3 * static_cast<std::uint64_t>(t);
  Rng geometry_rng = derive_stream(cfg.seed, base);
  const PatchGrid grid1(draw_crop(cfg, geometry_rng), cfg.patch_size);
  const PatchGrid grid2(draw_crop(cfg, geometry_rng), cfg.patch_size);
  const PatchIndexSet view1 = sample_sparse(grid1, cfg.sampler.s1, geometry_rng);
  const OverlapProfile profile = overlap_profile(grid1, view1, grid2);

  TrialValues out;
  if (want_naive) {
    Rng rng = derive_stream(cfg.seed, base + 1);
    out.naive = pair_overlap(profile, sample_sparse(grid2, cfg.sampler.s2, rng));
  }
  if (want_selective) {
    Rng rng = derive_stream(cfg.seed, base + 2);
    const std::vector<double> w = selective_weights(profile, cfg.sampler.gamma);
    out.selective =
        pair_overlap(profile, sample_selective(grid2, w, cfg.sampler.s2, rng).picked);
  }
  return out;
}

std::vector<TrialValues> run_trials(const MonteCarloConfig& cfg,
                                    bool want_naive, bool want_selective) {
  cfg.validate();
  std::vector<TrialValues> values(cfg.trials);
  const int workers =
      static_cast<int>(std::min<long>(cfg.workers, cfg.trials));
  auto work = [&](int w) {
    for (long t = w; t < cfg.trials; t += workers) {
      values[t] = run_trial(cfg, t, want_naive, want_selective);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  return values;
}

struct Moments {
  double mean = 0.0;
  double std_error = 0.0;
};

template <typename F>
Moments moments(const std::vector<TrialValues>& v, F pick) {
  const double n = static_cast<double>(v.size());
  double sum = 0.0;
  for (const auto& x : v) sum += pick(x);
  const double mean = sum / n;
  double ss = 0.0;
  for (const auto& x : v) {
    const double d = pick(x) - mean;
    ss += d * d;
  }
  const double var = v.size() > 1 ? ss / (n - 1.0) : 0.0;
  return Moments{mean, std::sqrt(var / n)};
}

AsymmetryReport make_report(const MonteCarloConfig& cfg, Strategy strategy,
                            const Moments& m) {
  AsymmetryReport r;
  r.strategy = to_string(strategy);
  r.crop_model = to_string(cfg.crop_model);
  r.s1 = cfg.sampler.s1;
  r.s2 = cfg.sampler.s2;
  r.gamma = strategy == Strategy::kSelective ? cfg.sampler.gamma : 0.0;
  r.grid = cfg.grid;
  r.trials = cfg.trials;
  r.analytic = strategy == Strategy::kNaive
                   ? expected_overlap_naive(r.s1, r.s2)
                   : expected_overlap_selective(r.s1, r.s2, cfg.sampler.gamma);
  r.monte_carlo = m.mean;
  r.std_error = m.std_error;
  return r;
}

}  // namespace

std::vector<double> overlap_samples(const MonteCarloConfig& config) {
  const bool naive = config.strategy == Strategy::kNaive;
  const auto values = run_trials(config, naive, !naive);
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(),
                 [&](const TrialValues& v) { return naive ? v.naive : v.selective; });
  return out;
}

AsymmetryReport monte_carlo_overlap(const MonteCarloConfig& config) {
  const bool naive = config.strategy == Strategy::kNaive;
  const auto values = run_trials(config, naive, !naive);
  const Moments m = moments(values, [&](const TrialValues& v) {
    return naive ? v.naive : v.selective;
  });
  return make_report(config, config.strategy, m);
}

PairedComparison compare_strategies(const MonteCarloConfig& config) {
  const auto values = run_trials(config, true, true);
  PairedComparison out;
  const Moments mn = moments(values, [](const TrialValues& v) { return v.naive; });
  const Moments ms =
      moments(values, [](const TrialValues& v) { return v.selective; });
  const Moments md = moments(
      values, [](const TrialValues& v) { return v.selective - v.naive; });
  out.naive = make_report(config, Strategy::kNaive, mn);
  out.selective = make_report(config, Strategy::kSelective, ms);
  out.mean_difference = md.mean;
  out.difference_std_error = md.std_error;
  out.ratio = mn.mean != 0.0 ? ms.mean / mn.mean : 0.0;
  if (mn.mean != 0.0) {
    const double ratio = out.ratio;
    const Moments lin = moments(values, [&](const TrialValues& v) {
      return v.selective - ratio * v.naive;
    });
    out.ratio_std_error = lin.std_error / std::abs(mn.mean);
  }
  return out;
}

void write_report_csv_header(std::ostream& out) {
  out << "strategy,crop_model,s1,s2,gamma,grid,trials,analytic,monte_carlo,"
         "std_error,non_overlap_analytic,non_overlap_monte_carlo\n";
}

void write_report_csv_row(std::ostream& out, const AsymmetryReport& r) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(10) << r.strategy << ',' << r.crop_model << ','
      << r.s1 << ',' << r.s2 << ',' << r.gamma << ',' << r.grid << ','
      << r.trials << ',' << r.analytic << ',' << r.monte_carlo << ','
      << r.std_error << ',' << r.analytic_non_overlap() << ','
      << r.monte_carlo_non_overlap() << '\n';
  out.flags(flags);
  out.precision(prec);
}

void write_report_table(std::ostream& out,
                        const std::vector<AsymmetryReport>& reports) {
  const auto flags = out.flags();
  out << std::left << std::setw(10) << "strategy" << std::setw(10) << "crops"
      << std::right << std::setw(7) << "s1" << std::setw(7) << "s2"
      << std::setw(7) << "gamma" << std::setw(6) << "grid" << std::setw(10)
      << "trials" << std::setw(12) << "analytic" << std::setw(12) << "monte"
      << std::setw(11) << "stderr" << '\n';
  for (const auto& r : reports) {
    out << std::left << std::setw(10) << r.strategy << std::setw(10)
        << r.crop_model << std::right << std::fixed << std::setprecision(3)
        << std::setw(7) << r.s1 << std::setw(7) << r.s2 << std::setw(7)
        << r.gamma << std::setw(6) << r.grid << std::setw(10) << r.trials
        << std::setprecision(6) << std::setw(12) << r.analytic << std::setw(12)
        << r.monte_carlo << std::setw(11) << r.std_error << '\n';
    out.flags(flags);
  }
  out.flags(flags);
}

void write_density_csv(std::ostream& out, const std::vector<double>& gammas,
                       double s1, int points) {
  if (points < 2) throw std::invalid_argument("density: need >= 2 points");
  const auto prec = out.precision();
  out << "gamma,s1,r,p_sel\n" << std::setprecision(10);
  for (double g : gammas) {
    for (int i = 0; i < points; ++i) {
      const double r = static_cast<double>(i) / (points - 1);
      out << g << ',' << s1 << ',' << r << ',' << selection_density(r, g, s1)
          << '\n';
    }
  }
  out.precision(prec);
}

}  // namespace aps
