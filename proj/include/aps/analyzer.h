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

#ifndef APS_ANALYZER_H_
#define APS_ANALYZER_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "aps/augment.h"
#include "aps/sampler.h"

namespace aps {

// Closed-form overlap expectations.
double expected_overlap_naive(double s1, double s2);
double expected_overlap_selective(double s1, double s2, double gamma);

// Selection density p_sel(r) = (gamma + 1) * s1 * (1 - r)^gamma.
double selection_density(double r, double gamma, double s1);

// Quadrature of p_sel over r in [0, 1] (tanh-sinh, handles the endpoint
// behaviour of fractional gamma). Equals s1 when the prefactor is right.
double pdf_normalization(double gamma, double s1);

// Quadrature of s2 * p_sel(r) * r over [0, 1]: the continuous-r overlap
// expectation of the selective strategy.
double selective_overlap_quadrature(double s1, double s2, double gamma);

enum class Strategy { kNaive, kSelective };
enum class CropModel { kIdentical, kRandom };

const char* to_string(Strategy s);
const char* to_string(CropModel m);

struct MonteCarloConfig {
  Strategy strategy = Strategy::kSelective;
  SamplerConfig sampler;
  CropModel crop_model = CropModel::kRandom;
  CropRange crop_range;  // used by CropModel::kRandom
  int image_size = 32;
  int grid = 32;         // patches per side of each view
  int patch_size = 2;
  long trials = 100000;
  std::uint64_t seed = 0;
  int workers = 1;

  // Throws std::invalid_argument; trials must be >= 1000.
  void validate() const;
};

struct AsymmetryReport {
  std::string strategy;
  std::string crop_model;
  double s1 = 0.0;
  double s2 = 0.0;
  double gamma = 0.0;
  int grid = 0;
  long trials = 0;
  double analytic = 0.0;
  double monte_carlo = 0.0;
  double std_error = 0.0;  // sample stddev / sqrt(trials)

  double analytic_non_overlap() const { return 1.0 - analytic; }
  double monte_carlo_non_overlap() const { return 1.0 - monte_carlo; }
};

// Per-trial overlap of one positive pair: S(P1 ∩ P2) / S(B2), the fraction
// of view 2's crop covered by patches sampled in both views. Each trial uses
// its own derived random streams, so results do not depend on `workers`.
AsymmetryReport monte_carlo_overlap(const MonteCarloConfig& config);

// Both strategies on the same crops and view-1 samples, trial by trial.
struct PairedComparison {
  AsymmetryReport naive;
  AsymmetryReport selective;
  double mean_difference = 0.0;  // selective - naive
  double difference_std_error = 0.0;
  double ratio = 0.0;            // selective / naive
  double ratio_std_error = 0.0;  // delta method
};
PairedComparison compare_strategies(const MonteCarloConfig& config);

// Per-trial samples, exposed for tests and custom statistics.
std::vector<double> overlap_samples(const MonteCarloConfig& config);

void write_report_csv_header(std::ostream& out);
void write_report_csv_row(std::ostream& out, const AsymmetryReport& report);
void write_report_table(std::ostream& out,
                        const std::vector<AsymmetryReport>& reports);

// Density curve samples (gamma, s1, r, p_sel) on `points` evenly spaced r.
void write_density_csv(std::ostream& out, const std::vector<double>& gammas,
                       double s1, int points);

}  // namespace aps

#endif  // APS_ANALYZER_H_
