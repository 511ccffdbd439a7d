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

#ifndef APS_COMMANDS_H_
#define APS_COMMANDS_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "aps/analyzer.h"
#include "aps/harness.h"

namespace aps {

struct CommandOptions {
  std::string config_path;  // empty: built-in defaults
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
  bool verbose = false;
};

// Union of every key the subcommands accept.
const std::set<std::string>& cli_config_keys();
ConfigFile load_cli_config(const CommandOptions& options);

struct AnalyzeConfig {
  std::vector<double> ratios{0.25};
  std::vector<double> gammas{0.0, 1.0, 2.0, 3.0, 4.0};
  long trials = 20000;
  int grid = 32;
  int patch_size = 2;
  int image_size = 32;
  CropModel crop_model = CropModel::kRandom;
  int workers = 1;
  int density_points = 101;
  std::uint64_t seed = 0;

  void validate() const;
};
AnalyzeConfig analyze_config_from(const ConfigFile& file);

struct AnalyzeResult {
  std::vector<AsymmetryReport> rows;
  std::vector<PairedComparison> pairs;
};
// Writes asymmetry.csv, ratio.csv and density.csv into out_dir.
AnalyzeResult cmd_analyze(const CommandOptions& options, std::ostream& log);

struct DemoConfig {
  std::string input;  // P6 file; empty: one synthetic image
  int image_size = 64;
  int view_size = 32;
  int patch_size = 2;
  double ratio = 0.25;
  double gamma = 3.0;
  bool identical_crops = false;
  std::uint64_t seed = 0;

  void validate() const;
};
DemoConfig demo_config_from(const ConfigFile& file);

struct DemoResult {
  PatchIndexSet view1;
  PatchIndexSet view2;
  OverlapProfile profile;
  double mean_overlap_selected = 0.0;
  double mean_overlap_unselected = 0.0;
};
// Writes crop1.ppm, crop2.ppm, view1_mask.ppm, view2_overlap.ppm,
// view2_mask.ppm and demo.csv into out_dir.
DemoResult cmd_demo(const CommandOptions& options, std::ostream& log);

struct TrainSummary {
  TrainConfig config;
  long steps = 0;
  double first_window_loss = 0.0;
  double last_window_loss = 0.0;
  double probe_accuracy = 0.0;
  double shuffled_accuracy = 0.0;
  std::vector<std::string> checkpoints;
};
// `preset` is used when no config file is given.
TrainSummary cmd_train(const CommandOptions& options, std::ostream& log,
                       const std::string& preset = "smoke");

struct ProbeSummary {
  double accuracy = 0.0;
  double recorded_accuracy = -1.0;
  long step = 0;
};
ProbeSummary cmd_probe(const CommandOptions& options,
                       const std::string& checkpoint, std::ostream& log);

// Mean loss over log[begin, begin + count).
double window_mean(std::span<const MetricRecord> log, std::size_t begin,
                   std::size_t count);

}  // namespace aps

#endif  // APS_COMMANDS_H_
