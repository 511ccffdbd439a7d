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

#ifndef APS_HARNESS_H_
#define APS_HARNESS_H_

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "aps/augment.h"
#include "aps/config.h"
#include "aps/data.h"
#include "aps/encoder.h"
#include "aps/optim.h"
#include "aps/random.h"
#include "aps/sampler.h"

namespace aps {

struct DatasetSpec {
  std::string source = "synthetic";  // "synthetic" | "cifar"
  std::string path;                  // cifar training file
  std::string probe_path;            // cifar held-out file
  int classes = 2;
  int per_class = 64;
  int probe_per_class = 32;
  int image_size = 32;
  long limit = 0;  // cap on cifar records, 0 = all
  std::uint64_t seed = 7;
};

struct MomentumEncoderConfig {
  bool enabled = false;
  double start = 0.99;
  double end = 1.0;
};

struct TrainConfig {
  DatasetSpec data;
  std::string backbone = "vit-tiny";
  std::string heads = "cifar";
  std::string augment = "cifar";  // "cifar" | "imagenet" | "identity"
  SamplerConfig sampler;
  double tau = 0.1;
  AdamWConfig optim;
  int batch_size = 512;
  double epochs = 1600;
  double warmup_epochs = 20;
  long max_steps = 0;  // > 0 truncates the run and compresses the schedule
  ClipConfig clip{false, 0.4, 1.05};
  MomentumEncoderConfig momentum_encoder;
  std::uint64_t seed = 0;
  long checkpoint_every = 0;  // steps; 0 = final checkpoint only
  int knn_k = 5;
  double init_std = 0.02;

  static TrainConfig cifar();
  static TrainConfig smoke();
  static TrainConfig preset(const std::string& name);

  BackboneConfig backbone_config() const;
  HeadConfig head_config() const;
  AugmentPair augment_pair() const;
  void validate() const;
};

// Keys accepted by config files for training and probing.
const std::set<std::string>& train_config_keys();
// Starts from the preset named in [run] preset (default "smoke") and
// applies every key present in the file.
TrainConfig train_config_from(const ConfigFile& file);
TrainConfig parse_train_config(const std::string& text);
std::string to_config_text(const TrainConfig& cfg);

struct MetricRecord {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  bool clip_triggered = false;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

// Random streams are derived from (seed, step, source id), so the step
// counter together with the seed is the complete generator state.
struct TrainState {
  long step = 0;
  long epoch = 0;
  std::uint64_t seed = 0;
  Model model;
  std::optional<Model> target;
  OptimState optim;
  std::vector<std::string> clip_groups;
  std::vector<ClipState> clips;
  std::vector<MetricRecord> log;
};

struct Datasets {
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> probe;
};
Datasets load_datasets(const DatasetSpec& spec);

long steps_per_epoch(const TrainConfig& cfg, std::size_t dataset_size);
long total_steps(const TrainConfig& cfg, std::size_t dataset_size);
long warmup_steps(const TrainConfig& cfg, std::size_t dataset_size);

TrainState init_train_state(const TrainConfig& cfg);

// Drop-last batching over a per-epoch permutation seeded by (seed, epoch).
std::vector<const ImageRecord*> batch_for_step(
    const TrainConfig& cfg, const std::vector<ImageRecord>& data, long step);

struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  bool clip_triggered = false;
  int padded = 0;
};

struct StepOptions {
  long total_steps = 1;
  long warmup_steps = 0;
  long steps_per_epoch = 1;
  std::string dump_path;  // checkpoint written before a NumericalError
};

StepResult train_step(TrainState& state, const TrainConfig& cfg,
                      std::span<const ImageRecord* const> batch,
                      const StepOptions& options);

// Loss and gradient of one step without touching the state; exposed for
// gradient checks and regression tests.
struct StepGradient {
  double loss = 0.0;
  ModelParams grads;
  int padded = 0;
};
StepGradient step_gradient(const TrainState& state, const TrainConfig& cfg,
                           std::span<const ImageRecord* const> batch);

// Full-image (s = 1) class-token representations, frozen statistics.
Eigen::MatrixXd embed_full(const Model& model,
                           std::span<const ImageRecord> records);

double knn_probe(const Model& model, std::span<const ImageRecord> train,
                 std::span<const ImageRecord> test, int k);
std::vector<ImageRecord> shuffled_labels(std::vector<ImageRecord> records,
                                         std::uint64_t seed);

void write_metric_log(const std::string& path,
                      std::span<const MetricRecord> log);

void checkpoint_save(const std::string& path, const TrainState& state,
                     const TrainConfig& cfg, double probe_accuracy = -1.0);
struct LoadedCheckpoint {
  TrainConfig config;
  TrainState state;
  double probe_accuracy = -1.0;  // negative when none was recorded
};
LoadedCheckpoint checkpoint_load(const std::string& path);

}  // namespace aps

#endif  // APS_HARNESS_H_
