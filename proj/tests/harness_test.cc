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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "aps/checkpoint.h"
#include "aps/contrastive.h"
#include "aps/errors.h"
#include "aps/harness.h"

namespace aps {
namespace {

namespace fs = std::filesystem;

std::string temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "aps_harness_test";
  fs::create_directories(dir);
  return (dir / name).string();
}

TrainConfig small_config() {
  TrainConfig c = TrainConfig::smoke();
  c.data.per_class = 8;
  c.data.probe_per_class = 8;
  c.batch_size = 8;
  c.max_steps = 6;
  c.optim.lr = 1e-3;
  return c;
}

StepOptions options_for(const TrainConfig& cfg, std::size_t n) {
  StepOptions o;
  o.total_steps = total_steps(cfg, n);
  o.warmup_steps = warmup_steps(cfg, n);
  o.steps_per_epoch = steps_per_epoch(cfg, n);
  return o;
}

double max_param_diff(const ModelParams& a, const ModelParams& b) {
  const auto pa = tensor_ptrs(a);
  const auto pb = tensor_ptrs(b);
  double m = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    m = std::max(m, (*pa[i] - *pb[i]).cwiseAbs().maxCoeff());
  }
  return m;
}

TEST(Harness, ZeroLearningRateFreezesParameters) {
  TrainConfig cfg = small_config();
  cfg.optim.lr = 0.0;
  const Datasets d = load_datasets(cfg.data);
  TrainState s = init_train_state(cfg);
  const ModelParams before = s.model.params;
  const auto opts = options_for(cfg, d.train.size());
  for (int i = 0; i < 3; ++i) {
    const auto batch = batch_for_step(cfg, d.train, s.step);
    const StepResult r = train_step(s, cfg, batch, opts);
    EXPECT_EQ(r.lr, 0.0);
    EXPECT_TRUE(std::isfinite(r.loss));
  }
  EXPECT_EQ(max_param_diff(before, s.model.params), 0.0);
  EXPECT_EQ(s.step, 3);
  EXPECT_EQ(s.log.size(), 3u);
}

TEST(Harness, RunsAreDeterministic) {
  const TrainConfig cfg = small_config();
  const Datasets d = load_datasets(cfg.data);
  const auto opts = options_for(cfg, d.train.size());
  auto run = [&] {
    TrainState s = init_train_state(cfg);
    for (int i = 0; i < 3; ++i) {
      train_step(s, cfg, batch_for_step(cfg, d.train, s.step), opts);
    }
    return s;
  };
  const TrainState a = run();
  const TrainState b = run();
  EXPECT_EQ(a.log, b.log);
  EXPECT_EQ(max_param_diff(a.model.params, b.model.params), 0.0);
}

TEST(Harness, BatchOrderDoesNotMatter) {
  const TrainConfig cfg = small_config();
  const Datasets d = load_datasets(cfg.data);
  const TrainState s = init_train_state(cfg);
  auto batch = batch_for_step(cfg, d.train, 0);
  const StepGradient a = step_gradient(s, cfg, batch);
  std::reverse(batch.begin(), batch.end());
  const StepGradient b = step_gradient(s, cfg, batch);
  EXPECT_NEAR(a.loss, b.loss, 1e-10);
  EXPECT_LT(max_param_diff(a.grads, b.grads), 1e-10);
}

TEST(Harness, BatchingCoversEachEpochOnce) {
  const TrainConfig cfg = small_config();
  const Datasets d = load_datasets(cfg.data);
  const long spe = steps_per_epoch(cfg, d.train.size());
  ASSERT_EQ(spe, 2);
  std::set<const ImageRecord*> seen;
  for (long st = 0; st < spe; ++st) {
    for (const auto* r : batch_for_step(cfg, d.train, st)) seen.insert(r);
  }
  EXPECT_EQ(seen.size(), d.train.size());
  EXPECT_NE(batch_for_step(cfg, d.train, 0), batch_for_step(cfg, d.train, spe));
}

// Full sampling, no asymmetry and identical crops reduce a step to the plain
// two-view objective over whole images.
TEST(Harness, FullSamplingMatchesPlainTwoViewStep) {
  TrainConfig cfg = small_config();
  cfg.augment = "identity";
  cfg.sampler.s1 = 1.0;
  cfg.sampler.s2 = 1.0;
  cfg.sampler.gamma = 0.0;
  const Datasets d = load_datasets(cfg.data);
  const TrainState s = init_train_state(cfg);
  const auto batch = batch_for_step(cfg, d.train, 0);
  const StepGradient got = step_gradient(s, cfg, batch);
  EXPECT_EQ(got.padded, 0);

  std::vector<TokenSequence> seqs;
  for (const auto* r : batch) seqs.push_back(patchify_full(r->pixels, s.model.backbone));
  BranchCache c1, c2;
  const BranchOutput o1 = forward_branch(s.model, seqs, NormMode::kBatch, &c1);
  const BranchOutput o2 = forward_branch(s.model, seqs, NormMode::kBatch, &c2);
  const LossResult l = contrastive_loss(o1.q, o1.z, o2.q, o2.z, cfg.tau);
  ModelParams ref = zeros_like(s.model.params);
  const Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(o1.z.rows(), o1.z.cols());
  backward_branch(s.model, c1, l.grad_q[0], dz, ref);
  backward_branch(s.model, c2, l.grad_q[1], dz, ref);
  EXPECT_NEAR(got.loss, l.value, 1e-10 * std::abs(l.value));
  EXPECT_LT(max_param_diff(got.grads, ref), 1e-10);
}

TEST(Harness, MultiViewStepRuns) {
  TrainConfig cfg = small_config();
  cfg.sampler.n_views = 2;
  cfg.clip.enabled = true;
  const Datasets d = load_datasets(cfg.data);
  TrainState s = init_train_state(cfg);
  const StepResult r =
      train_step(s, cfg, batch_for_step(cfg, d.train, 0), options_for(cfg, d.train.size()));
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_GT(r.grad_norm, 0.0);
}

TEST(Harness, ClipGroupsFollowTensorGroups) {
  TrainConfig cfg = small_config();
  cfg.clip.enabled = true;
  const Datasets d = load_datasets(cfg.data);
  TrainState s = init_train_state(cfg);
  std::vector<std::string> expect;
  for (const auto& g : tensor_groups(s.model.params)) {
    if (std::find(expect.begin(), expect.end(), g) == expect.end()) expect.push_back(g);
  }
  EXPECT_EQ(s.clip_groups, expect);
  EXPECT_EQ(s.clip_groups.front(), "embed");
  EXPECT_EQ(s.clip_groups.back(), "predictor");
  const auto opts = options_for(cfg, d.train.size());
  const StepResult first = train_step(s, cfg, batch_for_step(cfg, d.train, 0), opts);
  EXPECT_FALSE(first.clip_triggered);  // the first call only seeds the EMA
  for (const auto& c : s.clips) EXPECT_TRUE(c.initialized());
}

TEST(Harness, MomentumEncoderTracksOnline) {
  TrainConfig cfg = small_config();
  cfg.momentum_encoder.enabled = true;
  const Datasets d = load_datasets(cfg.data);
  TrainState s = init_train_state(cfg);
  ASSERT_TRUE(s.target.has_value());
  EXPECT_EQ(max_param_diff(s.target->params, s.model.params), 0.0);
  const ModelParams before = s.target->params;
  const auto opts = options_for(cfg, d.train.size());
  // Step 0 sits at the bottom of the warmup ramp, so take a few.
  for (int i = 0; i < 3; ++i) train_step(s, cfg, batch_for_step(cfg, d.train, s.step), opts);
  const double moved_target = max_param_diff(before, s.target->params);
  const double gap = max_param_diff(s.model.params, before);
  EXPECT_GT(moved_target, 0.0);
  EXPECT_LT(moved_target, 0.02 * gap);
}

TEST(Harness, NonFiniteStateAbortsWithDump) {
  const TrainConfig cfg = small_config();
  const Datasets d = load_datasets(cfg.data);
  TrainState s = init_train_state(cfg);
  s.model.params.encoder.cls_token(0, 0) = std::numeric_limits<double>::quiet_NaN();
  StepOptions opts = options_for(cfg, d.train.size());
  opts.dump_path = temp_path("nan_dump.ckpt");
  fs::remove(opts.dump_path);
  EXPECT_THROW(train_step(s, cfg, batch_for_step(cfg, d.train, 0), opts), NumericalError);
  EXPECT_TRUE(fs::exists(opts.dump_path));
  EXPECT_EQ(s.step, 0);
  EXPECT_NO_THROW(checkpoint_load(opts.dump_path));
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TrainConfig cfg = small_config();
  cfg.clip.enabled = true;
  cfg.momentum_encoder.enabled = true;
  const Datasets d = load_datasets(cfg.data);
  TrainState s = init_train_state(cfg);
  const auto opts = options_for(cfg, d.train.size());
  for (int i = 0; i < 2; ++i) train_step(s, cfg, batch_for_step(cfg, d.train, s.step), opts);
  const std::string a = temp_path("a.ckpt");
  const std::string b = temp_path("b.ckpt");
  checkpoint_save(a, s, cfg, 0.75);
  const LoadedCheckpoint loaded = checkpoint_load(a);
  EXPECT_EQ(loaded.probe_accuracy, 0.75);
  EXPECT_EQ(loaded.state.step, 2);
  EXPECT_EQ(to_config_text(loaded.config), to_config_text(cfg));
  checkpoint_save(b, loaded.state, loaded.config, loaded.probe_accuracy);
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  const std::string ba((std::istreambuf_iterator<char>(fa)), {});
  const std::string bb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(ba, bb);
}

TEST(Checkpoint, ResumeReproducesNextStep) {
  TrainConfig cfg = small_config();
  cfg.clip.enabled = true;
  const Datasets d = load_datasets(cfg.data);
  const auto opts = options_for(cfg, d.train.size());
  TrainState s = init_train_state(cfg);
  for (int i = 0; i < 2; ++i) train_step(s, cfg, batch_for_step(cfg, d.train, s.step), opts);
  const std::string p = temp_path("resume.ckpt");
  checkpoint_save(p, s, cfg);
  TrainState r = checkpoint_load(p).state;
  const StepResult x = train_step(s, cfg, batch_for_step(cfg, d.train, s.step), opts);
  const StepResult y = train_step(r, cfg, batch_for_step(cfg, d.train, r.step), opts);
  EXPECT_EQ(x.loss, y.loss);
  EXPECT_EQ(x.clip_triggered, y.clip_triggered);
  EXPECT_EQ(max_param_diff(s.model.params, r.model.params), 0.0);
  EXPECT_EQ(s.log, r.log);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const TrainConfig cfg = small_config();
  const TrainState s = init_train_state(cfg);
  const std::string p = temp_path("corrupt.ckpt");
  checkpoint_save(p, s, cfg);
  std::ifstream f(p, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(f)), {});

  EXPECT_THROW(deserialize_blob(bytes.substr(0, bytes.size() - 9)), CheckpointError);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(deserialize_blob(flipped), CheckpointError);
  std::string version = bytes;
  version[8] = static_cast<char>(kCheckpointVersion + 1);
  EXPECT_THROW(deserialize_blob(version), CheckpointError);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_blob(magic), CheckpointError);
  EXPECT_THROW(deserialize_blob(bytes + "x"), CheckpointError);
  EXPECT_THROW(checkpoint_load(temp_path("absent.ckpt")), CheckpointError);
}

TEST(Checkpoint, BlobRoundTrip) {
  CheckpointBlob blob;
  blob.config_echo = "[run]\nseed = 1\n";
  blob.meta = {{"a", "1"}, {"b", "two"}};
  blob.arrays.push_back({"x", {2, 3}, {1, 2, 3, 4, 5, 6}});
  blob.arrays.push_back({"empty", {0}, {}});
  const CheckpointBlob back = deserialize_blob(serialize_blob(blob));
  EXPECT_EQ(back.config_echo, blob.config_echo);
  EXPECT_EQ(back.meta_value("b"), "two");
  EXPECT_EQ(back.array("x").shape, (std::vector<std::int64_t>{2, 3}));
  EXPECT_EQ(back.array("x").data, blob.arrays[0].data);
  EXPECT_TRUE(back.array("empty").data.empty());
}

TEST(Probe, AccuracyInRangeAndValidated) {
  const TrainConfig cfg = small_config();
  const Datasets d = load_datasets(cfg.data);
  const TrainState s = init_train_state(cfg);
  const double acc = knn_probe(s.model, d.train, d.probe, 5);
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
  EXPECT_THROW(knn_probe(s.model, d.train, d.probe, 0), std::invalid_argument);
  EXPECT_THROW(knn_probe(s.model, d.train, d.probe,
                         static_cast<int>(d.train.size()) + 1),
               std::invalid_argument);
  EXPECT_THROW(knn_probe(s.model, d.train, {}, 1), std::invalid_argument);
}

TEST(Probe, SelfProbeIsPerfectAtKOne) {
  const TrainConfig cfg = small_config();
  const Datasets d = load_datasets(cfg.data);
  const TrainState s = init_train_state(cfg);
  EXPECT_EQ(knn_probe(s.model, d.train, d.train, 1), 1.0);
}

TEST(Probe, ShuffledLabelsStayNearChance) {
  TrainConfig cfg = small_config();
  cfg.data.per_class = 48;
  cfg.data.probe_per_class = 48;
  const Datasets d = load_datasets(cfg.data);
  const TrainState s = init_train_state(cfg);
  const auto shuffled = shuffled_labels(d.train, 3);
  ASSERT_EQ(shuffled.size(), d.train.size());
  std::vector<int> before(2), after(2);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    ++before[static_cast<std::size_t>(d.train[i].label)];
    ++after[static_cast<std::size_t>(shuffled[i].label)];
  }
  EXPECT_EQ(before, after);
  const double acc = knn_probe(s.model, shuffled, d.probe, 5);
  const double n = static_cast<double>(d.probe.size());
  const double sigma = std::sqrt(0.25 / n);
  EXPECT_NEAR(acc, 0.5, 3.0 * sigma);
}

TEST(Config, UnknownKeysFailClosed) {
  EXPECT_THROW(parse_train_config("[optim]\nlearning_rate = 1\n"), ConfigError);
  EXPECT_THROW(parse_train_config("[nosuch]\nlr = 1\n"), ConfigError);
  EXPECT_THROW(parse_train_config("lr = 1\n"), ConfigError);
  EXPECT_THROW(parse_train_config("[optim]\nlr = fast\n"), ConfigError);
  EXPECT_THROW(parse_train_config("[sampler]\ns1 = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_train_config("[run]\npreset = huge\n"), ConfigError);
}

TEST(Config, TextRoundTrip) {
  TrainConfig c = TrainConfig::smoke();
  c.optim.lr = 0.1 + 0.2;
  c.sampler.gamma = 2.5;
  c.clip.enabled = true;
  c.momentum_encoder.enabled = true;
  const std::string text = to_config_text(c);
  const TrainConfig back = parse_train_config(text);
  EXPECT_EQ(back.optim.lr, c.optim.lr);
  EXPECT_EQ(to_config_text(back), text);
  const TrainConfig partial = parse_train_config("[optim]\nlr = 0.25\n");
  EXPECT_EQ(partial.optim.lr, 0.25);
  EXPECT_EQ(partial.backbone, "vit-micro");
}

TEST(Config, CifarPresetValues) {
  const TrainConfig c = TrainConfig::cifar();
  EXPECT_EQ(c.backbone, "vit-tiny");
  EXPECT_EQ(c.batch_size, 512);
  EXPECT_EQ(c.epochs, 1600);
  EXPECT_EQ(c.warmup_epochs, 20);
  EXPECT_EQ(c.tau, 0.1);
  EXPECT_EQ(c.optim.weight_decay, 0.05);
  EXPECT_EQ(c.optim.beta1, 0.9);
  EXPECT_EQ(c.optim.beta2, 0.999);
  EXPECT_EQ(c.sampler.s1, 0.25);
  EXPECT_EQ(c.sampler.s2, 0.25);
  EXPECT_EQ(c.sampler.gamma, 3.0);
  EXPECT_EQ(c.data.classes, 10);
  const BackboneConfig b = c.backbone_config();
  EXPECT_EQ(b.image_size, 32);
  EXPECT_EQ(b.patch_size, 2);
}

TEST(Schedule, StepCounts) {
  TrainConfig c = small_config();
  c.max_steps = 0;
  c.epochs = 3;
  c.warmup_epochs = 1;
  EXPECT_EQ(steps_per_epoch(c, 16), 2);
  EXPECT_EQ(steps_per_epoch(c, 17), 2);
  EXPECT_EQ(total_steps(c, 16), 6);
  EXPECT_EQ(warmup_steps(c, 16), 2);
  c.max_steps = 3;
  EXPECT_EQ(total_steps(c, 16), 3);
  EXPECT_THROW(steps_per_epoch(c, 7), std::invalid_argument);
}

TEST(Harness, MetricLogFormat) {
  std::vector<MetricRecord> log{{1, 0.5, 2.0, 3.0, true}, {2, 0.25, 1.5, 2.5, false}};
  const std::string p = temp_path("metrics.csv");
  write_metric_log(p, log);
  std::ifstream f(p);
  std::string header, row;
  std::getline(f, header);
  std::getline(f, row);
  EXPECT_EQ(header, "step,lr,loss,grad_norm,clip_triggered");
  EXPECT_EQ(row.substr(0, 6), "1,0.5,");
  EXPECT_EQ(row.back(), '1');
}

}  // namespace
}  // namespace aps
