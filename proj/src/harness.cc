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

#include "aps/harness.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "aps/checkpoint.h"
#include "aps/contrastive.h"
#include "aps/errors.h"
#include "aps/geometry.h"

namespace aps {

namespace {

constexpr std::uint64_t kInitStream = 0x1a17;
constexpr std::uint64_t kBatchStream = 0xba7c;
constexpr std::uint64_t kProbeSeedOffset = 0x5eed;

Rng sample_stream(std::uint64_t seed, long step, std::uint64_t source_id) {
  const std::uint64_t step_key =
      mix_seed(seed ^ mix_seed(static_cast<std::uint64_t>(step) + 1));
  return derive_stream(step_key, source_id);
}

}  // namespace

// --------------------------------------------------------------------------
// Configuration

TrainConfig TrainConfig::cifar() {
  TrainConfig c;
  c.data.source = "cifar";
  c.data.classes = 10;
  return c;
}

TrainConfig TrainConfig::smoke() {
  TrainConfig c;
  c.backbone = "vit-micro";
  c.heads = "micro";
  c.data.source = "synthetic";
  c.data.classes = 2;
  c.data.per_class = 64;
  c.data.probe_per_class = 32;
  c.batch_size = 32;
  c.epochs = 50;
  c.warmup_epochs = 5;
  c.max_steps = 200;
  c.checkpoint_every = 100;
  return c;
}

TrainConfig TrainConfig::preset(const std::string& name) {
  if (name == "cifar") return cifar();
  if (name == "smoke") return smoke();
  throw ConfigError("unknown training preset '" + name + "'");
}

BackboneConfig TrainConfig::backbone_config() const {
  return BackboneConfig::preset(backbone);
}

HeadConfig TrainConfig::head_config() const { return HeadConfig::preset(heads); }

AugmentPair TrainConfig::augment_pair() const {
  const int size = backbone_config().image_size;
  if (augment == "cifar") {
    return {AugmentParams::cifar(size), AugmentParams::cifar(size)};
  }
  if (augment == "imagenet") {
    return {AugmentParams::imagenet_view1(size),
            AugmentParams::imagenet_view2(size)};
  }
  if (augment == "identity") {
    return {AugmentParams::identity(size), AugmentParams::identity(size)};
  }
  throw ConfigError("unknown augmentation preset '" + augment + "'");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid training config: " + what);
  };
  require(data.source == "synthetic" || data.source == "cifar",
          "data.source must be synthetic or cifar");
  require(data.classes >= 1, "data.classes must be >= 1");
  require(data.per_class >= 1, "data.per_class must be >= 1");
  require(data.probe_per_class >= 1, "data.probe_per_class must be >= 1");
  require(data.image_size >= 1, "data.image_size must be >= 1");
  require(data.limit >= 0, "data.limit must be >= 0");
  try {
    backbone_config().validate();
    head_config().validate();
    augment_pair();
    sampler.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid training config: ") + e.what());
  }
  require(tau > 0.0, "loss.tau must be > 0");
  require(optim.lr >= 0.0, "optim.lr must be >= 0");
  require(optim.beta1 >= 0.0 && optim.beta1 < 1.0, "optim.beta1 in [0,1)");
  require(optim.beta2 >= 0.0 && optim.beta2 < 1.0, "optim.beta2 in [0,1)");
  require(optim.eps > 0.0, "optim.eps must be > 0");
  require(optim.weight_decay >= 0.0, "optim.weight_decay must be >= 0");
  require(batch_size >= 2, "optim.batch_size must be >= 2");
  require(epochs > 0.0, "schedule.epochs must be > 0");
  require(warmup_epochs >= 0.0 && warmup_epochs <= epochs,
          "schedule.warmup_epochs must lie in [0, epochs]");
  require(max_steps >= 0, "schedule.max_steps must be >= 0");
  require(clip.momentum >= 0.0 && clip.momentum < 1.0,
          "clip.momentum must lie in [0,1)");
  require(clip.alpha > 0.0, "clip.alpha must be > 0");
  require(momentum_encoder.start >= 0.0 && momentum_encoder.start <= 1.0 &&
              momentum_encoder.end >= momentum_encoder.start &&
              momentum_encoder.end <= 1.0,
          "momentum_encoder needs 0 <= start <= end <= 1");
  require(checkpoint_every >= 0, "run.checkpoint_every must be >= 0");
  require(knn_k >= 1, "run.knn_k must be >= 1");
  require(init_std > 0.0, "run.init_std must be > 0");
}

const std::set<std::string>& train_config_keys() {
  static const std::set<std::string> keys = {
      "run.preset",          "run.seed",
      "run.checkpoint_every", "run.knn_k",
      "run.init_std",        "data.source",
      "data.path",           "data.probe_path",
      "data.classes",        "data.per_class",
      "data.probe_per_class", "data.image_size",
      "data.limit",          "data.seed",
      "model.backbone",      "model.heads",
      "augment.preset",      "sampler.s1",
      "sampler.s2",          "sampler.gamma",
      "sampler.views",       "loss.tau",
      "optim.lr",            "optim.beta1",
      "optim.beta2",         "optim.eps",
      "optim.weight_decay",  "optim.batch_size",
      "schedule.epochs",     "schedule.warmup_epochs",
      "schedule.max_steps",  "clip.enabled",
      "clip.momentum",       "clip.alpha",
      "momentum_encoder.enabled", "momentum_encoder.start",
      "momentum_encoder.end",
  };
  return keys;
}

namespace {

std::uint64_t get_seed(const ConfigFile& f, const std::string& section,
                       const std::string& key, std::uint64_t fallback) {
  const long v = f.get_long(section, key, static_cast<long>(fallback));
  if (v < 0) throw ConfigError("config: " + section + "." + key + " must be >= 0");
  return static_cast<std::uint64_t>(v);
}

int get_int(const ConfigFile& f, const std::string& section,
            const std::string& key, int fallback) {
  const long v = f.get_long(section, key, fallback);
  if (v < INT32_MIN || v > INT32_MAX) {
    throw ConfigError("config: " + section + "." + key + " out of range");
  }
  return static_cast<int>(v);
}

}  // namespace

TrainConfig train_config_from(const ConfigFile& f) {
  TrainConfig c = TrainConfig::preset(f.get_string("run", "preset", "smoke"));
  c.seed = get_seed(f, "run", "seed", c.seed);
  c.checkpoint_every = f.get_long("run", "checkpoint_every", c.checkpoint_every);
  c.knn_k = get_int(f, "run", "knn_k", c.knn_k);
  c.init_std = f.get_double("run", "init_std", c.init_std);

  DatasetSpec& d = c.data;
  d.source = f.get_string("data", "source", d.source);
  d.path = f.get_string("data", "path", d.path);
  d.probe_path = f.get_string("data", "probe_path", d.probe_path);
  d.classes = get_int(f, "data", "classes", d.classes);
  d.per_class = get_int(f, "data", "per_class", d.per_class);
  d.probe_per_class = get_int(f, "data", "probe_per_class", d.probe_per_class);
  d.image_size = get_int(f, "data", "image_size", d.image_size);
  d.limit = f.get_long("data", "limit", d.limit);
  d.seed = get_seed(f, "data", "seed", d.seed);

  c.backbone = f.get_string("model", "backbone", c.backbone);
  c.heads = f.get_string("model", "heads", c.heads);
  c.augment = f.get_string("augment", "preset", c.augment);

  c.sampler.s1 = f.get_double("sampler", "s1", c.sampler.s1);
  c.sampler.s2 = f.get_double("sampler", "s2", c.sampler.s2);
  c.sampler.gamma = f.get_double("sampler", "gamma", c.sampler.gamma);
  c.sampler.n_views = get_int(f, "sampler", "views", c.sampler.n_views);

  c.tau = f.get_double("loss", "tau", c.tau);

  c.optim.lr = f.get_double("optim", "lr", c.optim.lr);
  c.optim.beta1 = f.get_double("optim", "beta1", c.optim.beta1);
  c.optim.beta2 = f.get_double("optim", "beta2", c.optim.beta2);
  c.optim.eps = f.get_double("optim", "eps", c.optim.eps);
  c.optim.weight_decay =
      f.get_double("optim", "weight_decay", c.optim.weight_decay);
  c.batch_size = get_int(f, "optim", "batch_size", c.batch_size);

  c.epochs = f.get_double("schedule", "epochs", c.epochs);
  c.warmup_epochs = f.get_double("schedule", "warmup_epochs", c.warmup_epochs);
  c.max_steps = f.get_long("schedule", "max_steps", c.max_steps);

  c.clip.enabled = f.get_bool("clip", "enabled", c.clip.enabled);
  c.clip.momentum = f.get_double("clip", "momentum", c.clip.momentum);
  c.clip.alpha = f.get_double("clip", "alpha", c.clip.alpha);

  auto& me = c.momentum_encoder;
  me.enabled = f.get_bool("momentum_encoder", "enabled", me.enabled);
  me.start = f.get_double("momentum_encoder", "start", me.start);
  me.end = f.get_double("momentum_encoder", "end", me.end);

  c.validate();
  return c;
}

TrainConfig parse_train_config(const std::string& text) {
  return train_config_from(ConfigFile::parse(text, train_config_keys()));
}

std::string to_config_text(const TrainConfig& c) {
  std::ostringstream o;
  auto num = [](double v) { return format_double(v); };
  auto flag = [](bool b) { return b ? "true" : "false"; };
  o << "[run]\n"
    << "seed = " << c.seed << "\n"
    << "checkpoint_every = " << c.checkpoint_every << "\n"
    << "knn_k = " << c.knn_k << "\n"
    << "init_std = " << num(c.init_std) << "\n\n"
    << "[data]\n"
    << "source = " << c.data.source << "\n"
    << "path = " << c.data.path << "\n"
    << "probe_path = " << c.data.probe_path << "\n"
    << "classes = " << c.data.classes << "\n"
    << "per_class = " << c.data.per_class << "\n"
    << "probe_per_class = " << c.data.probe_per_class << "\n"
    << "image_size = " << c.data.image_size << "\n"
    << "limit = " << c.data.limit << "\n"
    << "seed = " << c.data.seed << "\n\n"
    << "[model]\n"
    << "backbone = " << c.backbone << "\n"
    << "heads = " << c.heads << "\n\n"
    << "[augment]\n"
    << "preset = " << c.augment << "\n\n"
    << "[sampler]\n"
    << "s1 = " << num(c.sampler.s1) << "\n"
    << "s2 = " << num(c.sampler.s2) << "\n"
    << "gamma = " << num(c.sampler.gamma) << "\n"
    << "views = " << c.sampler.n_views << "\n\n"
    << "[loss]\n"
    << "tau = " << num(c.tau) << "\n\n"
    << "[optim]\n"
    << "lr = " << num(c.optim.lr) << "\n"
    << "beta1 = " << num(c.optim.beta1) << "\n"
    << "beta2 = " << num(c.optim.beta2) << "\n"
    << "eps = " << num(c.optim.eps) << "\n"
    << "weight_decay = " << num(c.optim.weight_decay) << "\n"
    << "batch_size = " << c.batch_size << "\n\n"
    << "[schedule]\n"
    << "epochs = " << num(c.epochs) << "\n"
    << "warmup_epochs = " << num(c.warmup_epochs) << "\n"
    << "max_steps = " << c.max_steps << "\n\n"
    << "[clip]\n"
    << "enabled = " << flag(c.clip.enabled) << "\n"
    << "momentum = " << num(c.clip.momentum) << "\n"
    << "alpha = " << num(c.clip.alpha) << "\n\n"
    << "[momentum_encoder]\n"
    << "enabled = " << flag(c.momentum_encoder.enabled) << "\n"
    << "start = " << num(c.momentum_encoder.start) << "\n"
    << "end = " << num(c.momentum_encoder.end) << "\n";
  return o.str();
}

// --------------------------------------------------------------------------
// Data and schedule

Datasets load_datasets(const DatasetSpec& spec) {
  Datasets out;
  if (spec.source == "synthetic") {
    out.train = synth_dataset({spec.per_class, spec.classes, spec.image_size,
                               spec.seed});
    out.probe = synth_dataset({spec.probe_per_class, spec.classes,
                               spec.image_size, spec.seed + kProbeSeedOffset});
    return out;
  }
  if (spec.source != "cifar") {
    throw ConfigError("unknown data source '" + spec.source + "'");
  }
  if (spec.path.empty() || spec.probe_path.empty()) {
    throw ConfigError("cifar data needs data.path and data.probe_path");
  }
  const int max_label = spec.classes - 1;
  out.train = load_cifar(spec.path, max_label);
  out.probe = load_cifar(spec.probe_path, max_label);
  if (spec.limit > 0) {
    const auto cap = static_cast<std::size_t>(spec.limit);
    if (out.train.size() > cap) out.train.resize(cap);
    if (out.probe.size() > cap) out.probe.resize(cap);
  }
  return out;
}

long steps_per_epoch(const TrainConfig& cfg, std::size_t dataset_size) {
  const auto b = static_cast<std::size_t>(cfg.batch_size);
  if (dataset_size < b) {
    throw std::invalid_argument("dataset has fewer images than one batch");
  }
  return static_cast<long>(dataset_size / b);
}

long total_steps(const TrainConfig& cfg, std::size_t dataset_size) {
  if (cfg.max_steps > 0) return cfg.max_steps;
  return std::max(1L, static_cast<long>(std::ceil(
                          cfg.epochs * steps_per_epoch(cfg, dataset_size))));
}

long warmup_steps(const TrainConfig& cfg, std::size_t dataset_size) {
  const long total = total_steps(cfg, dataset_size);
  const double w =
      cfg.max_steps > 0
          ? cfg.warmup_epochs / cfg.epochs * static_cast<double>(total)
          : cfg.warmup_epochs * steps_per_epoch(cfg, dataset_size);
  return std::min(total, static_cast<long>(std::lround(w)));
}

TrainState init_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.seed = cfg.seed;
  Rng rng = derive_stream(cfg.seed, kInitStream);
  s.model = init_model(cfg.backbone_config(), cfg.head_config(), rng,
                       cfg.init_std);
  if (cfg.momentum_encoder.enabled) s.target = s.model;
  s.optim.hyper = cfg.optim;
  for (const auto& g : tensor_groups(s.model.params)) {
    if (std::find(s.clip_groups.begin(), s.clip_groups.end(), g) ==
        s.clip_groups.end()) {
      s.clip_groups.push_back(g);
      s.clips.emplace_back(cfg.clip.momentum, cfg.clip.alpha);
    }
  }
  return s;
}

std::vector<const ImageRecord*> batch_for_step(
    const TrainConfig& cfg, const std::vector<ImageRecord>& data, long step) {
  const long spe = steps_per_epoch(cfg, data.size());
  const long epoch = step / spe;
  const long pos = step % spe;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_stream(cfg.seed ^ kBatchStream,
                          static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<const ImageRecord*> batch;
  const auto b = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t i = 0; i < b; ++i) {
    batch.push_back(&data[order[static_cast<std::size_t>(pos) * b + i]]);
  }
  return batch;
}

// --------------------------------------------------------------------------
// One training step

namespace {

struct StepInputs {
  // Branches 0..n-1 come from crop 1, n..2n-1 from crop 2.
  std::vector<std::vector<TokenSequence>> branches;
  int padded = 0;
};

StepInputs make_inputs(const TrainConfig& cfg, const BackboneConfig& bb,
                       std::uint64_t seed, long step,
                       std::span<const ImageRecord* const> batch) {
  const AugmentPair aug = cfg.augment_pair();
  const int n = cfg.sampler.n_views;
  StepInputs in;
  in.branches.assign(static_cast<std::size_t>(2 * n), {});
  for (const ImageRecord* rec : batch) {
    Rng rng = sample_stream(seed, step, rec->source_id);
    const AugmentedView v1 = augment(rec->pixels, aug.view1, rng, rec->source_id);
    const AugmentedView v2 = augment(rec->pixels, aug.view2, rng, rec->source_id);
    const PatchGrid g1(v1.crop, bb.patch_size);
    const PatchGrid g2(v2.crop, bb.patch_size);
    const AsymmetricSample s = sample_asymmetric(g1, g2, cfg.sampler, rng);
    in.padded += s.padded;
    for (int j = 0; j < n; ++j) {
      in.branches[j].push_back(patchify(v1.pixels, s.views1[j], bb));
      in.branches[n + j].push_back(patchify(v2.pixels, s.views2[j], bb));
    }
  }
  return in;
}

struct ForwardResult {
  double loss = 0.0;
  ModelParams grads;
  int padded = 0;
  std::vector<HeadStats> projector_stats, predictor_stats, target_stats;
};

ForwardResult forward_backward(const TrainState& state, const TrainConfig& cfg,
                               std::span<const ImageRecord* const> batch) {
  if (batch.size() < 2) {
    throw std::invalid_argument("train step: batch needs at least 2 images");
  }
  const Model& model = state.model;
  const StepInputs in =
      make_inputs(cfg, model.backbone, state.seed, state.step, batch);
  const std::size_t n_branches = in.branches.size();

  ForwardResult out;
  out.padded = in.padded;
  std::vector<BranchCache> caches(n_branches);
  std::vector<BranchOutput> online(n_branches);
  std::vector<Eigen::MatrixXd> targets(n_branches);
  for (std::size_t v = 0; v < n_branches; ++v) {
    online[v] = forward_branch(model, in.branches[v], NormMode::kBatch,
                               &caches[v], true);
    out.projector_stats.push_back(online[v].projector_stats);
    out.predictor_stats.push_back(online[v].predictor_stats);
    if (state.target) {
      BranchOutput t = forward_branch(*state.target, in.branches[v],
                                      NormMode::kBatch, nullptr, false);
      targets[v] = std::move(t.z);
      out.target_stats.push_back(std::move(t.projector_stats));
    } else {
      targets[v] = online[v].z;
    }
  }

  const int n = cfg.sampler.n_views;
  LossResult loss;
  if (n == 1) {
    loss = contrastive_loss(online[0].q, targets[0], online[1].q, targets[1],
                            cfg.tau);
  } else {
    std::vector<ViewEmbeddings> views;
    for (std::size_t v = 0; v < n_branches; ++v) {
      views.push_back({online[v].q, targets[v]});
    }
    std::vector<std::pair<int, int>> pairs;
    for (int j = 0; j < n; ++j) {
      for (int k = n; k < 2 * n; ++k) {
        pairs.emplace_back(j, k);
        pairs.emplace_back(k, j);
      }
    }
    loss = multiview_loss(views, cfg.tau, pairs);
  }
  out.loss = loss.value;
  if (!std::isfinite(out.loss)) {
    throw NumericalError("train step " + std::to_string(state.step) +
                         ": non-finite loss");
  }

  out.grads = zeros_like(model.params);
  for (std::size_t v = 0; v < n_branches; ++v) {
    const Eigen::MatrixXd dz =
        Eigen::MatrixXd::Zero(online[v].z.rows(), online[v].z.cols());
    backward_branch(model, caches[v], loss.grad_q[v], dz, out.grads);
  }
  return out;
}

// Concatenates every gradient tensor of `group` into one vector.
Eigen::VectorXd gather_group(const std::vector<Eigen::MatrixXd*>& tensors,
                             const std::vector<std::string>& groups,
                             const std::string& group) {
  Eigen::Index size = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (groups[i] == group) size += tensors[i]->size();
  }
  Eigen::VectorXd flat(size);
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (groups[i] != group) continue;
    const Eigen::Index k = tensors[i]->size();
    flat.segment(at, k) = Eigen::Map<const Eigen::VectorXd>(tensors[i]->data(), k);
    at += k;
  }
  return flat;
}

void scatter_group(const Eigen::VectorXd& flat,
                   const std::vector<Eigen::MatrixXd*>& tensors,
                   const std::vector<std::string>& groups,
                   const std::string& group) {
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (groups[i] != group) continue;
    const Eigen::Index k = tensors[i]->size();
    Eigen::Map<Eigen::VectorXd>(tensors[i]->data(), k) = flat.segment(at, k);
    at += k;
  }
}

}  // namespace

StepGradient step_gradient(const TrainState& state, const TrainConfig& cfg,
                           std::span<const ImageRecord* const> batch) {
  ForwardResult r = forward_backward(state, cfg, batch);
  return {r.loss, std::move(r.grads), r.padded};
}

StepResult train_step(TrainState& state, const TrainConfig& cfg,
                      std::span<const ImageRecord* const> batch,
                      const StepOptions& options) {
  ForwardResult r;
  try {
    r = forward_backward(state, cfg, batch);
  } catch (const NumericalError& e) {
    if (options.dump_path.empty()) throw;
    checkpoint_save(options.dump_path, state, cfg);
    throw NumericalError(std::string(e.what()) + "; state dumped to " +
                         options.dump_path);
  }

  StepResult res;
  res.loss = r.loss;
  res.padded = r.padded;

  std::vector<Eigen::MatrixXd*> g = tensor_ptrs(r.grads);
  const std::vector<std::string> groups = tensor_groups(r.grads);
  double sq = 0.0;
  for (const auto* t : g) sq += t->squaredNorm();
  res.grad_norm = std::sqrt(sq);

  if (cfg.clip.enabled) {
    for (std::size_t i = 0; i < state.clip_groups.size(); ++i) {
      const std::string& name = state.clip_groups[i];
      ClipOutcome c = clip_update(state.clips[i], gather_group(g, groups, name));
      if (c.triggered) {
        res.clip_triggered = true;
        scatter_group(c.gradient, g, groups, name);
      }
    }
  }

  const long step_for_lr = std::min(state.step, options.total_steps);
  res.lr = cosine_lr(step_for_lr, options.warmup_steps, options.total_steps,
                     cfg.optim.lr);
  std::vector<Eigen::MatrixXd> grads;
  grads.reserve(g.size());
  for (const auto* t : g) grads.push_back(*t);
  adamw_step(state.optim, tensor_ptrs(state.model.params), grads, res.lr);

  for (std::size_t v = 0; v < r.projector_stats.size(); ++v) {
    update_running_stats(state.model.projector_stats, r.projector_stats[v]);
    update_running_stats(state.model.predictor_stats, r.predictor_stats[v]);
  }
  if (state.target) {
    const EmaSchedule ema{cfg.momentum_encoder.start, cfg.momentum_encoder.end,
                          options.total_steps};
    const std::vector<const Eigen::MatrixXd*> online =
        tensor_ptrs(static_cast<const ModelParams&>(state.model.params));
    std::vector<Eigen::MatrixXd*> target = tensor_ptrs(state.target->params);
    momentum_encoder_update(online, target, ema.coefficient(step_for_lr));
    for (const auto& s : r.target_stats) {
      update_running_stats(state.target->projector_stats, s);
    }
  }

  state.log.push_back(
      {state.step, res.lr, res.loss, res.grad_norm, res.clip_triggered});
  ++state.step;
  state.epoch = state.step / std::max(1L, options.steps_per_epoch);
  return res;
}

// --------------------------------------------------------------------------
// Probe

Eigen::MatrixXd embed_full(const Model& model,
                           std::span<const ImageRecord> records) {
  const int size = model.backbone.image_size;
  std::vector<TokenSequence> seqs;
  seqs.reserve(records.size());
  for (const ImageRecord& r : records) {
    if (r.pixels.width == size && r.pixels.height == size) {
      seqs.push_back(patchify_full(r.pixels, model.backbone));
    } else {
      const CropBox box = CropBox::full_image(r.pixels.width, r.pixels.height,
                                              size, r.source_id);
      seqs.push_back(patchify_full(resample_crop(r.pixels, box), model.backbone));
    }
  }
  return representations(model, seqs);
}

double knn_probe(const Model& model, std::span<const ImageRecord> train,
                 std::span<const ImageRecord> test, int k) {
  if (k < 1) throw std::invalid_argument("knn probe: k must be >= 1");
  if (static_cast<std::size_t>(k) > train.size()) {
    throw std::invalid_argument("knn probe: k = " + std::to_string(k) +
                                " exceeds the training set size " +
                                std::to_string(train.size()));
  }
  if (test.empty()) throw std::invalid_argument("knn probe: empty test set");

  auto unit_rows = [](Eigen::MatrixXd m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double n = m.row(i).norm();
      if (n > 0.0) m.row(i) /= n;
    }
    return m;
  };
  const Eigen::MatrixXd a = unit_rows(embed_full(model, train));
  const Eigen::MatrixXd b = unit_rows(embed_full(model, test));
  const Eigen::MatrixXd sim = b * a.transpose();

  std::size_t correct = 0;
  std::vector<int> idx(train.size());
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](int x, int y) {
                        if (sim(i, x) != sim(i, y)) return sim(i, x) > sim(i, y);
                        return x < y;
                      });
    std::map<int, std::pair<int, double>> votes;  // label -> (count, sim sum)
    for (int j = 0; j < k; ++j) {
      auto& v = votes[train[static_cast<std::size_t>(idx[j])].label];
      ++v.first;
      v.second += sim(i, idx[j]);
    }
    int best = votes.begin()->first;
    for (const auto& [label, v] : votes) {
      const auto& bv = votes[best];
      if (v.first > bv.first || (v.first == bv.first && v.second > bv.second)) {
        best = label;
      }
    }
    if (best == test[static_cast<std::size_t>(i)].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::vector<ImageRecord> shuffled_labels(std::vector<ImageRecord> records,
                                         std::uint64_t seed) {
  std::vector<int> labels;
  for (const auto& r : records) labels.push_back(r.label);
  Rng rng(mix_seed(seed));
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].label = labels[i];
  return records;
}

void write_metric_log(const std::string& path,
                      std::span<const MetricRecord> log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metric log " + path);
  out << "step,lr,loss,grad_norm,clip_triggered\n";
  for (const auto& r : log) {
    out << r.step << ',' << format_double(r.lr) << ',' << format_double(r.loss)
        << ',' << format_double(r.grad_norm) << ',' << (r.clip_triggered ? 1 : 0)
        << '\n';
  }
}

// --------------------------------------------------------------------------
// Checkpoints

namespace {

NamedArray to_array(const std::string& name, const Eigen::MatrixXd& m) {
  NamedArray a{name, {m.rows(), m.cols()}, {}};
  a.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.data.push_back(m(r, c));
  }
  return a;
}

void from_array(const NamedArray& a, Eigen::MatrixXd& m) {
  if (a.shape.size() != 2 || a.shape[0] != m.rows() || a.shape[1] != m.cols()) {
    throw CheckpointError("checkpoint: array '" + a.name +
                          "' does not match the configured model shape");
  }
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = a.data[i++];
  }
}

void add_model(CheckpointBlob& blob, const std::string& prefix, const Model& m) {
  for_each_tensor(m.params, [&](const std::string& name, const std::string&,
                                const Eigen::MatrixXd& t) {
    blob.arrays.push_back(to_array(prefix + "param/" + name, t));
  });
  auto add_stats = [&](const std::string& head, const HeadStats& s) {
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      const std::string base = prefix + "stats/" + head + "/" + std::to_string(l);
      blob.arrays.push_back(to_array(base + "/mean", s.layers[l].mean));
      blob.arrays.push_back(to_array(base + "/var", s.layers[l].var));
    }
  };
  add_stats("projector", m.projector_stats);
  add_stats("predictor", m.predictor_stats);
}

void read_model(const CheckpointBlob& blob, const std::string& prefix, Model& m) {
  for_each_tensor(m.params, [&](const std::string& name, const std::string&,
                                Eigen::MatrixXd& t) {
    from_array(blob.array(prefix + "param/" + name), t);
  });
  auto read_stats = [&](const std::string& head, HeadStats& s) {
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      const std::string base = prefix + "stats/" + head + "/" + std::to_string(l);
      from_array(blob.array(base + "/mean"), s.layers[l].mean);
      from_array(blob.array(base + "/var"), s.layers[l].var);
    }
  };
  read_stats("projector", m.projector_stats);
  read_stats("predictor", m.predictor_stats);
}

long parse_long(const std::string& s) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw CheckpointError("checkpoint: bad integer metadata '" + s + "'");
  }
}

}  // namespace

void checkpoint_save(const std::string& path, const TrainState& state,
                     const TrainConfig& cfg, double probe_accuracy) {
  CheckpointBlob blob;
  blob.config_echo = to_config_text(cfg);
  blob.meta = {
      {"format", "aps-train-state"},
      {"step", std::to_string(state.step)},
      {"epoch", std::to_string(state.epoch)},
      {"seed", std::to_string(state.seed)},
      {"optim_step", std::to_string(state.optim.step)},
      {"has_moments", state.optim.m.empty() ? "0" : "1"},
      {"has_target", state.target ? "1" : "0"},
      {"probe_accuracy", format_double(probe_accuracy)},
  };
  for (std::size_t i = 0; i < state.clip_groups.size(); ++i) {
    blob.meta.emplace_back("clip/" + state.clip_groups[i] + "/initialized",
                           state.clips[i].initialized() ? "1" : "0");
  }

  add_model(blob, "", state.model);
  if (state.target) add_model(blob, "target/", *state.target);

  const std::vector<std::string> names = tensor_names(state.model.params);
  for (std::size_t i = 0; i < state.optim.m.size(); ++i) {
    blob.arrays.push_back(to_array("adam/m/" + names[i], state.optim.m[i]));
    blob.arrays.push_back(to_array("adam/v/" + names[i], state.optim.v[i]));
  }
  for (std::size_t i = 0; i < state.clip_groups.size(); ++i) {
    const Eigen::VectorXd& e = state.clips[i].ema();
    blob.arrays.push_back({"clip/" + state.clip_groups[i] + "/ema",
                           {e.size()},
                           std::vector<double>(e.data(), e.data() + e.size())});
  }

  NamedArray log{"log", {static_cast<std::int64_t>(state.log.size()), 5}, {}};
  for (const auto& r : state.log) {
    log.data.insert(log.data.end(),
                    {static_cast<double>(r.step), r.lr, r.loss, r.grad_norm,
                     r.clip_triggered ? 1.0 : 0.0});
  }
  blob.arrays.push_back(std::move(log));
  write_blob(path, blob);
}

LoadedCheckpoint checkpoint_load(const std::string& path) {
  const CheckpointBlob blob = read_blob(path);
  if (blob.meta_value("format") != "aps-train-state") {
    throw CheckpointError("checkpoint: not a training state");
  }
  LoadedCheckpoint out;
  try {
    out.config = parse_train_config(blob.config_echo);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: bad config echo: ") +
                          e.what());
  }
  TrainState& s = out.state;
  s = init_train_state(out.config);
  s.step = parse_long(blob.meta_value("step"));
  s.epoch = parse_long(blob.meta_value("epoch"));
  s.seed = static_cast<std::uint64_t>(std::stoull(blob.meta_value("seed")));
  s.optim.step = parse_long(blob.meta_value("optim_step"));
  out.probe_accuracy = std::stod(blob.meta_value("probe_accuracy"));

  read_model(blob, "", s.model);
  if ((blob.meta_value("has_target") == "1") != s.target.has_value()) {
    throw CheckpointError("checkpoint: target encoder presence disagrees "
                          "with the config echo");
  }
  if (s.target) read_model(blob, "target/", *s.target);

  if (blob.meta_value("has_moments") == "1") {
    for (const auto& name : tensor_names(s.model.params)) {
      const NamedArray& m = blob.array("adam/m/" + name);
      const NamedArray& v = blob.array("adam/v/" + name);
      if (m.shape.size() != 2 || v.shape != m.shape) {
        throw CheckpointError("checkpoint: bad moment shape for " + name);
      }
      Eigen::MatrixXd mm(m.shape[0], m.shape[1]), vv(v.shape[0], v.shape[1]);
      from_array(m, mm);
      from_array(v, vv);
      s.optim.m.push_back(std::move(mm));
      s.optim.v.push_back(std::move(vv));
    }
  }
  for (std::size_t i = 0; i < s.clip_groups.size(); ++i) {
    const std::string base = "clip/" + s.clip_groups[i];
    const NamedArray& e = blob.array(base + "/ema");
    s.clips[i].restore(Eigen::Map<const Eigen::VectorXd>(
                           e.data.data(), static_cast<Eigen::Index>(e.data.size())),
                       blob.meta_value(base + "/initialized") == "1");
  }

  const NamedArray& log = blob.array("log");
  if (log.shape.size() != 2 || log.shape[1] != 5) {
    throw CheckpointError("checkpoint: bad metric log shape");
  }
  for (std::int64_t i = 0; i < log.shape[0]; ++i) {
    const double* row = log.data.data() + i * 5;
    s.log.push_back({static_cast<long>(row[0]), row[1], row[2], row[3],
                     row[4] != 0.0});
  }
  return out;
}

}  // namespace aps
