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

#ifndef APS_ENCODER_H_
#define APS_ENCODER_H_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "aps/image.h"
#include "aps/random.h"
#include "aps/sampler.h"

namespace aps {

// Vision-transformer backbone shape.
struct BackboneConfig {
  std::string name = "vit-micro";
  int image_size = 32;
  int patch_size = 4;
  int n_blocks = 4;
  int n_heads = 2;
  int token_dim = 64;
  int mlp_ratio = 4;
  bool learnable_pos = true;  // false: fixed 2-D sine-cosine table

  // "vit-micro", "vit-tiny", "vit-small", "vit-base" (32x32 inputs, patch 2
  // except micro) and "vit-small-imagenet", "vit-base-imagenet" (224x224,
  // patch 16, fixed positions). Throws std::invalid_argument otherwise.
  static BackboneConfig preset(std::string_view name);

  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int patch_dim() const { return patch_size * patch_size * 3; }
  int head_dim() const { return token_dim / n_heads; }
  int hidden_dim() const { return token_dim * mlp_ratio; }

  void validate() const;
};

// Output widths of the projection and prediction MLPs. Every layer but the
// last is Linear + BN + ReLU; the last is Linear + BN without affine terms.
struct HeadConfig {
  std::string name = "micro";
  std::vector<int> projection{256, 256, 64};
  std::vector<int> prediction{256, 256, 64};

  // "cifar" (512-512-128 / 512-512-128), "imagenet" (4096-4096-256 /
  // 4096-256) and the desk-scale "micro".
  static HeadConfig preset(std::string_view name);

  int output_dim() const { return projection.back(); }
  void validate() const;
};

// y = x * w + b with w stored in x out and b as a 1 x out row.
struct Linear {
  Eigen::MatrixXd w;
  Eigen::MatrixXd b;
};

struct BlockParams {
  Eigen::MatrixXd ln1_gamma, ln1_beta;
  Linear qkv;
  Linear proj;
  Eigen::MatrixXd ln2_gamma, ln2_beta;
  Linear fc1;
  Linear fc2;
};

struct EncoderParams {
  Linear patch_embed;
  Eigen::MatrixXd pos_embed;  // num_patches x dim; empty for fixed tables
  Eigen::MatrixXd cls_token;  // 1 x dim
  std::vector<BlockParams> blocks;
  Eigen::MatrixXd norm_gamma, norm_beta;
};

// Empty bn_gamma / bn_beta mark the non-learnable final normalization.
struct HeadLayer {
  Linear linear;
  Eigen::MatrixXd bn_gamma;
  Eigen::MatrixXd bn_beta;
};

struct HeadParams {
  std::vector<HeadLayer> layers;
};

struct ModelParams {
  EncoderParams encoder;
  HeadParams projector;
  HeadParams predictor;
};

// Visits every trainable tensor in a fixed order as f(name, group, tensor).
// Groups are the clipping units: "embed", "block<i>", "norm", "projector",
// "predictor". Empty tensors are skipped.
template <typename Params, typename F>
void for_each_tensor(Params& p, F&& f);

ModelParams zeros_like(const ModelParams& p);
std::vector<Eigen::MatrixXd*> tensor_ptrs(ModelParams& p);
std::vector<const Eigen::MatrixXd*> tensor_ptrs(const ModelParams& p);
std::vector<std::string> tensor_names(const ModelParams& p);
std::vector<std::string> tensor_groups(const ModelParams& p);
std::size_t parameter_count(const ModelParams& p);
// p += scale * q, tensor by tensor.
void axpy(ModelParams& p, const ModelParams& q, double scale);

// Running batch-norm statistics (1 x width rows) per head layer.
struct NormStats {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd var;
};
struct HeadStats {
  std::vector<NormStats> layers;
};

struct Model {
  BackboneConfig backbone;
  HeadConfig heads;
  ModelParams params;
  HeadStats projector_stats;
  HeadStats predictor_stats;
};

// Truncated-normal (2 sigma) weights with `init_std`, zero biases and shifts,
// unit scales, unit running variances.
Model init_model(const BackboneConfig& backbone, const HeadConfig& heads,
                 Rng& rng, double init_std = 0.02);

// 2-D sine-cosine position table, num_patches x token_dim.
Eigen::MatrixXd sincos_position_table(const BackboneConfig& cfg);

// Raw pixel vectors of the sampled patches, tagged with their grid index.
struct TokenSequence {
  Eigen::MatrixXd patches;  // n x patch_dim, layout (dy, dx, channel)
  std::vector<int> position_ids;

  // Tokens seen by the transformer, class token included.
  int length() const { return static_cast<int>(patches.rows()) + 1; }
};

// Throws std::invalid_argument for a view of the wrong size and
// std::out_of_range for an index outside the grid.
TokenSequence patchify(const Image& view, const PatchIndexSet& sampled,
                       const BackboneConfig& cfg);
// Every patch, in grid order.
TokenSequence patchify_full(const Image& view, const BackboneConfig& cfg);

struct BlockCache {
  Eigen::MatrixXd x_in;
  Eigen::MatrixXd ln1_out, ln1_xhat, ln1_rstd;
  Eigen::MatrixXd qkv;
  std::vector<Eigen::MatrixXd> attn;  // per head, L x L
  Eigen::MatrixXd attn_out;
  Eigen::MatrixXd x_mid;
  Eigen::MatrixXd ln2_out, ln2_xhat, ln2_rstd;
  Eigen::MatrixXd fc1_out;
  Eigen::MatrixXd gelu_out;
};

struct EncoderCache {
  bool filled = false;
  TokenSequence input;
  std::vector<BlockCache> blocks;
  Eigen::MatrixXd final_xhat;  // 1 x dim, class token only
  double final_rstd = 0.0;
};

// Pre-norm transformer over [class; patch tokens]. Returns the normalized
// class-token output (1 x dim). Throws NumericalError naming the block that
// produced a non-finite activation.
Eigen::RowVectorXd encode(const TokenSequence& seq, const EncoderParams& params,
                          const BackboneConfig& cfg,
                          EncoderCache* cache = nullptr);

// Accumulates d(rep)/d(params) into `grads`. Throws std::logic_error when the
// cache was not filled by encode().
void encode_backward(const EncoderCache& cache, const Eigen::RowVectorXd& d_rep,
                     const EncoderParams& params, const BackboneConfig& cfg,
                     EncoderParams& grads);

enum class NormMode {
  kBatch,   // statistics of the current batch
  kFrozen,  // running statistics
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kLayerNormEps = 1e-6;

struct HeadCache {
  bool filled = false;
  NormMode mode = NormMode::kBatch;
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> xhat;
  std::vector<Eigen::MatrixXd> rstd;  // 1 x width
  std::vector<Eigen::MatrixXd> outputs;
};

// MLP head over a batch (rows are samples). In kBatch mode the statistics
// used are written to `batch_stats` when given; kFrozen reads `running`.
Eigen::MatrixXd head_forward(const Eigen::MatrixXd& x, const HeadParams& params,
                             NormMode mode, const HeadStats* running,
                             HeadCache* cache = nullptr,
                             HeadStats* batch_stats = nullptr);

// Returns d(input); accumulates parameter gradients into `grads`.
Eigen::MatrixXd head_backward(const HeadCache& cache,
                              const Eigen::MatrixXd& d_out,
                              const HeadParams& params, HeadParams& grads);

// running <- (1 - momentum) * running + momentum * batch (unbiased variance
// is not used; the batch variance is the biased one).
void update_running_stats(HeadStats& running, const HeadStats& batch,
                          double momentum = 0.1);

// z = projector(rep), q = predictor(z), both in batch-statistics mode.
Eigen::MatrixXd project(const Eigen::MatrixXd& rep, const Model& model,
                        NormMode mode = NormMode::kBatch);
Eigen::MatrixXd predict(const Eigen::MatrixXd& z, const Model& model,
                        NormMode mode = NormMode::kBatch);

// One branch of the network over a batch of sequences.
struct BranchCache {
  std::vector<EncoderCache> encoder;
  HeadCache projector;
  HeadCache predictor;
};

struct BranchOutput {
  Eigen::MatrixXd rep;  // B x dim
  Eigen::MatrixXd z;    // B x out
  Eigen::MatrixXd q;    // B x out
  HeadStats projector_stats;
  HeadStats predictor_stats;
};

// `with_predictor` = false skips q (target branches).
BranchOutput forward_branch(const Model& model,
                            std::span<const TokenSequence> batch, NormMode mode,
                            BranchCache* cache = nullptr,
                            bool with_predictor = true);

// dz is any gradient reaching z besides the predictor path (zero under a
// stop-gradient). Accumulates into `grads`.
void backward_branch(const Model& model, const BranchCache& cache,
                     const Eigen::MatrixXd& dq, const Eigen::MatrixXd& dz,
                     ModelParams& grads);

// Representations for probing: full sequences, frozen normalization.
Eigen::MatrixXd representations(const Model& model,
                                 std::span<const TokenSequence> batch);

// ---------------------------------------------------------------------------

namespace internal {

template <typename L, typename F>
void visit_linear(L& l, const std::string& name, const std::string& group,
                  F& f) {
  f(name + ".w", group, l.w);
  f(name + ".b", group, l.b);
}

}  // namespace internal

template <typename Params, typename F>
void for_each_tensor(Params& p, F&& f) {
  auto visit = [&](const std::string& name, const std::string& group,
                   auto& t) {
    if (t.size() > 0) f(name, group, t);
  };
  auto& e = p.encoder;
  internal::visit_linear(e.patch_embed, "encoder.patch_embed", "embed", visit);
  visit("encoder.pos_embed", "embed", e.pos_embed);
  visit("encoder.cls_token", "embed", e.cls_token);
  for (std::size_t i = 0; i < e.blocks.size(); ++i) {
    auto& b = e.blocks[i];
    const std::string pre = "encoder.block" + std::to_string(i);
    const std::string group = "block" + std::to_string(i);
    visit(pre + ".ln1.gamma", group, b.ln1_gamma);
    visit(pre + ".ln1.beta", group, b.ln1_beta);
    internal::visit_linear(b.qkv, pre + ".qkv", group, visit);
    internal::visit_linear(b.proj, pre + ".proj", group, visit);
    visit(pre + ".ln2.gamma", group, b.ln2_gamma);
    visit(pre + ".ln2.beta", group, b.ln2_beta);
    internal::visit_linear(b.fc1, pre + ".fc1", group, visit);
    internal::visit_linear(b.fc2, pre + ".fc2", group, visit);
  }
  visit("encoder.norm.gamma", "norm", e.norm_gamma);
  visit("encoder.norm.beta", "norm", e.norm_beta);
  auto visit_head = [&](auto& head, const std::string& name) {
    for (std::size_t i = 0; i < head.layers.size(); ++i) {
      auto& l = head.layers[i];
      const std::string pre = name + ".layer" + std::to_string(i);
      internal::visit_linear(l.linear, pre + ".linear", name, visit);
      visit(pre + ".bn.gamma", name, l.bn_gamma);
      visit(pre + ".bn.beta", name, l.bn_beta);
    }
  };
  visit_head(p.projector, "projector");
  visit_head(p.predictor, "predictor");
}

}  // namespace aps

#endif  // APS_ENCODER_H_
