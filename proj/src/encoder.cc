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

#include "aps/encoder.h"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "aps/errors.h"

namespace aps {

BackboneConfig BackboneConfig::preset(std::string_view name) {
  BackboneConfig c;
  c.name = std::string(name);
  if (name == "vit-micro") {
    c.patch_size = 4;
    c.n_blocks = 4;
    c.n_heads = 2;
    c.token_dim = 64;
  } else if (name == "vit-tiny") {
    c.patch_size = 2;
    c.n_blocks = 12;
    c.n_heads = 3;
    c.token_dim = 192;
  } else if (name == "vit-small") {
    c.patch_size = 2;
    c.n_blocks = 12;
    c.n_heads = 6;
    c.token_dim = 384;
  } else if (name == "vit-base") {
    c.patch_size = 2;
    c.n_blocks = 12;
    c.n_heads = 12;
    c.token_dim = 768;
  } else if (name == "vit-small-imagenet" || name == "vit-base-imagenet") {
    const bool small = name == "vit-small-imagenet";
    c.image_size = 224;
    c.patch_size = 16;
    c.n_blocks = 12;
    c.n_heads = small ? 6 : 12;
    c.token_dim = small ? 384 : 768;
    c.learnable_pos = false;
  } else {
    throw std::invalid_argument("unknown backbone preset '" + c.name + "'");
  }
  return c;
}

void BackboneConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
    throw std::invalid_argument("backbone: patch_size must tile image_size");
  }
  if (n_blocks < 0 || n_heads <= 0 || token_dim <= 0 || mlp_ratio <= 0) {
    throw std::invalid_argument("backbone: non-positive dimension");
  }
  if (token_dim % n_heads != 0) {
    throw std::invalid_argument("backbone: token_dim " +
                                std::to_string(token_dim) +
                                " not divisible by n_heads " +
                                std::to_string(n_heads));
  }
  if (!learnable_pos && token_dim % 4 != 0) {
    throw std::invalid_argument(
        "backbone: sine-cosine positions need token_dim divisible by 4");
  }
}

HeadConfig HeadConfig::preset(std::string_view name) {
  HeadConfig h;
  h.name = std::string(name);
  if (name == "cifar") {
    h.projection = {512, 512, 128};
    h.prediction = {512, 512, 128};
  } else if (name == "imagenet") {
    h.projection = {4096, 4096, 256};
    h.prediction = {4096, 256};
  } else if (name == "micro") {
    h.projection = {256, 256, 64};
    h.prediction = {256, 256, 64};
  } else {
    throw std::invalid_argument("unknown head preset '" + h.name + "'");
  }
  return h;
}

void HeadConfig::validate() const {
  if (projection.empty() || prediction.empty()) {
    throw std::invalid_argument("heads: empty layer list");
  }
  for (int w : projection) {
    if (w <= 0) throw std::invalid_argument("heads: non-positive width");
  }
  for (int w : prediction) {
    if (w <= 0) throw std::invalid_argument("heads: non-positive width");
  }
  if (projection.back() != prediction.back()) {
    throw std::invalid_argument(
        "heads: projection and prediction outputs must have equal width");
  }
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams out = p;
  for_each_tensor(out, [](const std::string&, const std::string&,
                          Eigen::MatrixXd& t) { t.setZero(); });
  return out;
}

std::vector<Eigen::MatrixXd*> tensor_ptrs(ModelParams& p) {
  std::vector<Eigen::MatrixXd*> out;
  for_each_tensor(p, [&](const std::string&, const std::string&,
                         Eigen::MatrixXd& t) { out.push_back(&t); });
  return out;
}

std::vector<const Eigen::MatrixXd*> tensor_ptrs(const ModelParams& p) {
  std::vector<const Eigen::MatrixXd*> out;
  for_each_tensor(p, [&](const std::string&, const std::string&,
                         const Eigen::MatrixXd& t) { out.push_back(&t); });
  return out;
}

std::vector<std::string> tensor_names(const ModelParams& p) {
  std::vector<std::string> out;
  for_each_tensor(p, [&](const std::string& name, const std::string&,
                         const Eigen::MatrixXd&) { out.push_back(name); });
  return out;
}

std::vector<std::string> tensor_groups(const ModelParams& p) {
  std::vector<std::string> out;
  for_each_tensor(p, [&](const std::string&, const std::string& group,
                         const Eigen::MatrixXd&) { out.push_back(group); });
  return out;
}

std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, const std::string&,
                         const Eigen::MatrixXd& t) { n += t.size(); });
  return n;
}

void axpy(ModelParams& p, const ModelParams& q, double scale) {
  auto dst = tensor_ptrs(p);
  auto src = tensor_ptrs(q);
  if (dst.size() != src.size()) {
    throw std::invalid_argument("axpy: parameter structures differ");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] += scale * *src[i];
}

namespace {

Eigen::MatrixXd trunc_normal(int rows, int cols, double std, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double v;
    do {
      v = n(rng);
    } while (std::abs(v) > 2.0);
    m.data()[i] = v * std;
  }
  return m;
}

Linear make_linear(int in, int out, double std, Rng& rng) {
  return Linear{trunc_normal(in, out, std, rng), Eigen::MatrixXd::Zero(1, out)};
}

HeadParams make_head(int in, const std::vector<int>& widths, double std,
                     Rng& rng, HeadStats& stats) {
  HeadParams head;
  stats.layers.clear();
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const int out = widths[i];
    HeadLayer layer;
    layer.linear = make_linear(in, out, std, rng);
    if (i + 1 < widths.size()) {
      layer.bn_gamma = Eigen::MatrixXd::Ones(1, out);
      layer.bn_beta = Eigen::MatrixXd::Zero(1, out);
    }
    head.layers.push_back(std::move(layer));
    stats.layers.push_back(
        NormStats{Eigen::MatrixXd::Zero(1, out), Eigen::MatrixXd::Ones(1, out)});
    in = out;
  }
  return head;
}

}  // namespace

Model init_model(const BackboneConfig& backbone, const HeadConfig& heads,
                 Rng& rng, double init_std) {
  backbone.validate();
  heads.validate();
  Model m;
  m.backbone = backbone;
  m.heads = heads;
  const int d = backbone.token_dim;
  EncoderParams& e = m.params.encoder;
  e.patch_embed = make_linear(backbone.patch_dim(), d, init_std, rng);
  if (backbone.learnable_pos) {
    e.pos_embed = trunc_normal(backbone.num_patches(), d, init_std, rng);
  }
  e.cls_token = trunc_normal(1, d, init_std, rng);
  for (int i = 0; i < backbone.n_blocks; ++i) {
    BlockParams b;
    b.ln1_gamma = Eigen::MatrixXd::Ones(1, d);
    b.ln1_beta = Eigen::MatrixXd::Zero(1, d);
    b.qkv = make_linear(d, 3 * d, init_std, rng);
    b.proj = make_linear(d, d, init_std, rng);
    b.ln2_gamma = Eigen::MatrixXd::Ones(1, d);
    b.ln2_beta = Eigen::MatrixXd::Zero(1, d);
    b.fc1 = make_linear(d, backbone.hidden_dim(), init_std, rng);
    b.fc2 = make_linear(backbone.hidden_dim(), d, init_std, rng);
    e.blocks.push_back(std::move(b));
  }
  e.norm_gamma = Eigen::MatrixXd::Ones(1, d);
  e.norm_beta = Eigen::MatrixXd::Zero(1, d);
  m.params.projector =
      make_head(d, heads.projection, init_std, rng, m.projector_stats);
  m.params.predictor = make_head(heads.projection.back(), heads.prediction,
                                 init_std, rng, m.predictor_stats);
  return m;
}

Eigen::MatrixXd sincos_position_table(const BackboneConfig& cfg) {
  const int g = cfg.grid();
  const int d = cfg.token_dim;
  const int quarter = d / 4;
  Eigen::MatrixXd table(g * g, d);
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      const int idx = r * g + c;
      for (int k = 0; k < quarter; ++k) {
        const double omega =
            1.0 / std::pow(10000.0, static_cast<double>(k) / quarter);
        // First half encodes the column, second half the row.
        table(idx, k) = std::sin(c * omega);
        table(idx, quarter + k) = std::cos(c * omega);
        table(idx, 2 * quarter + k) = std::sin(r * omega);
        table(idx, 3 * quarter + k) = std::cos(r * omega);
      }
    }
  }
  return table;
}

TokenSequence patchify(const Image& view, const PatchIndexSet& sampled,
                       const BackboneConfig& cfg) {
  if (view.width != cfg.image_size || view.height != cfg.image_size) {
    throw std::invalid_argument("patchify: view is " +
                                std::to_string(view.width) + "x" +
                                std::to_string(view.height) + ", expected " +
                                std::to_string(cfg.image_size));
  }
  const int g = cfg.grid();
  const int p = cfg.patch_size;
  TokenSequence seq;
  seq.patches.resize(static_cast<Eigen::Index>(sampled.indices.size()),
                     cfg.patch_dim());
  seq.position_ids = sampled.indices;
  for (std::size_t t = 0; t < sampled.indices.size(); ++t) {
    const int idx = sampled.indices[t];
    if (idx < 0 || idx >= g * g) {
      throw std::out_of_range("patchify: patch index " + std::to_string(idx) +
                              " outside grid of " + std::to_string(g * g));
    }
    const int r = idx / g;
    const int c = idx % g;
    int k = 0;
    for (int dy = 0; dy < p; ++dy) {
      for (int dx = 0; dx < p; ++dx) {
        for (int ch = 0; ch < 3; ++ch) {
          seq.patches(static_cast<Eigen::Index>(t), k++) =
              view.at(c * p + dx, r * p + dy, ch);
        }
      }
    }
  }
  return seq;
}

TokenSequence patchify_full(const Image& view, const BackboneConfig& cfg) {
  PatchIndexSet all{cfg.num_patches(), {}};
  for (int i = 0; i < cfg.num_patches(); ++i) all.indices.push_back(i);
  return patchify(view, all, cfg);
}

namespace {

void layer_norm(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gamma,
                const Eigen::MatrixXd& beta, Eigen::MatrixXd& y,
                Eigen::MatrixXd& xhat, Eigen::MatrixXd& rstd) {
  const Eigen::Index n = x.rows();
  const double d = static_cast<double>(x.cols());
  xhat.resize(n, x.cols());
  rstd.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).sum() / d;
    const double var = (x.row(i).array() - mu).square().sum() / d;
    rstd(i, 0) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = (x.row(i).array() - mu) * rstd(i, 0);
  }
  y = (xhat.array().rowwise() * gamma.row(0).array()).rowwise() +
      beta.row(0).array();
}

Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dy,
                                    const Eigen::MatrixXd& xhat,
                                    const Eigen::MatrixXd& rstd,
                                    const Eigen::MatrixXd& gamma,
                                    Eigen::MatrixXd& dgamma,
                                    Eigen::MatrixXd& dbeta) {
  dgamma += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbeta += dy.colwise().sum();
  const Eigen::MatrixXd dxhat =
      (dy.array().rowwise() * gamma.row(0).array()).matrix();
  const double d = static_cast<double>(dy.cols());
  Eigen::MatrixXd dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_dxhat = dxhat.row(i).sum() / d;
    const double mean_dxhat_xhat = dxhat.row(i).dot(xhat.row(i)) / d;
    dx.row(i) = rstd(i, 0) * (dxhat.row(i).array() - mean_dxhat -
                              xhat.row(i).array() * mean_dxhat_xhat)
                                 .matrix();
  }
  return dx;
}

Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Linear& l) {
  Eigen::MatrixXd y = x * l.w;
  y.rowwise() += l.b.row(0);
  return y;
}

// Returns dx.
Eigen::MatrixXd affine_backward(const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& dy, const Linear& l,
                                Linear& grad) {
  grad.w.noalias() += x.transpose() * dy;
  grad.b += dy.colwise().sum();
  return dy * l.w.transpose();
}

constexpr double kInvSqrt2 = 0.70710678118654752440;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * pdf;
}

void softmax_rows(Eigen::MatrixXd& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp().matrix();
    s.row(i) /= s.row(i).sum();
  }
}

void check_finite(const Eigen::MatrixXd& x, const std::string& where) {
  if (!x.allFinite()) {
    throw NumericalError("encoder: non-finite activation in " + where);
  }
}

}  // namespace

Eigen::RowVectorXd encode(const TokenSequence& seq, const EncoderParams& params,
                          const BackboneConfig& cfg, EncoderCache* cache) {
  const int d = cfg.token_dim;
  const int n = static_cast<int>(seq.patches.rows());
  if (seq.patches.cols() != cfg.patch_dim() ||
      static_cast<int>(seq.position_ids.size()) != n) {
    throw std::invalid_argument("encode: token sequence does not match config");
  }
  if (params.blocks.size() != static_cast<std::size_t>(cfg.n_blocks) ||
      params.cls_token.cols() != d) {
    throw std::invalid_argument("encode: parameters do not match config");
  }
  const Eigen::MatrixXd fixed_pos = params.pos_embed.size() == 0
                                        ? sincos_position_table(cfg)
                                        : Eigen::MatrixXd();
  const Eigen::MatrixXd& pos =
      params.pos_embed.size() == 0 ? fixed_pos : params.pos_embed;

  Eigen::MatrixXd x(n + 1, d);
  x.row(0) = params.cls_token.row(0);
  if (n > 0) {
    x.bottomRows(n) = affine(seq.patches, params.patch_embed);
    for (int t = 0; t < n; ++t) {
      const int id = seq.position_ids[t];
      if (id < 0 || id >= pos.rows()) {
        throw std::out_of_range("encode: position id outside grid");
      }
      x.row(t + 1) += pos.row(id);
    }
  }
  if (cache) {
    cache->input = seq;
    cache->blocks.assign(cfg.n_blocks, BlockCache{});
  }

  const int heads = cfg.n_heads;
  const int hd = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const int L = n + 1;
  for (int bi = 0; bi < cfg.n_blocks; ++bi) {
    const BlockParams& b = params.blocks[bi];
    BlockCache local;
    BlockCache& c = cache ? cache->blocks[bi] : local;
    c.x_in = x;
    layer_norm(x, b.ln1_gamma, b.ln1_beta, c.ln1_out, c.ln1_xhat, c.ln1_rstd);
    c.qkv = affine(c.ln1_out, b.qkv);
    c.attn.resize(heads);
    c.attn_out.resize(L, d);
    for (int h = 0; h < heads; ++h) {
      const auto q = c.qkv.middleCols(h * hd, hd);
      const auto k = c.qkv.middleCols(d + h * hd, hd);
      const auto v = c.qkv.middleCols(2 * d + h * hd, hd);
      Eigen::MatrixXd s = (q * k.transpose()) * scale;
      softmax_rows(s);
      c.attn_out.middleCols(h * hd, hd) = s * v;
      c.attn[h] = std::move(s);
    }
    c.x_mid = x + affine(c.attn_out, b.proj);
    layer_norm(c.x_mid, b.ln2_gamma, b.ln2_beta, c.ln2_out, c.ln2_xhat,
               c.ln2_rstd);
    c.fc1_out = affine(c.ln2_out, b.fc1);
    c.gelu_out = c.fc1_out.unaryExpr([](double v) { return gelu(v); });
    x = c.x_mid + affine(c.gelu_out, b.fc2);
    check_finite(x, "block " + std::to_string(bi));
  }

  Eigen::MatrixXd cls_out, xhat, rstd;
  layer_norm(x.topRows(1), params.norm_gamma, params.norm_beta, cls_out, xhat,
             rstd);
  check_finite(cls_out, "final norm");
  if (cache) {
    cache->final_xhat = xhat;
    cache->final_rstd = rstd(0, 0);
    cache->filled = true;
  }
  return cls_out.row(0);
}

void encode_backward(const EncoderCache& cache, const Eigen::RowVectorXd& d_rep,
                     const EncoderParams& params, const BackboneConfig& cfg,
                     EncoderParams& grads) {
  if (!cache.filled) {
    throw std::logic_error("encode_backward: forward cache missing");
  }
  const int d = cfg.token_dim;
  const int n = static_cast<int>(cache.input.patches.rows());
  const int L = n + 1;
  if (d_rep.size() != d) {
    throw std::invalid_argument("encode_backward: upstream gradient width");
  }

  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(L, d);
  {
    Eigen::MatrixXd rstd(1, 1);
    rstd(0, 0) = cache.final_rstd;
    dx.topRows(1) = layer_norm_backward(Eigen::MatrixXd(d_rep), cache.final_xhat,
                                        rstd, params.norm_gamma,
                                        grads.norm_gamma, grads.norm_beta);
  }

  const int heads = cfg.n_heads;
  const int hd = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int bi = cfg.n_blocks - 1; bi >= 0; --bi) {
    const BlockParams& b = params.blocks[bi];
    BlockParams& g = grads.blocks[bi];
    const BlockCache& c = cache.blocks[bi];

    // x_out = x_mid + fc2(gelu(fc1(ln2(x_mid))))
    Eigen::MatrixXd d_gelu = affine_backward(c.gelu_out, dx, b.fc2, g.fc2);
    Eigen::MatrixXd d_fc1 =
        d_gelu.cwiseProduct(c.fc1_out.unaryExpr([](double v) { return gelu_grad(v); }));
    Eigen::MatrixXd d_ln2 = affine_backward(c.ln2_out, d_fc1, b.fc1, g.fc1);
    Eigen::MatrixXd d_mid = dx + layer_norm_backward(d_ln2, c.ln2_xhat,
                                                     c.ln2_rstd, b.ln2_gamma,
                                                     g.ln2_gamma, g.ln2_beta);

    // x_mid = x_in + proj(attention(qkv(ln1(x_in))))
    Eigen::MatrixXd d_attn_out = affine_backward(c.attn_out, d_mid, b.proj, g.proj);
    Eigen::MatrixXd d_qkv(L, 3 * d);
    for (int h = 0; h < heads; ++h) {
      const auto q = c.qkv.middleCols(h * hd, hd);
      const auto k = c.qkv.middleCols(d + h * hd, hd);
      const auto v = c.qkv.middleCols(2 * d + h * hd, hd);
      const Eigen::MatrixXd& p = c.attn[h];
      const auto d_o = d_attn_out.middleCols(h * hd, hd);
      const Eigen::MatrixXd dp = d_o * v.transpose();
      d_qkv.middleCols(2 * d + h * hd, hd) = p.transpose() * d_o;
      Eigen::MatrixXd ds = p.cwiseProduct(dp);
      const Eigen::VectorXd row_dot = ds.rowwise().sum();
      ds -= (p.array().colwise() * row_dot.array()).matrix();
      ds *= scale;
      d_qkv.middleCols(h * hd, hd) = ds * k;
      d_qkv.middleCols(d + h * hd, hd) = ds.transpose() * q;
    }
    Eigen::MatrixXd d_ln1 = affine_backward(c.ln1_out, d_qkv, b.qkv, g.qkv);
    dx = d_mid + layer_norm_backward(d_ln1, c.ln1_xhat, c.ln1_rstd, b.ln1_gamma,
                                     g.ln1_gamma, g.ln1_beta);
  }

  grads.cls_token += dx.topRows(1);
  if (n > 0) {
    const Eigen::MatrixXd d_tokens = dx.bottomRows(n);
    affine_backward(cache.input.patches, d_tokens, params.patch_embed,
                    grads.patch_embed);
    if (params.pos_embed.size() > 0) {
      for (int t = 0; t < n; ++t) {
        grads.pos_embed.row(cache.input.position_ids[t]) += d_tokens.row(t);
      }
    }
  }
}

}  // namespace aps
