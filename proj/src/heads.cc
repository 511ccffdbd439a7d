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

#include <cmath>
#include <stdexcept>
#include <string>

#include "aps/encoder.h"

namespace aps {

Eigen::MatrixXd head_forward(const Eigen::MatrixXd& x, const HeadParams& params,
                             NormMode mode, const HeadStats* running,
                             HeadCache* cache, HeadStats* batch_stats) {
  const std::size_t n_layers = params.layers.size();
  if (mode == NormMode::kFrozen &&
      (running == nullptr || running->layers.size() != n_layers)) {
    throw std::invalid_argument("head: frozen mode needs running statistics");
  }
  if (cache) {
    *cache = HeadCache{};
    cache->mode = mode;
  }
  if (batch_stats) batch_stats->layers.clear();

  Eigen::MatrixXd h = x;
  const double rows = static_cast<double>(x.rows());
  for (std::size_t l = 0; l < n_layers; ++l) {
    const HeadLayer& layer = params.layers[l];
    if (h.cols() != layer.linear.w.rows()) {
      throw std::invalid_argument("head: layer " + std::to_string(l) +
                                  " expects width " +
                                  std::to_string(layer.linear.w.rows()) +
                                  ", got " + std::to_string(h.cols()));
    }
    if (cache) cache->inputs.push_back(h);
    Eigen::MatrixXd y = h * layer.linear.w;
    y.rowwise() += layer.linear.b.row(0);

    Eigen::MatrixXd mean, var;
    if (mode == NormMode::kBatch) {
      mean = y.colwise().mean();
      var = (y.rowwise() - mean.row(0)).array().square().colwise().sum() / rows;
      if (batch_stats) batch_stats->layers.push_back(NormStats{mean, var});
    } else {
      mean = running->layers[l].mean;
      var = running->layers[l].var;
    }
    const Eigen::MatrixXd rstd =
        (var.array() + kBatchNormEps).rsqrt().matrix();
    Eigen::MatrixXd xhat = ((y.rowwise() - mean.row(0)).array().rowwise() *
                            rstd.row(0).array())
                               .matrix();
    Eigen::MatrixXd out = xhat;
    if (layer.bn_gamma.size() > 0) {
      out = (out.array().rowwise() * layer.bn_gamma.row(0).array()).matrix();
      out.rowwise() += layer.bn_beta.row(0);
    }
    if (l + 1 < n_layers) out = out.cwiseMax(0.0);
    if (cache) {
      cache->xhat.push_back(std::move(xhat));
      cache->rstd.push_back(rstd);
      cache->outputs.push_back(out);
    }
    h = std::move(out);
  }
  if (cache) cache->filled = true;
  return h;
}

Eigen::MatrixXd head_backward(const HeadCache& cache,
                              const Eigen::MatrixXd& d_out,
                              const HeadParams& params, HeadParams& grads) {
  if (!cache.filled) throw std::logic_error("head_backward: cache missing");
  const std::size_t n_layers = params.layers.size();
  Eigen::MatrixXd d = d_out;
  for (std::size_t li = n_layers; li-- > 0;) {
    const HeadLayer& layer = params.layers[li];
    HeadLayer& g = grads.layers[li];
    const Eigen::MatrixXd& xhat = cache.xhat[li];
    if (li + 1 < n_layers) {
      d = (cache.outputs[li].array() > 0.0).select(d, 0.0);
    }
    Eigen::MatrixXd dxhat = d;
    if (layer.bn_gamma.size() > 0) {
      g.bn_gamma += (d.array() * xhat.array()).colwise().sum().matrix();
      g.bn_beta += d.colwise().sum();
      dxhat = (d.array().rowwise() * layer.bn_gamma.row(0).array()).matrix();
    }
    const Eigen::MatrixXd& rstd = cache.rstd[li];
    Eigen::MatrixXd dy;
    if (cache.mode == NormMode::kBatch) {
      const double n = static_cast<double>(d.rows());
      const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum_dxhat_xhat =
          (dxhat.array() * xhat.array()).colwise().sum().matrix();
      dy = ((dxhat.array() * n).rowwise() - sum_dxhat.array() -
            xhat.array().rowwise() * sum_dxhat_xhat.array())
               .matrix();
      dy = (dy.array().rowwise() * (rstd.row(0).array() / n)).matrix();
    } else {
      dy = (dxhat.array().rowwise() * rstd.row(0).array()).matrix();
    }
    g.linear.w.noalias() += cache.inputs[li].transpose() * dy;
    g.linear.b += dy.colwise().sum();
    d = dy * layer.linear.w.transpose();
  }
  return d;
}

void update_running_stats(HeadStats& running, const HeadStats& batch,
                          double momentum) {
  if (running.layers.size() != batch.layers.size()) {
    throw std::invalid_argument("running stats: layer count mismatch");
  }
  for (std::size_t l = 0; l < running.layers.size(); ++l) {
    running.layers[l].mean =
        (1.0 - momentum) * running.layers[l].mean + momentum * batch.layers[l].mean;
    running.layers[l].var =
        (1.0 - momentum) * running.layers[l].var + momentum * batch.layers[l].var;
  }
}

Eigen::MatrixXd project(const Eigen::MatrixXd& rep, const Model& model,
                        NormMode mode) {
  return head_forward(rep, model.params.projector, mode, &model.projector_stats);
}

Eigen::MatrixXd predict(const Eigen::MatrixXd& z, const Model& model,
                        NormMode mode) {
  return head_forward(z, model.params.predictor, mode, &model.predictor_stats);
}

BranchOutput forward_branch(const Model& model,
                            std::span<const TokenSequence> batch, NormMode mode,
                            BranchCache* cache, bool with_predictor) {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  const int d = model.backbone.token_dim;
  BranchOutput out;
  out.rep.resize(static_cast<Eigen::Index>(batch.size()), d);
  if (cache) cache->encoder.assign(batch.size(), EncoderCache{});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.rep.row(static_cast<Eigen::Index>(i)) =
        encode(batch[i], model.params.encoder, model.backbone,
               cache ? &cache->encoder[i] : nullptr);
  }
  out.z = head_forward(out.rep, model.params.projector, mode,
                       &model.projector_stats, cache ? &cache->projector : nullptr,
                       &out.projector_stats);
  if (with_predictor) {
    out.q = head_forward(out.z, model.params.predictor, mode,
                         &model.predictor_stats,
                         cache ? &cache->predictor : nullptr,
                         &out.predictor_stats);
  }
  return out;
}

void backward_branch(const Model& model, const BranchCache& cache,
                     const Eigen::MatrixXd& dq, const Eigen::MatrixXd& dz,
                     ModelParams& grads) {
  Eigen::MatrixXd dz_total = dz;
  if (cache.predictor.filled) {
    dz_total += head_backward(cache.predictor, dq, model.params.predictor,
                              grads.predictor);
  }
  const Eigen::MatrixXd drep = head_backward(
      cache.projector, dz_total, model.params.projector, grads.projector);
  for (std::size_t i = 0; i < cache.encoder.size(); ++i) {
    encode_backward(cache.encoder[i], drep.row(static_cast<Eigen::Index>(i)),
                    model.params.encoder, model.backbone, grads.encoder);
  }
}

Eigen::MatrixXd representations(const Model& model,
                                std::span<const TokenSequence> batch) {
  Eigen::MatrixXd rep(static_cast<Eigen::Index>(batch.size()),
                      model.backbone.token_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    rep.row(static_cast<Eigen::Index>(i)) =
        encode(batch[i], model.params.encoder, model.backbone);
  }
  return rep;
}

}  // namespace aps
