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

#include "aps/contrastive.h"

#include <cmath>
#include <stdexcept>
#include <string>

namespace aps {

void validate_embeddings(const EmbeddingBatch& x, const char* name) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (!x.row(i).allFinite()) {
      throw std::invalid_argument(std::string(name) + ": non-finite entry in row " +
                                  std::to_string(i));
    }
    if (x.row(i).squaredNorm() == 0.0) {
      throw std::invalid_argument(std::string(name) + ": zero-norm row " +
                                  std::to_string(i));
    }
  }
}

namespace {

void check_pair(const EmbeddingBatch& q, const EmbeddingBatch& z) {
  if (q.rows() != z.rows() || q.cols() != z.cols() || q.rows() == 0) {
    throw std::invalid_argument("contrastive: shape mismatch between q (" +
                                std::to_string(q.rows()) + "x" +
                                std::to_string(q.cols()) + ") and z (" +
                                std::to_string(z.rows()) + "x" +
                                std::to_string(z.cols()) + ")");
  }
  validate_embeddings(q, "q");
  validate_embeddings(z, "z");
}

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("contrastive: temperature must be > 0");
  }
}

Eigen::MatrixXd row_normalized(const EmbeddingBatch& x) {
  return x.rowwise().normalized();
}

}  // namespace

Eigen::MatrixXd cosine_similarity_matrix(const EmbeddingBatch& q,
                                         const EmbeddingBatch& z) {
  check_pair(q, z);
  return row_normalized(q) * row_normalized(z).transpose();
}

InfoNceResult info_nce_with_grad(const EmbeddingBatch& q,
                                 const EmbeddingBatch& z, double tau) {
  check_tau(tau);
  check_pair(q, z);
  const Eigen::Index n = q.rows();
  const Eigen::VectorXd q_norm = q.rowwise().norm();
  const Eigen::MatrixXd qn = row_normalized(q);
  const Eigen::MatrixXd zn = row_normalized(z);
  const Eigen::MatrixXd logits = (qn * zn.transpose()) / tau;

  InfoNceResult out;
  Eigen::MatrixXd dlogits(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double sum = e.sum();
    out.value -= logits(i, i) - mx - std::log(sum);
    dlogits.row(i) = e / sum;
    dlogits(i, i) -= 1.0;
  }
  // logits = qn zn^T / tau
  const Eigen::MatrixXd dqn = (dlogits * zn) / tau;
  out.grad_q.resize(n, q.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double proj = qn.row(i).dot(dqn.row(i));
    out.grad_q.row(i) = (dqn.row(i) - proj * qn.row(i)) / q_norm(i);
  }
  return out;
}

double info_nce(const EmbeddingBatch& q, const EmbeddingBatch& z, double tau) {
  return info_nce_with_grad(q, z, tau).value;
}

LossResult contrastive_loss(const EmbeddingBatch& q1, const EmbeddingBatch& z1,
                            const EmbeddingBatch& q2, const EmbeddingBatch& z2,
                            double tau) {
  check_tau(tau);
  if (q1.rows() != q2.rows() || q1.cols() != q2.cols()) {
    throw std::invalid_argument("contrastive: views have different shapes");
  }
  const InfoNceResult d1 = info_nce_with_grad(q1, z2, tau);
  const InfoNceResult d2 = info_nce_with_grad(q2, z1, tau);
  LossResult out;
  out.value = tau * (d1.value + d2.value);
  out.grad_q = {tau * d1.grad_q, tau * d2.grad_q};
  out.grad_z = {Eigen::MatrixXd::Zero(z1.rows(), z1.cols()),
                Eigen::MatrixXd::Zero(z2.rows(), z2.cols())};
  return out;
}

LossResult multiview_loss(const std::vector<ViewEmbeddings>& views, double tau,
                          std::vector<std::pair<int, int>> pairs) {
  check_tau(tau);
  const int v = static_cast<int>(views.size());
  if (v < 2) throw std::invalid_argument("multi-view loss: need >= 2 views");
  if (pairs.empty()) {
    for (int j = 0; j < v; ++j) {
      for (int k = 0; k < v; ++k) {
        if (j != k) pairs.emplace_back(j, k);
      }
    }
  }
  LossResult out;
  for (const auto& view : views) {
    out.grad_q.push_back(Eigen::MatrixXd::Zero(view.q.rows(), view.q.cols()));
    out.grad_z.push_back(Eigen::MatrixXd::Zero(view.z.rows(), view.z.cols()));
  }
  const double scale = tau / static_cast<double>(pairs.size());
  for (const auto& [j, k] : pairs) {
    if (j < 0 || k < 0 || j >= v || k >= v || j == k) {
      throw std::invalid_argument("multi-view loss: invalid view pair");
    }
    const InfoNceResult d = info_nce_with_grad(views[j].q, views[k].z, tau);
    out.value += scale * d.value;
    out.grad_q[j] += scale * d.grad_q;
  }
  return out;
}

}  // namespace aps
