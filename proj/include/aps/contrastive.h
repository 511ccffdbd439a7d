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

#ifndef APS_CONTRASTIVE_H_
#define APS_CONTRASTIVE_H_

#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace aps {

// Row-wise embeddings of a mini-batch: N rows of width dim.
using EmbeddingBatch = Eigen::MatrixXd;

// Throws std::invalid_argument naming the first non-finite entry or
// zero-norm row.
void validate_embeddings(const EmbeddingBatch& x, const char* name);

// (i, j) = cos(q_i, z_j).
Eigen::MatrixXd cosine_similarity_matrix(const EmbeddingBatch& q,
                                         const EmbeddingBatch& z);

// D(q, z) = -sum_i log softmax_j(cos(q_i, z_j) / tau)[i]; the positive j = i
// stays in the denominator.
double info_nce(const EmbeddingBatch& q, const EmbeddingBatch& z, double tau);

struct InfoNceResult {
  double value = 0.0;
  Eigen::MatrixXd grad_q;  // dD/dq; z is a constant
};
InfoNceResult info_nce_with_grad(const EmbeddingBatch& q,
                                 const EmbeddingBatch& z, double tau);

// Loss value and gradients per view. grad_z entries are stop-gradient paths
// and are exactly zero.
struct LossResult {
  double value = 0.0;
  std::vector<Eigen::MatrixXd> grad_q;
  std::vector<Eigen::MatrixXd> grad_z;
};

// tau * [D(q1, sg(z2)) + D(q2, sg(z1))].
LossResult contrastive_loss(const EmbeddingBatch& q1, const EmbeddingBatch& z1,
                            const EmbeddingBatch& q2, const EmbeddingBatch& z2,
                            double tau);

struct ViewEmbeddings {
  EmbeddingBatch q;
  EmbeddingBatch z;
};

// (1 / |pairs|) * sum over ordered pairs (j, k) of tau * D(q_j, sg(z_k)).
// An empty pair list means every ordered pair j != k.
LossResult multiview_loss(const std::vector<ViewEmbeddings>& views, double tau,
                          std::vector<std::pair<int, int>> pairs = {});

}  // namespace aps

#endif  // APS_CONTRASTIVE_H_
