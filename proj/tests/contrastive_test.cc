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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace aps {
namespace {

Eigen::MatrixXd random_batch(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = g(rng);
  }
  return m;
}

// Plain-loop reference of D(q, z) without any shared code.
double reference_info_nce(const Eigen::MatrixXd& q, const Eigen::MatrixXd& z,
                          double tau) {
  const int n = static_cast<int>(q.rows());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> logits;
    for (int j = 0; j < n; ++j) {
      double dot = 0, nq = 0, nz = 0;
      for (int k = 0; k < q.cols(); ++k) {
        dot += q(i, k) * z(j, k);
        nq += q(i, k) * q(i, k);
        nz += z(j, k) * z(j, k);
      }
      logits.push_back(dot / std::sqrt(nq * nz) / tau);
    }
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l);
    total -= std::log(std::exp(logits[static_cast<std::size_t>(i)]) / denom);
  }
  return total;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

TEST(Cosine, Examples) {
  Eigen::MatrixXd q(1, 2), z(1, 2);
  q << 1, 0;
  z << 1, 1;
  EXPECT_NEAR(cosine_similarity_matrix(q, z)(0, 0), 1.0 / std::sqrt(2.0), 1e-15);

  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
  const auto s = cosine_similarity_matrix(id, id);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(s(i, j), i == j ? 1.0 : 0.0);
  }
  const auto r = random_batch(5, 4, 1);
  const auto sr = cosine_similarity_matrix(r, random_batch(5, 4, 2));
  EXPECT_LE(sr.maxCoeff(), 1.0);
  EXPECT_GE(sr.minCoeff(), -1.0);
}

TEST(Cosine, ZeroRowReportedWithIndex) {
  Eigen::MatrixXd q = random_batch(4, 3, 3);
  q.row(2).setZero();
  try {
    cosine_similarity_matrix(q, random_batch(4, 3, 4));
    FAIL() << "expected an exception";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(InfoNce, SingleRowIsZero) {
  EXPECT_DOUBLE_EQ(info_nce(random_batch(1, 4, 5), random_batch(1, 4, 6), 0.1), 0.0);
}

TEST(InfoNce, OrthonormalPair) {
  const Eigen::MatrixXd e = Eigen::MatrixXd::Identity(2, 2);
  const double expected = -2.0 * std::log(std::exp(10.0) / (std::exp(10.0) + 1.0));
  EXPECT_NEAR(info_nce(e, e, 0.1), expected, 1e-15);
  EXPECT_NEAR(info_nce(e, e, 0.1), 9.08e-5, 0.01e-5);
}

TEST(InfoNce, MatchesPlainLoopReference) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto q = random_batch(6, 5, 10 + s);
    const auto z = random_batch(6, 5, 20 + s);
    EXPECT_NEAR(info_nce(q, z, 0.2), reference_info_nce(q, z, 0.2), 1e-12);
  }
}

TEST(InfoNce, LargeLogitsStayFinite) {
  const auto q = random_batch(8, 4, 7);
  EXPECT_TRUE(std::isfinite(info_nce(q, q, 1e-4)));
}

TEST(InfoNce, RejectsBadTau) {
  const auto q = random_batch(2, 2, 1);
  EXPECT_THROW(info_nce(q, q, 0.0), std::invalid_argument);
  EXPECT_THROW(info_nce(q, q, -1.0), std::invalid_argument);
}

TEST(InfoNce, PositiveLogitIncreaseLowersLoss) {
  // Raise q_0's alignment with z_0 while moving away from every other z.
  Eigen::MatrixXd z = Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd q(3, 3);
  q << 0.5, 0.5, 0.5, 0.2, 1.0, 0.1, 0.3, 0.1, 1.0;
  double prev = info_nce(q, z, 0.1);
  for (int step = 0; step < 5; ++step) {
    q(0, 0) += 0.5;
    const double now = info_nce(q, z, 0.1);
    EXPECT_LT(now, prev);
    prev = now;
  }
  // When each positive is its row maximum the loss is non-negative.
  EXPECT_GE(info_nce(z, z, 0.1), 0.0);
}

TEST(ContrastiveLoss, MirroredSingleRowIsZero) {
  const auto a = random_batch(1, 4, 1), b = random_batch(1, 4, 2);
  const LossResult r = contrastive_loss(a, b, b, a, 0.1);
  EXPECT_DOUBLE_EQ(r.value, 0.0);
  for (const auto& g : r.grad_q) EXPECT_TRUE(g.allFinite());
}

TEST(ContrastiveLoss, StopGradientIsExactlyZero) {
  const LossResult r = contrastive_loss(random_batch(4, 3, 1), random_batch(4, 3, 2),
                                        random_batch(4, 3, 3), random_batch(4, 3, 4),
                                        0.1);
  ASSERT_EQ(r.grad_z.size(), 2u);
  for (const auto& g : r.grad_z) {
    EXPECT_EQ(g.rows(), 4);
    EXPECT_TRUE((g.array() == 0.0).all());
  }
}

TEST(ContrastiveLoss, ValueIsTauTimesSum) {
  const auto q1 = random_batch(5, 3, 1), z1 = random_batch(5, 3, 2);
  const auto q2 = random_batch(5, 3, 3), z2 = random_batch(5, 3, 4);
  const double tau = 0.1;
  EXPECT_NEAR(contrastive_loss(q1, z1, q2, z2, tau).value,
              tau * (reference_info_nce(q1, z2, tau) + reference_info_nce(q2, z1, tau)),
              1e-12);
}

TEST(ContrastiveLoss, FiniteDifferenceGradient) {
  const auto q1 = random_batch(5, 4, 11), z1 = random_batch(5, 4, 12);
  const auto q2 = random_batch(5, 4, 13), z2 = random_batch(5, 4, 14);
  const double tau = 0.1, h = 1e-5;
  const LossResult r = contrastive_loss(q1, z1, q2, z2, tau);
  for (int view = 0; view < 2; ++view) {
    for (int i = 0; i < 5; ++i) {
      for (int k = 0; k < 4; ++k) {
        Eigen::MatrixXd a = view == 0 ? q1 : q2, b = a;
        a(i, k) += h;
        b(i, k) -= h;
        const double fp = view == 0 ? contrastive_loss(a, z1, q2, z2, tau).value
                                    : contrastive_loss(q1, z1, a, z2, tau).value;
        const double fm = view == 0 ? contrastive_loss(b, z1, q2, z2, tau).value
                                    : contrastive_loss(q1, z1, b, z2, tau).value;
        EXPECT_LT(rel_err(r.grad_q[static_cast<std::size_t>(view)](i, k),
                          (fp - fm) / (2 * h)),
                  1e-4);
      }
    }
  }
}

TEST(ContrastiveLoss, RowScaleInvarianceAndOrthogonalGradient) {
  auto q1 = random_batch(4, 3, 21);
  const auto z1 = random_batch(4, 3, 22), q2 = random_batch(4, 3, 23),
             z2 = random_batch(4, 3, 24);
  const LossResult base = contrastive_loss(q1, z1, q2, z2, 0.1);
  Eigen::MatrixXd scaled = q1;
  scaled.row(1) *= 2.0;
  EXPECT_NEAR(contrastive_loss(scaled, z1, q2, z2, 0.1).value, base.value, 1e-12);
  EXPECT_NEAR(base.grad_q[0].row(1).dot(q1.row(1)), 0.0, 1e-12);
}

TEST(ContrastiveLoss, PermutationInvariance) {
  const auto q1 = random_batch(5, 3, 31), z1 = random_batch(5, 3, 32),
             q2 = random_batch(5, 3, 33), z2 = random_batch(5, 3, 34);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(5);
  p.indices() << 3, 0, 4, 1, 2;
  const double a = contrastive_loss(q1, z1, q2, z2, 0.1).value;
  const double b = contrastive_loss(p * q1, p * z1, p * q2, p * z2, 0.1).value;
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(ContrastiveLoss, ShapeMismatchRejected) {
  EXPECT_THROW(contrastive_loss(random_batch(4, 3, 1), random_batch(4, 3, 2),
                                random_batch(3, 3, 3), random_batch(3, 3, 4), 0.1),
               std::invalid_argument);
  EXPECT_THROW(contrastive_loss(random_batch(4, 3, 1), random_batch(4, 2, 2),
                                random_batch(4, 3, 3), random_batch(4, 2, 4), 0.1),
               std::invalid_argument);
}

TEST(MultiviewLoss, TwoViewsIsHalfTheContrastiveLoss) {
  const auto q1 = random_batch(4, 3, 1), z1 = random_batch(4, 3, 2),
             q2 = random_batch(4, 3, 3), z2 = random_batch(4, 3, 4);
  const LossResult mv = multiview_loss({{q1, z1}, {q2, z2}}, 0.1);
  EXPECT_NEAR(mv.value, contrastive_loss(q1, z1, q2, z2, 0.1).value / 2, 1e-14);
}

TEST(MultiviewLoss, IdenticalSingleRowViewsGiveZero) {
  const auto q = random_batch(1, 3, 1), z = random_batch(1, 3, 2);
  EXPECT_DOUBLE_EQ(multiview_loss({{q, z}, {q, z}, {q, z}}, 0.1).value, 0.0);
}

TEST(MultiviewLoss, FourViewFiniteDifference) {
  std::vector<ViewEmbeddings> views;
  for (int v = 0; v < 4; ++v) {
    views.push_back({random_batch(3, 4, 40 + v), random_batch(3, 4, 50 + v)});
  }
  const LossResult r = multiview_loss(views, 0.2);
  const double h = 1e-5;
  for (int v = 0; v < 4; ++v) {
    EXPECT_TRUE((r.grad_z[static_cast<std::size_t>(v)].array() == 0.0).all());
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 4; ++k) {
        auto plus = views, minus = views;
        plus[static_cast<std::size_t>(v)].q(i, k) += h;
        minus[static_cast<std::size_t>(v)].q(i, k) -= h;
        const double fd =
            (multiview_loss(plus, 0.2).value - multiview_loss(minus, 0.2).value) /
            (2 * h);
        EXPECT_LT(rel_err(r.grad_q[static_cast<std::size_t>(v)](i, k), fd), 1e-4);
      }
    }
  }
}

TEST(MultiviewLoss, RejectsFewerThanTwoViews) {
  EXPECT_THROW(multiview_loss({{random_batch(2, 2, 1), random_batch(2, 2, 2)}}, 0.1),
               std::invalid_argument);
}

}  // namespace
}  // namespace aps
