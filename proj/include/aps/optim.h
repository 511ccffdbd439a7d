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

#ifndef APS_OPTIM_H_
#define APS_OPTIM_H_

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace aps {

// ---------------------------------------------------------------------------
// Adaptive gradient clip.
//
// G_t = m * G_{t-1} + (1 - m) * g_t tracks the raw gradient vector of one
// parameter group. A gradient with ||g_t|| > alpha * ||G_{t-1}|| is rescaled
// to g_t * ||G_{t-1}|| / (||g_t|| + eps). The first call seeds G_0 = g_0 and
// passes g_0 through.
// ---------------------------------------------------------------------------
struct ClipConfig {
  bool enabled = true;
  double momentum = 0.4;
  double alpha = 1.05;
};

struct ClipOutcome {
  Eigen::VectorXd gradient;
  bool triggered = false;
  double input_norm = 0.0;
  double threshold_norm = 0.0;  // ||G_{t-1}||
};

class ClipState {
 public:
  static constexpr double kEpsilon = 1e-8;

  ClipState() = default;
  // Throws std::invalid_argument unless 0 <= momentum < 1 and alpha > 0.
  ClipState(double momentum, double alpha);

  double momentum() const { return momentum_; }
  double alpha() const { return alpha_; }
  bool initialized() const { return initialized_; }
  const Eigen::VectorXd& ema() const { return ema_; }

  // Restores a saved state.
  void restore(Eigen::VectorXd ema, bool initialized);

 private:
  friend ClipOutcome clip_update(ClipState&, const Eigen::VectorXd&);
  Eigen::VectorXd ema_;
  double momentum_ = 0.4;
  double alpha_ = 1.05;
  bool initialized_ = false;
};

// Throws std::invalid_argument when g's length differs from the state's.
ClipOutcome clip_update(ClipState& state, const Eigen::VectorXd& g);

// ---------------------------------------------------------------------------
// AdamW with bias correction and decoupled weight decay.
// ---------------------------------------------------------------------------
struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

struct OptimState {
  AdamWConfig hyper;
  long step = 0;
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
};

// Moments are created on the first call. Throws std::invalid_argument on a
// shape mismatch and NumericalError (leaving params untouched) on a
// non-finite gradient.
void adamw_step(OptimState& state, std::span<Eigen::MatrixXd* const> params,
                std::span<const Eigen::MatrixXd> grads, double lr);

// Linear warmup from 0 to base_lr, then half-cosine decay to 0.
double cosine_lr(long step, long warmup_steps, long total_steps, double base_lr);

// Momentum-encoder coefficient rising from `start` to `end` on a half cosine.
struct EmaSchedule {
  double start = 0.99;
  double end = 1.0;
  long total_steps = 1;

  double coefficient(long step) const;
};

// target <- coeff * target + (1 - coeff) * online.
void momentum_encoder_update(std::span<const Eigen::MatrixXd* const> online,
                             std::span<Eigen::MatrixXd* const> target,
                             double coeff);

}  // namespace aps

#endif  // APS_OPTIM_H_
