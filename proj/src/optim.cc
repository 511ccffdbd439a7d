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

#include "aps/optim.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "aps/errors.h"

namespace aps {

ClipState::ClipState(double momentum, double alpha)
    : momentum_(momentum), alpha_(alpha) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("clip: momentum must lie in [0, 1)");
  }
  if (!(alpha > 0.0)) throw std::invalid_argument("clip: alpha must be > 0");
}

void ClipState::restore(Eigen::VectorXd ema, bool initialized) {
  ema_ = std::move(ema);
  initialized_ = initialized;
}

ClipOutcome clip_update(ClipState& state, const Eigen::VectorXd& g) {
  ClipOutcome out;
  out.input_norm = g.norm();
  if (!state.initialized_) {
    state.ema_ = g;
    state.initialized_ = true;
    out.gradient = g;
    out.threshold_norm = out.input_norm;
    return out;
  }
  if (g.size() != state.ema_.size()) {
    throw std::invalid_argument("clip: gradient length " +
                                std::to_string(g.size()) + " != state length " +
                                std::to_string(state.ema_.size()));
  }
  const double ema_norm = state.ema_.norm();
  out.threshold_norm = ema_norm;
  if (out.input_norm > state.alpha_ * ema_norm) {
    out.gradient = g * (ema_norm / (out.input_norm + ClipState::kEpsilon));
    out.triggered = true;
  } else {
    out.gradient = g;
  }
  // The EMA follows the raw gradient.
  state.ema_ = state.momentum_ * state.ema_ + (1.0 - state.momentum_) * g;
  return out;
}

void adamw_step(OptimState& state, std::span<Eigen::MatrixXd* const> params,
                std::span<const Eigen::MatrixXd> grads, double lr) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adamw: parameter/gradient count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() ||
        params[i]->cols() != grads[i].cols()) {
      throw std::invalid_argument("adamw: shape mismatch at tensor " +
                                  std::to_string(i));
    }
    if (!grads[i].allFinite()) {
      throw NumericalError("adamw: non-finite gradient in tensor " +
                           std::to_string(i) + "; step aborted");
    }
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      state.v.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
  } else if (state.m.size() != params.size()) {
    throw std::invalid_argument("adamw: optimizer state tracks a different "
                                "parameter list");
  }

  const AdamWConfig& h = state.hyper;
  ++state.step;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::MatrixXd& p = *params[i];
    const Eigen::MatrixXd& g = grads[i];
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g.cwiseProduct(g);
    p *= 1.0 - lr * h.weight_decay;
    p.array() -= lr * (state.m[i].array() / bc1) /
                 ((state.v[i].array() / bc2).sqrt() + h.eps);
  }
}

double cosine_lr(long step, long warmup_steps, long total_steps,
                 double base_lr) {
  if (warmup_steps < 0 || warmup_steps > total_steps) {
    throw std::invalid_argument("cosine_lr: warmup exceeds total steps");
  }
  if (step < 0 || step > total_steps) {
    throw std::invalid_argument("cosine_lr: step outside [0, total]");
  }
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / warmup_steps;
  }
  if (total_steps == warmup_steps) return base_lr;
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double EmaSchedule::coefficient(long step) const {
  if (total_steps <= 0) return end;
  const double t =
      std::clamp(static_cast<double>(step) / total_steps, 0.0, 1.0);
  return end - (end - start) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void momentum_encoder_update(std::span<const Eigen::MatrixXd* const> online,
                             std::span<Eigen::MatrixXd* const> target,
                             double coeff) {
  if (online.size() != target.size()) {
    throw std::invalid_argument("momentum update: tensor count mismatch");
  }
  for (std::size_t i = 0; i < online.size(); ++i) {
    if (online[i]->rows() != target[i]->rows() ||
        online[i]->cols() != target[i]->cols()) {
      throw std::invalid_argument("momentum update: shape mismatch at tensor " +
                                  std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < online.size(); ++i) {
    *target[i] = coeff * *target[i] + (1.0 - coeff) * *online[i];
  }
}

}  // namespace aps
