// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "lgd/mlp.hpp"

namespace lgd {

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// Linear warmup from zero, then half-cosine decay to zero, over a
/// training-progress fraction t in [0, 1].
struct CosineWarmupSchedule {
  double base_lr = 0.03;
  double warmup_epochs = 5;
  double total_epochs = 30;

  void validate() const {
    if (!(total_epochs > warmup_epochs) || warmup_epochs < 0) {
      throw ParameterError("CosineWarmupSchedule: total epochs must exceed warmup epochs");
    }
    if (!(base_lr >= 0) || !std::isfinite(base_lr)) {
      throw ParameterError("CosineWarmupSchedule: base_lr must be finite and non-negative");
    }
  }

  double warmup_fraction() const { return warmup_epochs / total_epochs; }

  double lr_at(double t) const {
    t = std::clamp(t, 0.0, 1.0);
    const double w = warmup_fraction();
    if (t < w) return base_lr * t / w;
    return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * (t - w) / (1.0 - w)));
  }
};

/// Classical SGD with momentum; L2 decay is folded into the gradient of
/// parameters flagged for decay:
///   buffer <- mu * buffer + grad + wd * param
///   param  <- param - lr * buffer
template <typename Scalar>
class SgdMomentum {
 public:
  SgdMomentum() = default;

  SgdMomentum(const ParameterList<Scalar>& params, SgdConfig cfg) : cfg_(cfg) {
    for (const auto& p : params) {
      buffers_.push_back(Matrix<Scalar>::Zero(p.value.rows(), p.value.cols()));
    }
  }

  const SgdConfig& config() const noexcept { return cfg_; }
  const std::vector<Matrix<Scalar>>& buffers() const noexcept { return buffers_; }
  std::vector<Matrix<Scalar>>& mutable_buffers() noexcept { return buffers_; }

  void step(ParameterList<Scalar>& params, const GradientList<Scalar>& grads, Scalar lr,
            long step_index = 0) {
    if (params.size() != grads.size() || params.size() != buffers_.size()) {
      throw ShapeError("sgd_step: " + std::to_string(params.size()) + " params, " +
                       std::to_string(grads.size()) + " grads, " +
                       std::to_string(buffers_.size()) + " buffers");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      require_same_shape(params[k].value, grads[k], "sgd_step");
      require_same_shape(params[k].value, buffers_[k], "sgd_step");
      if (!grads[k].allFinite()) {
        throw TrainingError("non-finite gradient for '" + params[k].name + "' at step " +
                            std::to_string(step_index));
      }
    }
    const auto mu = Scalar(cfg_.momentum);
    const auto wd = Scalar(cfg_.weight_decay);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& buf = buffers_[k];
      auto& p = params[k].value;
      buf = mu * buf + grads[k];
      if (params[k].decay && wd != Scalar(0)) buf += wd * p;
      p -= lr * buf;
    }
  }

 private:
  SgdConfig cfg_;
  std::vector<Matrix<Scalar>> buffers_;
};

}  // namespace lgd
