// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

// Small fully connected networks with exact backward passes. The student
// encoder is an MLP whose output rows are unit-normalized; the projection
// head that maps text anchors into the embedding space is an MLP without
// output normalization.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lgd/numerics.hpp"
#include "lgd/rng.hpp"

namespace lgd {

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  bool decay = true;  // weight decay applies (weights yes, biases no)
};

template <typename Scalar>
using ParameterList = std::vector<Parameter<Scalar>>;

/// Gradients in the same order and shapes as a ParameterList.
template <typename Scalar>
using GradientList = std::vector<Matrix<Scalar>>;

struct MlpSpec {
  Index input_dim = 0;
  std::vector<Index> hidden_dims;
  Index output_dim = 0;
  bool normalize_output = true;
  bool bias = true;
};

template <typename Scalar>
struct MlpCache {
  std::vector<Matrix<Scalar>> layer_inputs;  // input to each layer (post-activation)
  std::vector<Matrix<Scalar>> pre_activations;
  Matrix<Scalar> raw_output;
  Vector<Scalar> output_norms;
  std::vector<bool> zero_rows;
  std::uint64_t version = 0;
};

template <typename Scalar>
struct MlpForward {
  Matrix<Scalar> output;
  MlpCache<Scalar> cache;
};

/// ReLU MLP. Layer l maps rows by y = x W_l + b_l with W_l of shape in x out.
/// Parameters are laid out [W0, b0, W1, b1, ...] (biases omitted when
/// disabled).
template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {
    if (spec_.input_dim < 1 || spec_.output_dim < 1) {
      throw ShapeError("Mlp: input and output dims must be positive");
    }
    Index in = spec_.input_dim;
    std::vector<Index> outs = spec_.hidden_dims;
    outs.push_back(spec_.output_dim);
    for (std::size_t l = 0; l < outs.size(); ++l) {
      if (outs[l] < 1) throw ShapeError("Mlp: hidden dims must be positive");
      params_.push_back({"layer" + std::to_string(l) + ".weight",
                         Matrix<Scalar>::Zero(in, outs[l]), true});
      if (spec_.bias) {
        params_.push_back({"layer" + std::to_string(l) + ".bias",
                           Matrix<Scalar>::Zero(1, outs[l]), false});
      }
      in = outs[l];
    }
  }

  /// He-normal hidden layers, variance 1/fan_in on the last layer, zero biases.
  void init_random(CounterRng& rng) {
    const Index layers = num_layers();
    for (Index l = 0; l < layers; ++l) {
      auto& w = weight(l);
      const double fan_in = static_cast<double>(w.rows());
      const double sigma = std::sqrt((l + 1 < layers ? 2.0 : 1.0) / fan_in);
      w = normal_matrix(w.rows(), w.cols(), sigma, rng).template cast<Scalar>();
      if (spec_.bias) bias(l).setZero();
    }
  }

  const MlpSpec& spec() const noexcept { return spec_; }
  Index num_layers() const noexcept { return static_cast<Index>(spec_.hidden_dims.size()) + 1; }
  Index input_dim() const noexcept { return spec_.input_dim; }
  Index output_dim() const noexcept { return spec_.output_dim; }
  std::uint64_t version() const noexcept { return version_; }

  const ParameterList<Scalar>& parameters() const noexcept { return params_; }

  /// Mutable access invalidates any cache produced by an earlier forward.
  ParameterList<Scalar>& mutable_parameters() noexcept {
    ++version_;
    return params_;
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  Matrix<Scalar>& weight(Index l) {
    ++version_;
    return params_[stride() * l].value;
  }
  const Matrix<Scalar>& weight(Index l) const { return params_[stride() * l].value; }
  Matrix<Scalar>& bias(Index l) {
    ++version_;
    return params_[stride() * l + 1].value;
  }
  const Matrix<Scalar>& bias(Index l) const { return params_[stride() * l + 1].value; }

  template <typename Derived>
  MlpForward<Scalar> forward(const Eigen::MatrixBase<Derived>& inputs) const {
    if (inputs.cols() != spec_.input_dim) {
      throw ShapeError("Mlp::forward: input has " + std::to_string(inputs.cols()) +
                       " columns, network expects " + std::to_string(spec_.input_dim));
    }
    MlpForward<Scalar> out;
    auto& cache = out.cache;
    cache.version = version_;
    Matrix<Scalar> x = inputs;
    const Index layers = num_layers();
    for (Index l = 0; l < layers; ++l) {
      cache.layer_inputs.push_back(x);
      Matrix<Scalar> y = matmul(x, weight(l));
      if (spec_.bias) y.rowwise() += bias(l).row(0);
      if (l + 1 < layers) {
        cache.pre_activations.push_back(y);
        x = y.cwiseMax(Scalar(0));
      } else {
        x = std::move(y);
      }
    }
    cache.raw_output = x;
    if (spec_.normalize_output) {
      auto normalized = l2_normalize_rows(x);
      cache.output_norms = x.rowwise().norm();
      cache.zero_rows = normalized.zero_rows;
      out.output = std::move(normalized.values);
    } else {
      out.output = std::move(x);
    }
    return out;
  }

  /// Parameter gradients for d(loss)/d(output) = grad_output. Includes the
  /// Jacobian (I - z z^T) / |y| of the output normalization.
  template <typename Derived>
  GradientList<Scalar> backward(const MlpCache<Scalar>& cache,
                                const Eigen::MatrixBase<Derived>& grad_output) const {
    if (cache.version != version_ || cache.layer_inputs.size() != static_cast<std::size_t>(num_layers())) {
      throw StateError("Mlp::backward: cache is stale (parameters changed since forward)");
    }
    require_same_shape(grad_output, cache.raw_output, "Mlp::backward");
    Matrix<Scalar> dy = grad_output;
    if (spec_.normalize_output) {
      for (Index i = 0; i < dy.rows(); ++i) {
        if (cache.zero_rows[i]) {
          dy.row(i).setZero();
          continue;
        }
        const Scalar n = cache.output_norms(i);
        const Matrix<Scalar> z = cache.raw_output.row(i) / n;
        const Scalar proj = z.row(0).dot(grad_output.row(i));
        dy.row(i) = (grad_output.row(i) - proj * z) / n;
      }
    }
    GradientList<Scalar> grads(params_.size());
    for (Index l = num_layers() - 1; l >= 0; --l) {
      const Matrix<Scalar>& x = cache.layer_inputs[l];
      grads[stride() * l] = matmul(x.transpose(), dy);
      if (spec_.bias) grads[stride() * l + 1] = dy.colwise().sum();
      if (l > 0) {
        Matrix<Scalar> dx = matmul(dy, weight(l).transpose());
        const Matrix<Scalar>& pre = cache.pre_activations[l - 1];
        dy = (pre.array() > Scalar(0)).select(dx.array(), Scalar(0)).matrix();
      }
    }
    return grads;
  }

 private:
  Index stride() const noexcept { return spec_.bias ? 2 : 1; }

  MlpSpec spec_;
  ParameterList<Scalar> params_;
  std::uint64_t version_ = 0;
};

/// Student encoder: rows of raw inputs to unit-norm embeddings.
using StudentNet = Mlp<double>;

/// Learnable map from text-anchor dim to embedding dim, applied to each anchor.
using ProjectionHead = Mlp<double>;

inline MlpSpec student_spec(Index input_dim, std::vector<Index> hidden, Index output_dim) {
  return MlpSpec{input_dim, std::move(hidden), output_dim, true, true};
}

inline MlpSpec projection_spec(Index text_dim, Index output_dim, std::vector<Index> hidden = {},
                               bool bias = false) {
  return MlpSpec{text_dim, std::move(hidden), output_dim, false, bias};
}

/// Projected anchors (D x C) for text anchors (D_text x C).
template <typename Scalar>
struct ProjectedAnchors {
  Matrix<Scalar> anchors;
  MlpCache<Scalar> cache;
};

template <typename Scalar, typename Derived>
ProjectedAnchors<Scalar> project_anchors(const Mlp<Scalar>& head,
                                         const Eigen::MatrixBase<Derived>& text_anchors) {
  auto fwd = head.forward(text_anchors.transpose());
  return {fwd.output.transpose(), std::move(fwd.cache)};
}

/// Chains d(loss)/d(projected anchors) (D x C) into projection parameter gradients.
template <typename Scalar, typename Derived>
GradientList<Scalar> backward_projection(const Mlp<Scalar>& head, const ProjectedAnchors<Scalar>& p,
                                         const Eigen::MatrixBase<Derived>& grad_anchors) {
  return head.backward(p.cache, grad_anchors.transpose());
}

}  // namespace lgd
