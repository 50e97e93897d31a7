// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

// Dense primitives shared by every module: row-major matrices, row
// normalization, temperature softmax and the information-theoretic
// reductions (cross entropy, KL, entropy) over batches of distributions.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "lgd/error.hpp"

namespace lgd {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Samples (or anchors) along rows, feature dimensions along columns.
using EmbeddingMatrix = Matrix<double>;

/// Rows whose norm falls below this are treated as degenerate.
inline constexpr double kZeroNormThreshold = 1e-12;

/// Clamp added inside every logarithm of a probability.
inline constexpr double kLogEpsilon = 1e-12;

enum class Reduction { kMean, kSum };

template <typename Derived>
std::string shape_str(const Eigen::EigenBase<Derived>& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

template <typename A, typename B>
void require_same_shape(const Eigen::EigenBase<A>& a, const Eigen::EigenBase<B>& b,
                        const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " +
                     shape_str(b));
  }
}

/// Checked matrix product. Eigen's single-threaded kernels give a fixed
/// accumulation order per build, so results are bit-reproducible.
template <typename A, typename B>
Matrix<typename A::Scalar> matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, lhs " + shape_str(a) + " rhs " +
                     shape_str(b));
  }
  Matrix<typename A::Scalar> out(a.rows(), b.cols());
  out.noalias() = a * b;
  return out;
}

template <typename Scalar>
struct NormalizedRows {
  Matrix<Scalar> values;
  std::vector<bool> zero_rows;

  bool any_zero() const {
    for (bool z : zero_rows) {
      if (z) return true;
    }
    return false;
  }
};

/// Divides each row by its Euclidean norm. Rows with norm below
/// kZeroNormThreshold are returned unchanged and flagged.
template <typename Derived>
NormalizedRows<typename Derived::Scalar> l2_normalize_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  NormalizedRows<Scalar> out{Matrix<Scalar>(x), std::vector<bool>(x.rows(), false)};
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar n = out.values.row(i).norm();
    if (n < Scalar(kZeroNormThreshold)) {
      out.zero_rows[i] = true;
    } else {
      out.values.row(i) /= n;
    }
  }
  return out;
}

/// Batch of probability rows. Construction validates that entries lie in
/// [0, 1] and every row sums to one within 1e-9.
template <typename Scalar>
class ScoreDistribution {
 public:
  ScoreDistribution() = default;

  explicit ScoreDistribution(Matrix<Scalar> probs) : probs_(std::move(probs)) {
    if (probs_.rows() < 1 || probs_.cols() < 1) {
      throw ShapeError("ScoreDistribution: empty shape " + shape_str(probs_));
    }
    for (Index i = 0; i < probs_.rows(); ++i) {
      Scalar sum = 0;
      for (Index j = 0; j < probs_.cols(); ++j) {
        const Scalar p = probs_(i, j);
        if (!(p >= Scalar(0) && p <= Scalar(1))) {
          throw InputError("ScoreDistribution: entry (" + std::to_string(i) + "," +
                           std::to_string(j) + ") outside [0,1]");
        }
        sum += p;
      }
      if (std::abs(sum - Scalar(1)) > Scalar(1e-9)) {
        throw InputError("ScoreDistribution: row " + std::to_string(i) + " does not sum to 1");
      }
    }
  }

  const Matrix<Scalar>& probs() const noexcept { return probs_; }
  Index rows() const noexcept { return probs_.rows(); }
  Index cols() const noexcept { return probs_.cols(); }
  Scalar operator()(Index i, Index j) const { return probs_(i, j); }

 private:
  Matrix<Scalar> probs_;
};

/// Row-wise softmax of logits / tau with max subtraction.
template <typename Derived>
ScoreDistribution<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits,
                                                         typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  if (!(tau > Scalar(0)) || !std::isfinite(tau)) {
    throw ParameterError("softmax_rows: temperature must be positive and finite");
  }
  if (!logits.allFinite()) {
    throw InputError("softmax_rows: non-finite logit");
  }
  Matrix<Scalar> p(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const Scalar mx = logits.row(i).maxCoeff();
    p.row(i) = ((logits.row(i).array() - mx) / tau).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return ScoreDistribution<Scalar>(std::move(p));
}

namespace detail {

template <typename Scalar>
Scalar reduce(Scalar total, Index rows, Reduction r) {
  return r == Reduction::kMean ? total / Scalar(rows) : total;
}

}  // namespace detail

/// -sum_j target[i,j] * log(pred[i,j] + eps), reduced over rows.
template <typename Scalar>
Scalar cross_entropy_rows(const ScoreDistribution<Scalar>& target,
                          const ScoreDistribution<Scalar>& pred,
                          Reduction reduction = Reduction::kMean) {
  require_same_shape(target.probs(), pred.probs(), "cross_entropy_rows");
  const Scalar total =
      -(target.probs().array() * (pred.probs().array() + Scalar(kLogEpsilon)).log()).sum();
  return detail::reduce(total, target.rows(), reduction);
}

/// -sum_j p log(p + eps). With this clamp CE(p,q) = KL(p,q) + H(p) holds exactly.
template <typename Scalar>
Scalar entropy_rows(const ScoreDistribution<Scalar>& p, Reduction reduction = Reduction::kMean) {
  const Scalar total = -(p.probs().array() * (p.probs().array() + Scalar(kLogEpsilon)).log()).sum();
  return detail::reduce(total, p.rows(), reduction);
}

/// sum_j p log((p + eps) / (q + eps)), reduced over rows.
template <typename Scalar>
Scalar kl_rows(const ScoreDistribution<Scalar>& p, const ScoreDistribution<Scalar>& q,
               Reduction reduction = Reduction::kMean) {
  require_same_shape(p.probs(), q.probs(), "kl_rows");
  const auto eps = Scalar(kLogEpsilon);
  const Scalar total =
      (p.probs().array() * ((p.probs().array() + eps).log() - (q.probs().array() + eps).log()))
          .sum();
  return detail::reduce(total, p.rows(), reduction);
}

/// Per-row KL values (no reduction).
template <typename Scalar>
Vector<Scalar> kl_per_row(const ScoreDistribution<Scalar>& p, const ScoreDistribution<Scalar>& q) {
  require_same_shape(p.probs(), q.probs(), "kl_per_row");
  const auto eps = Scalar(kLogEpsilon);
  return (p.probs().array() * ((p.probs().array() + eps).log() - (q.probs().array() + eps).log()))
      .rowwise()
      .sum()
      .matrix();
}

/// Index of the row maximum; ties go to the lowest index.
template <typename Derived>
std::vector<Index> argmax_rows(const Eigen::MatrixBase<Derived>& x) {
  if (x.cols() < 1) throw ShapeError("argmax_rows: zero columns");
  std::vector<Index> out(x.rows(), 0);
  for (Index i = 0; i < x.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < x.cols(); ++j) {
      if (x(i, j) > x(i, best)) best = j;
    }
    out[i] = best;
  }
  return out;
}

/// Mean pairwise cosine over the columns of an anchor matrix (D x C).
template <typename Derived>
typename Derived::Scalar mean_pairwise_cosine(const Eigen::MatrixBase<Derived>& anchors) {
  using Scalar = typename Derived::Scalar;
  const Index c = anchors.cols();
  if (c < 2) return Scalar(0);
  Scalar total = 0;
  Index pairs = 0;
  for (Index a = 0; a < c; ++a) {
    for (Index b = a + 1; b < c; ++b) {
      const Scalar na = anchors.col(a).norm();
      const Scalar nb = anchors.col(b).norm();
      const Scalar denom = std::max(na * nb, Scalar(kZeroNormThreshold));
      total += anchors.col(a).dot(anchors.col(b)) / denom;
      ++pairs;
    }
  }
  return total / Scalar(pairs);
}

}  // namespace lgd
