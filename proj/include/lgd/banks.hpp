// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

// Textual and visual semantics banks, and the language-guided knowledge
// aggregation step: classify teacher features against the text anchors,
// average them per category, and fold the centroids into the visual bank.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lgd/numerics.hpp"

namespace lgd {

/// Fixed bank of one unit-norm text anchor per category. Anchors are
/// stored column-wise (D x C).
template <typename Scalar>
class BasicTextualSemanticsBank {
 public:
  BasicTextualSemanticsBank(Matrix<Scalar> anchors, std::vector<std::string> category_names,
                            std::string source_tag = {})
      : anchors_(std::move(anchors)),
        names_(std::move(category_names)),
        source_tag_(std::move(source_tag)) {
    if (anchors_.cols() < 2) {
      throw InputError("TextualSemanticsBank: need at least 2 categories, got " +
                       std::to_string(anchors_.cols()));
    }
    if (anchors_.rows() < 1) throw ShapeError("TextualSemanticsBank: zero-dimensional anchors");
    if (static_cast<Index>(names_.size()) != anchors_.cols()) {
      throw InputError("TextualSemanticsBank: " + std::to_string(names_.size()) +
                       " names for " + std::to_string(anchors_.cols()) + " anchors");
    }
    std::unordered_set<std::string> seen;
    for (const auto& n : names_) {
      if (n.empty()) throw InputError("TextualSemanticsBank: empty category name");
      if (!seen.insert(n).second) {
        throw InputError("TextualSemanticsBank: duplicate category name '" + n + "'");
      }
    }
    for (Index c = 0; c < anchors_.cols(); ++c) {
      if (std::abs(anchors_.col(c).norm() - Scalar(1)) > Scalar(1e-9)) {
        throw InputError("TextualSemanticsBank: anchor " + std::to_string(c) + " ('" +
                         names_[c] + "') is not unit-norm");
      }
    }
  }

  const Matrix<Scalar>& anchors() const noexcept { return anchors_; }
  const std::vector<std::string>& category_names() const noexcept { return names_; }
  const std::string& source_tag() const noexcept { return source_tag_; }
  Index dim() const noexcept { return anchors_.rows(); }
  Index num_categories() const noexcept { return anchors_.cols(); }

  Index index_of(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw LookupError("unknown category '" + name + "'");
    return static_cast<Index>(it - names_.begin());
  }

 private:
  Matrix<Scalar> anchors_;
  std::vector<std::string> names_;
  std::string source_tag_;
};

using TextualSemanticsBank = BasicTextualSemanticsBank<double>;

/// Momentum-updated visual anchors (D x C). A column is all-zeros exactly
/// when its category has never been observed.
template <typename Scalar>
class BasicVisualSemanticsBank {
 public:
  BasicVisualSemanticsBank(Index dim, Index num_categories, Scalar momentum)
      : anchors_(Matrix<Scalar>::Zero(dim, num_categories)),
        initialized_(num_categories, false),
        momentum_(momentum) {
    check_momentum();
  }

  BasicVisualSemanticsBank(Matrix<Scalar> anchors, std::vector<bool> initialized, Scalar momentum)
      : anchors_(std::move(anchors)), initialized_(std::move(initialized)), momentum_(momentum) {
    check_momentum();
    if (static_cast<Index>(initialized_.size()) != anchors_.cols()) {
      throw ShapeError("VisualSemanticsBank: flag count does not match anchor count");
    }
    for (Index c = 0; c < anchors_.cols(); ++c) {
      const bool zero = anchors_.col(c).isZero(0);
      if (zero == initialized_[c]) {
        throw InputError("VisualSemanticsBank: anchor " + std::to_string(c) +
                         (zero ? " is zero but flagged initialized"
                               : " is nonzero but flagged uninitialized"));
      }
    }
  }

  const Matrix<Scalar>& anchors() const noexcept { return anchors_; }
  const std::vector<bool>& initialized() const noexcept { return initialized_; }
  Scalar momentum() const noexcept { return momentum_; }
  Index dim() const noexcept { return anchors_.rows(); }
  Index num_categories() const noexcept { return anchors_.cols(); }

  Index initialized_count() const {
    return static_cast<Index>(std::count(initialized_.begin(), initialized_.end(), true));
  }

  /// Folds one centroid into anchor `category`. Returns false when the
  /// result would be degenerate (zero norm), in which case nothing changes.
  template <typename Derived>
  bool fold(Index category, const Eigen::MatrixBase<Derived>& centroid) {
    Vector<Scalar> next;
    if (!initialized_[category]) {
      next = centroid.transpose();
    } else {
      next = momentum_ * anchors_.col(category) + (Scalar(1) - momentum_) * centroid.transpose();
    }
    const Scalar n = next.norm();
    if (n < Scalar(kZeroNormThreshold)) return false;
    anchors_.col(category) = next / n;
    initialized_[category] = true;
    return true;
  }

 private:
  void check_momentum() const {
    if (!(momentum_ >= Scalar(0) && momentum_ <= Scalar(1))) {
      throw ParameterError("VisualSemanticsBank: momentum must lie in [0, 1]");
    }
  }

  Matrix<Scalar> anchors_;
  std::vector<bool> initialized_;
  Scalar momentum_;
};

using VisualSemanticsBank = BasicVisualSemanticsBank<double>;

template <typename Scalar>
struct LgkaBatchResult {
  std::vector<Index> assignments;
  Matrix<Scalar> centroids;  // one row per present category
  std::vector<Index> present_categories;
};

/// Most similar anchor column for each sample row. Zero rows are rejected.
template <typename DerivedZ, typename DerivedA>
std::vector<Index> classify_by_anchors(const Eigen::MatrixBase<DerivedZ>& z,
                                       const Eigen::MatrixBase<DerivedA>& anchors) {
  if (z.cols() != anchors.rows()) {
    throw ShapeError("classify: embedding dim " + std::to_string(z.cols()) +
                     " does not match anchor dim " + std::to_string(anchors.rows()));
  }
  for (Index i = 0; i < z.rows(); ++i) {
    if (z.row(i).norm() < kZeroNormThreshold) {
      throw InputError("classify: sample row " + std::to_string(i) + " has zero norm");
    }
  }
  return argmax_rows(matmul(z, anchors));
}

template <typename Derived>
std::vector<Index> classify_by_tsb(const Eigen::MatrixBase<Derived>& z,
                                   const BasicTextualSemanticsBank<typename Derived::Scalar>& tsb) {
  return classify_by_anchors(z, tsb.anchors());
}

/// Per-category means of the rows of z. Categories without samples are omitted.
template <typename Derived>
LgkaBatchResult<typename Derived::Scalar> batch_centroids(const Eigen::MatrixBase<Derived>& z,
                                                          const std::vector<Index>& assignments,
                                                          Index num_categories) {
  using Scalar = typename Derived::Scalar;
  if (static_cast<Index>(assignments.size()) != z.rows()) {
    throw ShapeError("batch_centroids: " + std::to_string(assignments.size()) +
                     " assignments for " + std::to_string(z.rows()) + " rows");
  }
  Matrix<Scalar> sums = Matrix<Scalar>::Zero(num_categories, z.cols());
  std::vector<Index> counts(num_categories, 0);
  for (Index i = 0; i < z.rows(); ++i) {
    const Index a = assignments[i];
    if (a < 0 || a >= num_categories) {
      throw InputError("batch_centroids: assignment " + std::to_string(a) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(num_categories) +
                       ")");
    }
    sums.row(a) += z.row(i);
    ++counts[a];
  }
  LgkaBatchResult<Scalar> out;
  out.assignments = assignments;
  for (Index c = 0; c < num_categories; ++c) {
    if (counts[c] > 0) out.present_categories.push_back(c);
  }
  out.centroids.resize(static_cast<Index>(out.present_categories.size()), z.cols());
  for (Index k = 0; k < static_cast<Index>(out.present_categories.size()); ++k) {
    const Index c = out.present_categories[k];
    out.centroids.row(k) = sums.row(c) / Scalar(counts[c]);
  }
  return out;
}

/// In-place momentum update: replace on first sight, EMA afterwards, then renormalize.
template <typename Scalar>
void apply_momentum_update(BasicVisualSemanticsBank<Scalar>& vsb,
                           const LgkaBatchResult<Scalar>& batch) {
  if (batch.centroids.rows() > 0 && batch.centroids.cols() != vsb.dim()) {
    throw ShapeError("momentum_update: centroid dim " + std::to_string(batch.centroids.cols()) +
                     " vs bank dim " + std::to_string(vsb.dim()));
  }
  for (Index k = 0; k < static_cast<Index>(batch.present_categories.size()); ++k) {
    const Index c = batch.present_categories[k];
    if (c < 0 || c >= vsb.num_categories()) {
      throw InputError("momentum_update: category " + std::to_string(c) + " out of range");
    }
    vsb.fold(c, batch.centroids.row(k));
  }
}

template <typename Scalar>
BasicVisualSemanticsBank<Scalar> momentum_update(BasicVisualSemanticsBank<Scalar> vsb,
                                                 const LgkaBatchResult<Scalar>& batch) {
  apply_momentum_update(vsb, batch);
  return vsb;
}

/// V' for one sample: the bank columns followed by that sample's teacher feature.
template <typename Scalar, typename Derived>
Matrix<Scalar> append_teacher_anchor(const BasicVisualSemanticsBank<Scalar>& vsb,
                                     const Eigen::MatrixBase<Derived>& teacher_row) {
  if (teacher_row.size() != vsb.dim()) {
    throw ShapeError("append_teacher_anchor: teacher dim " + std::to_string(teacher_row.size()) +
                     " vs bank dim " + std::to_string(vsb.dim()));
  }
  Matrix<Scalar> out(vsb.dim(), vsb.num_categories() + 1);
  out.leftCols(vsb.num_categories()) = vsb.anchors();
  for (Index d = 0; d < vsb.dim(); ++d) out(d, vsb.num_categories()) = teacher_row(d);
  return out;
}

/// Restricts a bank to the named categories, in the requested order.
template <typename Scalar>
BasicTextualSemanticsBank<Scalar> subset_tsb(const BasicTextualSemanticsBank<Scalar>& tsb,
                                             const std::vector<std::string>& names) {
  std::unordered_map<std::string, Index> lookup;
  for (Index c = 0; c < tsb.num_categories(); ++c) lookup.emplace(tsb.category_names()[c], c);
  std::string missing;
  for (const auto& n : names) {
    if (!lookup.count(n)) missing += (missing.empty() ? "" : ", ") + n;
  }
  if (!missing.empty()) throw LookupError("subset_tsb: unknown categories: " + missing);
  Matrix<Scalar> anchors(tsb.dim(), static_cast<Index>(names.size()));
  for (Index k = 0; k < static_cast<Index>(names.size()); ++k) {
    anchors.col(k) = tsb.anchors().col(lookup.at(names[k]));
  }
  return BasicTextualSemanticsBank<Scalar>(std::move(anchors), names,
                                           tsb.source_tag() + "[subset]");
}

/// Shared-read / exclusive-write holder for a bank that is mutated by the
/// training sequence while other threads inspect it.
template <typename T>
class Guarded {
 public:
  explicit Guarded(T value) : value_(std::move(value)) {}

  template <typename F>
  decltype(auto) read(F&& f) const {
    std::shared_lock lock(mutex_);
    return std::invoke(std::forward<F>(f), static_cast<const T&>(value_));
  }

  template <typename F>
  decltype(auto) write(F&& f) {
    std::unique_lock lock(mutex_);
    return std::invoke(std::forward<F>(f), value_);
  }

  T snapshot() const {
    std::shared_lock lock(mutex_);
    return value_;
  }

 private:
  mutable std::shared_mutex mutex_;
  T value_;
};

}  // namespace lgd
