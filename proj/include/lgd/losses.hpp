// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

// Distillation losses with analytic gradients.
//
// Every loss is a cross entropy between a teacher score distribution
// (softmax of teacher-to-anchor similarities at tau_T) and a predicted
// distribution (softmax at tau_S for the student). Teacher embeddings are
// constants everywhere. Gradients are returned with respect to the student
// embeddings as given (the normalization Jacobian belongs to the student
// network's backward pass) and, where anchors come from a learnable
// projection, with respect to the projection parameters.

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lgd/banks.hpp"
#include "lgd/mlp.hpp"
#include "lgd/numerics.hpp"

namespace lgd {

enum class LossMode { kStandard, kGeneralized, kBaselineSeed };

inline const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::kStandard:
      return "standard";
    case LossMode::kGeneralized:
      return "generalized";
    case LossMode::kBaselineSeed:
      return "baseline_seed";
  }
  return "?";
}

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "standard") return LossMode::kStandard;
  if (s == "generalized") return LossMode::kGeneralized;
  if (s == "baseline_seed") return LossMode::kBaselineSeed;
  throw ConfigError("unknown loss mode '" + s + "' (expected standard|generalized|baseline_seed)");
}

/// Weight on the visual term in standard mode.
inline constexpr double kDefaultAlphaStandard = 0.5;
/// Shared per-term weight in generalized mode.
inline constexpr double kDefaultAlphaGeneralized = 0.33;
inline constexpr double kDefaultTauTeacher = 0.04;
inline constexpr double kDefaultTauStudent = 0.1;

template <typename Scalar>
struct BasicLossConfig {
  Scalar tau_teacher = Scalar(kDefaultTauTeacher);
  Scalar tau_student = Scalar(kDefaultTauStudent);
  Scalar alpha = Scalar(kDefaultAlphaStandard);
  LossMode mode = LossMode::kStandard;
  Reduction reduction = Reduction::kMean;

  static BasicLossConfig for_mode(LossMode m) {
    BasicLossConfig c;
    c.mode = m;
    c.alpha = Scalar(m == LossMode::kGeneralized ? kDefaultAlphaGeneralized
                                                 : kDefaultAlphaStandard);
    return c;
  }

  void validate() const {
    if (!(tau_teacher > 0) || !(tau_student > 0)) {
      throw ParameterError("loss config: temperatures must be positive");
    }
    if (!(alpha >= 0 && alpha <= 1)) throw ParameterError("loss config: alpha must lie in [0, 1]");
  }
};

using LossConfig = BasicLossConfig<double>;

template <typename Scalar>
struct ScoreSnapshots {
  std::optional<ScoreDistribution<Scalar>> teacher_visual;
  std::optional<ScoreDistribution<Scalar>> student_visual;
  std::optional<ScoreDistribution<Scalar>> teacher_textual;
  std::optional<ScoreDistribution<Scalar>> student_textual;
};

template <typename Scalar>
struct BasicLossOutput {
  Scalar total = 0;
  /// Named components, in reporting order, with the weights applied in `total`.
  std::vector<std::string> component_names;
  std::vector<Scalar> components;
  std::vector<Scalar> weights;
  Matrix<Scalar> grad_student;
  /// d total / d anchors (D x C) when anchors come from a projection head.
  std::optional<Matrix<Scalar>> grad_anchors;
  std::optional<GradientList<Scalar>> grad_projection;
  ScoreSnapshots<Scalar> scores;

  void add(std::string name, Scalar value, Scalar weight) {
    component_names.push_back(std::move(name));
    components.push_back(value);
    weights.push_back(weight);
  }

  Scalar component(const std::string& name) const {
    for (std::size_t k = 0; k < component_names.size(); ++k) {
      if (component_names[k] == name) return components[k];
    }
    throw LookupError("loss component '" + name + "' not present");
  }

  bool has_component(const std::string& name) const {
    for (const auto& n : component_names) {
      if (n == name) return true;
    }
    return false;
  }
};

using LossOutput = BasicLossOutput<double>;

/// FIFO memory of past teacher embeddings for the instance-similarity baseline.
template <typename Scalar>
class BasicInstanceQueue {
 public:
  BasicInstanceQueue(Index capacity, Index dim)
      : storage_(Matrix<Scalar>::Zero(capacity, dim)), capacity_(capacity) {
    if (capacity < 1 || dim < 1) throw ParameterError("InstanceQueue: capacity and dim must be >= 1");
  }

  Index capacity() const noexcept { return capacity_; }
  Index dim() const noexcept { return storage_.cols(); }
  Index size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }

  template <typename Derived>
  void enqueue(const Eigen::MatrixBase<Derived>& rows) {
    if (rows.cols() != dim()) {
      throw ShapeError("InstanceQueue::enqueue: row dim " + std::to_string(rows.cols()) +
                       " vs queue dim " + std::to_string(dim()));
    }
    for (Index i = 0; i < rows.rows(); ++i) {
      const Index slot = (head_ + size_) % capacity_;
      storage_.row(slot) = rows.row(i);
      if (size_ < capacity_) {
        ++size_;
      } else {
        head_ = (head_ + 1) % capacity_;
      }
    }
  }

  /// Entries oldest first (size x D).
  Matrix<Scalar> entries() const {
    Matrix<Scalar> out(size_, dim());
    for (Index k = 0; k < size_; ++k) out.row(k) = storage_.row((head_ + k) % capacity_);
    return out;
  }

  /// Entries as anchor columns (D x size), oldest first.
  Matrix<Scalar> anchors() const { return entries().transpose(); }

 private:
  Matrix<Scalar> storage_;
  Index capacity_;
  Index head_ = 0;
  Index size_ = 0;
};

using InstanceQueue = BasicInstanceQueue<double>;

namespace detail {

template <typename Scalar>
Scalar reduction_scale(Index rows, Reduction r) {
  return r == Reduction::kMean ? Scalar(1) / Scalar(rows) : Scalar(1);
}

/// [z A | rowdot(z, self)] : similarities to K anchors plus one per-row extra anchor.
template <typename Scalar>
Matrix<Scalar> appended_logits(const Matrix<Scalar>& z, const Matrix<Scalar>& anchors,
                               const Matrix<Scalar>& self) {
  const Index k = anchors.cols();
  Matrix<Scalar> out(z.rows(), k + 1);
  out.leftCols(k) = matmul(z, anchors);
  out.col(k) = z.cwiseProduct(self).rowwise().sum();
  return out;
}

template <typename Scalar>
struct CeTerm {
  Scalar loss = 0;
  ScoreDistribution<Scalar> pred;
  Matrix<Scalar> grad_pred_logits;  // w.r.t. raw (un-tempered) logits
};

/// CE(target, softmax(pred_logits / tau)) with the target held constant. The
/// derivative accounts for the eps clamp exactly:
///   d/du_k = q_k * sum_j w_j - w_k,  w_j = p_j q_j / (q_j + eps).
template <typename Scalar>
CeTerm<Scalar> ce_against(const ScoreDistribution<Scalar>& target, const Matrix<Scalar>& pred_logits,
                          Scalar tau, Reduction r) {
  CeTerm<Scalar> t{0, softmax_rows(pred_logits, tau), {}};
  t.loss = cross_entropy_rows(target, t.pred, r);
  const auto& p = target.probs().array();
  const auto& q = t.pred.probs().array();
  const Matrix<Scalar> w = (p * q / (q + Scalar(kLogEpsilon))).matrix();
  const Vector<Scalar> wsum = w.rowwise().sum();
  Matrix<Scalar> g = t.pred.probs();
  g.array().colwise() *= wsum.array();
  g -= w;
  t.grad_pred_logits = g * (reduction_scale<Scalar>(target.rows(), r) / tau);
  return t;
}

/// Derivative of CE(softmax(u / tau), pred) w.r.t. the raw target logits u:
///   d/du_k = -(1/tau) p_k (l_k - sum_j p_j l_j),  l = log(q + eps).
template <typename Scalar>
Matrix<Scalar> grad_target_logits(const ScoreDistribution<Scalar>& target,
                                  const ScoreDistribution<Scalar>& pred, Scalar tau, Reduction r) {
  const Matrix<Scalar> l = (pred.probs().array() + Scalar(kLogEpsilon)).log().matrix();
  const Vector<Scalar> mean_l = target.probs().cwiseProduct(l).rowwise().sum();
  Matrix<Scalar> centered = l;
  centered.colwise() -= mean_l;
  return -(target.probs().cwiseProduct(centered)) * (reduction_scale<Scalar>(target.rows(), r) / tau);
}

template <typename Scalar>
void check_pair(const Matrix<Scalar>& z_t, const Matrix<Scalar>& z_s, const char* what) {
  require_same_shape(z_t, z_s, what);
  if (z_t.rows() < 1 || z_t.cols() < 1) throw ShapeError(std::string(what) + ": empty batch");
}

/// Shared core of the visual-bank and instance-queue alignment losses.
template <typename Scalar>
BasicLossOutput<Scalar> self_appended_alignment(const Matrix<Scalar>& z_t, const Matrix<Scalar>& z_s,
                                                const Matrix<Scalar>& anchors,
                                                const BasicLossConfig<Scalar>& cfg,
                                                const char* name) {
  if (anchors.rows() != z_t.cols()) {
    throw ShapeError(std::string(name) + ": embedding dim " + std::to_string(z_t.cols()) +
                     " vs anchor dim " + std::to_string(anchors.rows()));
  }
  const Index k = anchors.cols();
  auto target = softmax_rows(appended_logits(z_t, anchors, z_t), cfg.tau_teacher);
  auto term = ce_against(target, appended_logits(z_s, anchors, z_t), cfg.tau_student, cfg.reduction);
  BasicLossOutput<Scalar> out;
  out.total = term.loss;
  out.add(name, term.loss, Scalar(1));
  out.grad_student = matmul(term.grad_pred_logits.leftCols(k), anchors.transpose());
  out.grad_student += (z_t.array().colwise() * term.grad_pred_logits.col(k).array()).matrix();
  out.scores.teacher_visual = std::move(target);
  out.scores.student_visual = std::move(term.pred);
  return out;
}

}  // namespace detail

/// CE between teacher and student distributions over the visual bank with
/// each sample's own teacher feature appended as an extra anchor.
template <typename Scalar>
BasicLossOutput<Scalar> visual_alignment_loss(const Matrix<Scalar>& z_t, const Matrix<Scalar>& z_s,
                                              const BasicVisualSemanticsBank<Scalar>& vsb,
                                              const BasicLossConfig<Scalar>& cfg) {
  cfg.validate();
  detail::check_pair(z_t, z_s, "visual_alignment_loss");
  if (vsb.initialized_count() == 0) {
    throw StateError("visual_alignment_loss: visual bank has no initialized anchors");
  }
  return detail::self_appended_alignment(z_t, z_s, vsb.anchors(), cfg, "visual");
}

/// Instance-similarity baseline: same construction as the visual loss with
/// queued teacher embeddings standing in for the bank.
template <typename Scalar>
BasicLossOutput<Scalar> seed_baseline_loss(const Matrix<Scalar>& z_t, const Matrix<Scalar>& z_s,
                                           const BasicInstanceQueue<Scalar>& queue,
                                           const BasicLossConfig<Scalar>& cfg) {
  cfg.validate();
  detail::check_pair(z_t, z_s, "seed_baseline_loss");
  if (queue.empty()) throw StateError("seed_baseline_loss: instance queue is empty");
  return detail::self_appended_alignment(z_t, z_s, queue.anchors(), cfg, "seed");
}

/// CE between teacher and student distributions over the text anchors.
template <typename Scalar>
BasicLossOutput<Scalar> textual_alignment_loss(const Matrix<Scalar>& z_t, const Matrix<Scalar>& z_s,
                                               const BasicTextualSemanticsBank<Scalar>& tsb,
                                               const BasicLossConfig<Scalar>& cfg) {
  cfg.validate();
  detail::check_pair(z_t, z_s, "textual_alignment_loss");
  if (tsb.dim() != z_t.cols()) {
    throw ShapeError("textual_alignment_loss: embedding dim " + std::to_string(z_t.cols()) +
                     " vs text anchor dim " + std::to_string(tsb.dim()) +
                     " (configure a projection head)");
  }
  const auto& l = tsb.anchors();
  auto target = softmax_rows(matmul(z_t, l), cfg.tau_teacher);
  auto term = detail::ce_against(target, matmul(z_s, l), cfg.tau_student, cfg.reduction);
  BasicLossOutput<Scalar> out;
  out.total = term.loss;
  out.add("textual", term.loss, Scalar(1));
  out.grad_student = matmul(term.grad_pred_logits, l.transpose());
  out.scores.teacher_textual = std::move(target);
  out.scores.student_textual = std::move(term.pred);
  return out;
}

/// Textual alignment over learnable (projected) anchors. Both score
/// distributions depend on the anchors, so grad_anchors collects the
/// teacher-side and student-side contributions.
template <typename Scalar>
BasicLossOutput<Scalar> textual_alignment_loss_projected(const Matrix<Scalar>& z_t,
                                                         const Matrix<Scalar>& z_s,
                                                         const Matrix<Scalar>& anchors,
                                                         const BasicLossConfig<Scalar>& cfg) {
  cfg.validate();
  detail::check_pair(z_t, z_s, "textual_alignment_loss");
  if (anchors.rows() != z_t.cols()) {
    throw ShapeError("textual_alignment_loss: embedding dim " + std::to_string(z_t.cols()) +
                     " vs projected anchor dim " + std::to_string(anchors.rows()));
  }
  auto target = softmax_rows(matmul(z_t, anchors), cfg.tau_teacher);
  auto term = detail::ce_against(target, matmul(z_s, anchors), cfg.tau_student, cfg.reduction);
  const Matrix<Scalar> g_t =
      detail::grad_target_logits(target, term.pred, cfg.tau_teacher, cfg.reduction);
  BasicLossOutput<Scalar> out;
  out.total = term.loss;
  out.add("textual", term.loss, Scalar(1));
  out.grad_student = matmul(term.grad_pred_logits, anchors.transpose());
  out.grad_anchors = matmul(z_t.transpose(), g_t) + matmul(z_s.transpose(), term.grad_pred_logits);
  out.scores.teacher_textual = std::move(target);
  out.scores.student_textual = std::move(term.pred);
  return out;
}

/// alpha * visual + (1 - alpha) * textual. With a projection head the
/// textual term runs over projected anchors and trains the head.
template <typename Scalar>
BasicLossOutput<Scalar> lgd_loss(const Matrix<Scalar>& z_t, const Matrix<Scalar>& z_s,
                                 const BasicTextualSemanticsBank<Scalar>& tsb,
                                 const BasicVisualSemanticsBank<Scalar>& vsb,
                                 const BasicLossConfig<Scalar>& cfg,
                                 const Mlp<Scalar>* projection = nullptr) {
  cfg.validate();
  if (cfg.mode != LossMode::kStandard) throw ConfigError("lgd_loss: requires standard mode");
  const Scalar a = cfg.alpha;
  const Scalar b = Scalar(1) - a;

  BasicLossOutput<Scalar> out;
  std::optional<ProjectedAnchors<Scalar>> projected;
  BasicLossOutput<Scalar> tex;
  if (projection != nullptr) {
    projected = project_anchors(*projection, tsb.anchors());
    tex = textual_alignment_loss_projected(z_t, z_s, projected->anchors, cfg);
  } else {
    tex = textual_alignment_loss(z_t, z_s, tsb, cfg);
  }

  // The visual term may be skipped only when it carries no weight.
  if (a > Scalar(0) || vsb.initialized_count() > 0) {
    auto vis = visual_alignment_loss(z_t, z_s, vsb, cfg);
    out.add("visual", vis.total, a);
    out.grad_student = a * vis.grad_student;
    out.scores.teacher_visual = std::move(vis.scores.teacher_visual);
    out.scores.student_visual = std::move(vis.scores.student_visual);
  } else {
    out.add("visual", Scalar(0), a);
    out.grad_student = Matrix<Scalar>::Zero(z_s.rows(), z_s.cols());
  }
  out.add("textual", tex.total, b);
  out.total = a * out.components[0] + b * tex.total;
  out.grad_student += b * tex.grad_student;
  out.scores.teacher_textual = std::move(tex.scores.teacher_textual);
  out.scores.student_textual = std::move(tex.scores.student_textual);
  if (projected) {
    out.grad_anchors = b * *tex.grad_anchors;
    out.grad_projection = backward_projection(*projection, *projected, *out.grad_anchors);
  }
  return out;
}

/// Three cross entropies sharing the teacher-visual target s_TV:
///   alpha * [CE(s_TV, s_SV) + CE(s_TV, s_TL') + CE(s_TV, s_SL')]
/// where the textual distributions run over [P(L) | z_T], i.e. the
/// (projected) text anchors with the teacher feature appended, so that all
/// three distributions share the C+1 support of s_TV. Gradient reaches the
/// projection through the second and third terms and the student through
/// the first and third.
template <typename Scalar>
BasicLossOutput<Scalar> generalized_lgd_loss(const Matrix<Scalar>& z_t, const Matrix<Scalar>& z_s,
                                             const BasicTextualSemanticsBank<Scalar>& tsb,
                                             const BasicVisualSemanticsBank<Scalar>& vsb,
                                             const Mlp<Scalar>* projection,
                                             const BasicLossConfig<Scalar>& cfg) {
  cfg.validate();
  if (cfg.mode != LossMode::kGeneralized) {
    throw ConfigError("generalized_lgd_loss: requires generalized mode");
  }
  detail::check_pair(z_t, z_s, "generalized_lgd_loss");
  if (projection == nullptr && tsb.dim() != z_t.cols()) {
    throw ConfigError("generalized_lgd_loss: text dim " + std::to_string(tsb.dim()) +
                      " differs from embedding dim " + std::to_string(z_t.cols()) +
                      " and no projection head is configured");
  }
  if (vsb.initialized_count() == 0) {
    throw StateError("generalized_lgd_loss: visual bank has no initialized anchors");
  }
  if (vsb.dim() != z_t.cols()) {
    throw ShapeError("generalized_lgd_loss: embedding dim " + std::to_string(z_t.cols()) +
                     " vs visual bank dim " + std::to_string(vsb.dim()));
  }
  std::optional<ProjectedAnchors<Scalar>> projected;
  if (projection != nullptr) projected = project_anchors(*projection, tsb.anchors());
  const Matrix<Scalar>& text = projected ? projected->anchors : tsb.anchors();
  if (text.rows() != z_t.cols()) {
    throw ShapeError("generalized_lgd_loss: projected anchor dim " + std::to_string(text.rows()) +
                     " vs embedding dim " + std::to_string(z_t.cols()));
  }
  const Index nv = vsb.num_categories();
  const Index nt = text.cols();
  const Scalar a = cfg.alpha;

  auto target = softmax_rows(detail::appended_logits(z_t, vsb.anchors(), z_t), cfg.tau_teacher);
  if (nt != nv) {
    throw ShapeError("generalized_lgd_loss: " + std::to_string(nt) + " text anchors vs " +
                     std::to_string(nv) + " visual anchors");
  }
  auto sv = detail::ce_against(target, detail::appended_logits(z_s, vsb.anchors(), z_t),
                               cfg.tau_student, cfg.reduction);
  auto tl = detail::ce_against(target, detail::appended_logits(z_t, text, z_t), cfg.tau_teacher,
                               cfg.reduction);
  auto sl = detail::ce_against(target, detail::appended_logits(z_s, text, z_t), cfg.tau_student,
                               cfg.reduction);

  BasicLossOutput<Scalar> out;
  out.add("visual", sv.loss, a);
  out.add("teacher_textual", tl.loss, a);
  out.add("student_textual", sl.loss, a);
  out.total = a * sv.loss + a * tl.loss + a * sl.loss;

  Matrix<Scalar> g = matmul(sv.grad_pred_logits.leftCols(nv), vsb.anchors().transpose());
  g += (z_t.array().colwise() * sv.grad_pred_logits.col(nv).array()).matrix();
  g += matmul(sl.grad_pred_logits.leftCols(nt), text.transpose());
  g += (z_t.array().colwise() * sl.grad_pred_logits.col(nt).array()).matrix();
  out.grad_student = a * g;

  if (projected) {
    Matrix<Scalar> ga = matmul(z_t.transpose(), tl.grad_pred_logits.leftCols(nt));
    ga += matmul(z_s.transpose(), sl.grad_pred_logits.leftCols(nt));
    out.grad_anchors = a * ga;
    out.grad_projection = backward_projection(*projection, *projected, *out.grad_anchors);
  }
  out.scores.teacher_visual = std::move(target);
  out.scores.student_visual = std::move(sv.pred);
  out.scores.teacher_textual = std::move(tl.pred);
  out.scores.student_textual = std::move(sl.pred);
  return out;
}

}  // namespace lgd
