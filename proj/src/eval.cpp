// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lgd/eval.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace lgd {

ZeroShotResult zeroshot_eval(const Matrix<double>& embeddings, const std::vector<Index>& labels,
                             const Matrix<double>& anchors) {
  if (static_cast<Index>(labels.size()) != embeddings.rows()) {
    throw ShapeError("zeroshot_eval: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(embeddings.rows()) + " samples");
  }
  if (embeddings.rows() == 0) throw EvalError("zeroshot_eval: no samples");
  if (embeddings.cols() != anchors.rows()) {
    throw ShapeError("zeroshot_eval: embedding dim " + std::to_string(embeddings.cols()) +
                     " vs anchor dim " + std::to_string(anchors.rows()));
  }
  const Index c = anchors.cols();
  ZeroShotResult r;
  r.predictions = argmax_rows(matmul(embeddings, anchors));
  std::vector<Index> hits(c, 0), counts(c, 0);
  Index correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Index y = labels[i];
    if (y < 0 || y >= c) throw InputError("zeroshot_eval: label " + std::to_string(y) + " out of range");
    ++counts[y];
    if (r.predictions[i] == y) {
      ++hits[y];
      ++correct;
    }
  }
  r.accuracy = double(correct) / double(labels.size());
  r.per_class_accuracy.resize(c);
  for (Index k = 0; k < c; ++k) {
    r.per_class_accuracy[k] =
        counts[k] ? double(hits[k]) / double(counts[k]) : std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

ZeroShotResult zeroshot_eval(const StudentNet& student, const Batch& data,
                             const Matrix<double>& anchors) {
  return zeroshot_eval(student.forward(data.inputs).output, data.labels, anchors);
}

ZeroShotResult zeroshot_eval(const StudentNet& student, const Batch& data,
                             const TextualSemanticsBank& tsb) {
  return zeroshot_eval(student, data, tsb.anchors());
}

ZeroShotResult zeroshot_eval_teacher(const Batch& data, const TextualSemanticsBank& tsb) {
  return zeroshot_eval(data.teacher_embeddings, data.labels, tsb.anchors());
}

namespace {

struct ProbeLoss {
  double value;
  Matrix<double> grad_w;
  Matrix<double> grad_b;
};

ProbeLoss probe_loss(const Matrix<double>& x, const std::vector<Index>& y, const Matrix<double>& w,
                     const Matrix<double>& b, double l2) {
  Matrix<double> logits = matmul(x, w);
  logits.rowwise() += b.row(0);
  const auto p = softmax_rows(logits, 1.0);
  const double n = double(x.rows());
  double loss = 0;
  Matrix<double> g = p.probs();
  for (Index i = 0; i < x.rows(); ++i) {
    loss -= std::log(std::max(p(i, y[i]), 1e-300));
    g(i, y[i]) -= 1.0;
  }
  g /= n;
  loss = loss / n + 0.5 * l2 * w.squaredNorm();
  Matrix<double> gw = matmul(x.transpose(), g) + l2 * w;
  Matrix<double> gb = g.colwise().sum();
  return {loss, std::move(gw), std::move(gb)};
}

}  // namespace

ProbeResult linear_probe(const Matrix<double>& train_x, const std::vector<Index>& train_y,
                         const Matrix<double>& test_x, const std::vector<Index>& test_y,
                         Index num_classes, const ProbeConfig& cfg) {
  if (static_cast<Index>(train_y.size()) != train_x.rows() ||
      static_cast<Index>(test_y.size()) != test_x.rows()) {
    throw ShapeError("linear_probe: label count does not match sample count");
  }
  if (train_x.cols() != test_x.cols()) throw ShapeError("linear_probe: train/test dims differ");
  if (!(cfg.label_fraction > 0 && cfg.label_fraction <= 1)) {
    throw ParameterError("linear_probe: label_fraction must lie in (0, 1]");
  }
  for (Index yv : train_y) {
    if (yv < 0 || yv >= num_classes) throw InputError("linear_probe: label out of range");
  }

  // Seeded subsample for the semi-supervised protocols.
  std::vector<Index> order(train_y.size());
  std::iota(order.begin(), order.end(), Index(0));
  if (cfg.label_fraction < 1) {
    CounterRng rng(cfg.seed, "probe/subsample");
    for (Index i = static_cast<Index>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[rng.below(i + 1)]);
    }
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(cfg.label_fraction * double(order.size()))));
    order.resize(keep);
  }
  Matrix<double> x(static_cast<Index>(order.size()), train_x.cols());
  std::vector<Index> y(order.size());
  std::set<Index> classes;
  for (std::size_t k = 0; k < order.size(); ++k) {
    x.row(k) = train_x.row(order[k]);
    y[k] = train_y[order[k]];
    classes.insert(y[k]);
  }
  if (classes.size() < 2) throw EvalError("linear_probe: training split contains a single class");

  Matrix<double> w = Matrix<double>::Zero(x.cols(), num_classes);
  Matrix<double> b = Matrix<double>::Zero(1, num_classes);
  ProbeResult res;
  ProbeLoss cur = probe_loss(x, y, w, b, cfg.l2);
  double step = 1.0;
  for (res.iterations = 0; res.iterations < cfg.max_iterations; ++res.iterations) {
    const double gnorm2 = cur.grad_w.squaredNorm() + cur.grad_b.squaredNorm();
    if (gnorm2 == 0) break;
    // Armijo backtracking from a step that grows again after each success.
    step = std::min(step * 2.0, 64.0);
    ProbeLoss next{};
    Matrix<double> w_next, b_next;
    for (;;) {
      w_next = w - step * cur.grad_w;
      b_next = b - step * cur.grad_b;
      next = probe_loss(x, y, w_next, b_next, cfg.l2);
      if (next.value <= cur.value - 0.5 * step * gnorm2 || step < 1e-12) break;
      step *= 0.5;
    }
    const double change = cur.value - next.value;
    w = std::move(w_next);
    b = std::move(b_next);
    cur = std::move(next);
    if (std::abs(change) < cfg.tolerance) {
      ++res.iterations;
      break;
    }
  }
  res.final_loss = cur.value;
  if (test_x.rows() == 0) throw EvalError("linear_probe: empty test split");
  Matrix<double> logits = matmul(test_x, w);
  logits.rowwise() += b.row(0);
  const auto pred = argmax_rows(logits);
  Index correct = 0;
  for (std::size_t i = 0; i < test_y.size(); ++i) correct += pred[i] == test_y[i];
  res.accuracy = double(correct) / double(test_y.size());
  return res;
}

AlignmentDiagnostics alignment_diagnostics(const Matrix<double>& z_t, const Matrix<double>& z_s,
                                           const Matrix<double>& text_anchors,
                                           const VisualSemanticsBank& vsb, const LossConfig& cfg) {
  require_same_shape(z_t, z_s, "alignment_diagnostics");
  if (text_anchors.rows() != z_t.cols() || vsb.dim() != z_t.cols()) {
    throw ShapeError("alignment_diagnostics: embedding dim " + std::to_string(z_t.cols()) +
                     " vs text dim " + std::to_string(text_anchors.rows()) + " / visual dim " +
                     std::to_string(vsb.dim()));
  }
  AlignmentDiagnostics d;
  const auto t_text = softmax_rows(matmul(z_t, text_anchors), cfg.tau_teacher);
  const auto s_text = softmax_rows(matmul(z_s, text_anchors), cfg.tau_student);
  d.mean_kl_textual = kl_rows(t_text, s_text, Reduction::kMean);
  const auto& v = vsb.anchors();
  const auto t_vis = softmax_rows(detail::appended_logits(z_t, v, z_t), cfg.tau_teacher);
  const auto s_vis = softmax_rows(detail::appended_logits(z_s, v, z_t), cfg.tau_student);
  d.mean_kl_visual = kl_rows(t_vis, s_vis, Reduction::kMean);
  d.anchor_separation = mean_pairwise_cosine(text_anchors);
  return d;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (double a : r.per_class_accuracy) {
    if (std::isnan(a)) {
      per_class.push_back(nullptr);
    } else {
      per_class.push_back(a);
    }
  }
  nlohmann::json j = {{"zeroshot_accuracy", r.zeroshot_accuracy},
                      {"linear_probe_accuracy", nullptr},
                      {"mean_kl_teacher_student_textual", r.mean_kl_teacher_student_textual},
                      {"mean_kl_teacher_student_visual", r.mean_kl_teacher_student_visual},
                      {"anchor_separation", r.anchor_separation},
                      {"per_class_accuracy", per_class},
                      {"teacher_zeroshot_accuracy", nullptr},
                      {"num_samples", r.num_samples}};
  if (r.linear_probe_accuracy) j["linear_probe_accuracy"] = *r.linear_probe_accuracy;
  if (r.teacher_zeroshot_accuracy) j["teacher_zeroshot_accuracy"] = *r.teacher_zeroshot_accuracy;
  return j;
}

Batch restrict_to_categories(const Batch& data, const std::vector<Index>& categories) {
  std::vector<Index> remap(1 + *std::max_element(data.labels.begin(), data.labels.end()), -1);
  for (std::size_t k = 0; k < categories.size(); ++k) {
    if (categories[k] >= 0 && categories[k] < static_cast<Index>(remap.size())) {
      remap[categories[k]] = static_cast<Index>(k);
    }
  }
  std::vector<Index> keep;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (remap[data.labels[i]] >= 0) keep.push_back(static_cast<Index>(i));
  }
  Batch out;
  const Index n = static_cast<Index>(keep.size());
  out.inputs.resize(n, data.inputs.cols());
  out.teacher_embeddings.resize(n, data.teacher_embeddings.cols());
  out.labels.resize(n);
  for (Index k = 0; k < n; ++k) {
    out.inputs.row(k) = data.inputs.row(keep[k]);
    out.teacher_embeddings.row(k) = data.teacher_embeddings.row(keep[k]);
    out.labels[k] = remap[data.labels[keep[k]]];
  }
  return out;
}

}  // namespace lgd
