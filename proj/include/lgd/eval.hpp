// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgd/banks.hpp"
#include "lgd/losses.hpp"
#include "lgd/mlp.hpp"
#include "lgd/synthworld.hpp"

namespace lgd {

struct ZeroShotResult {
  double accuracy = 0;
  /// NaN for categories without evaluation samples.
  std::vector<double> per_class_accuracy;
  std::vector<Index> predictions;
};

/// Fraction of rows whose most similar anchor column is the label.
ZeroShotResult zeroshot_eval(const Matrix<double>& embeddings, const std::vector<Index>& labels,
                             const Matrix<double>& anchors);
ZeroShotResult zeroshot_eval(const StudentNet& student, const Batch& data,
                             const Matrix<double>& anchors);
ZeroShotResult zeroshot_eval(const StudentNet& student, const Batch& data,
                             const TextualSemanticsBank& tsb);
/// Uses the teacher embeddings stored with the data.
ZeroShotResult zeroshot_eval_teacher(const Batch& data, const TextualSemanticsBank& tsb);

struct ProbeConfig {
  double label_fraction = 1.0;
  double l2 = 1e-4;
  double tolerance = 1e-8;
  int max_iterations = 5000;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double accuracy = 0;
  int iterations = 0;
  double final_loss = 0;
};

/// Multinomial logistic regression on frozen embeddings, trained by
/// deterministic full-batch gradient descent with backtracking until the
/// loss changes by less than the tolerance.
ProbeResult linear_probe(const Matrix<double>& train_x, const std::vector<Index>& train_y,
                         const Matrix<double>& test_x, const std::vector<Index>& test_y,
                         Index num_classes, const ProbeConfig& cfg = {});

struct AlignmentDiagnostics {
  double mean_kl_textual = 0;
  double mean_kl_visual = 0;
  double anchor_separation = 0;  // mean pairwise cosine of the text anchors
};

/// Mean per-sample KL(teacher || student) over the text anchors and over
/// V' (visual bank with the teacher feature appended).
AlignmentDiagnostics alignment_diagnostics(const Matrix<double>& z_t, const Matrix<double>& z_s,
                                           const Matrix<double>& text_anchors,
                                           const VisualSemanticsBank& vsb, const LossConfig& cfg);

struct EvalReport {
  double zeroshot_accuracy = 0;
  std::optional<double> linear_probe_accuracy;
  double mean_kl_teacher_student_textual = 0;
  double mean_kl_teacher_student_visual = 0;
  double anchor_separation = 0;
  std::vector<double> per_class_accuracy;
  std::optional<double> teacher_zeroshot_accuracy;
  Index num_samples = 0;
};

nlohmann::json to_json(const EvalReport& r);

/// Keeps the samples whose label is in `categories`, relabelled to their
/// position in that list.
Batch restrict_to_categories(const Batch& data, const std::vector<Index>& categories);

}  // namespace lgd
