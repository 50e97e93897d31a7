// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

// Distillation training loop. Each step draws a batch, folds the teacher
// features into the visual bank (classify against the text anchors, average
// per category, momentum update), runs the student, evaluates the configured
// loss and takes one scheduled SGD step.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lgd/config.hpp"
#include "lgd/dataio.hpp"
#include "lgd/eval.hpp"
#include "lgd/losses.hpp"
#include "lgd/mlp.hpp"
#include "lgd/optim.hpp"
#include "lgd/synthworld.hpp"

namespace lgd {

/// Where batches come from: a synthetic world or precomputed matrices.
struct TrainingData {
  std::optional<SyntheticWorld> world;
  Matrix<double> train_inputs;   // files source only
  Matrix<double> train_teacher;  // files source only
  Batch eval;                    // held-out split with labels (may be empty)

  Index input_dim() const;
  Index dim() const;
  Batch next_batch(Index batch_size, CounterRng& rng) const;
};

/// Builds the data and text bank a config describes.
TrainingData make_training_data(const RunConfig& cfg);
TextualSemanticsBank make_tsb(const RunConfig& cfg, const TrainingData& data);

struct TrainState {
  StudentNet student;
  std::optional<ProjectionHead> projection;
  VisualSemanticsBank vsb{1, 1, 0.0};
  std::optional<InstanceQueue> queue;
  SgdMomentum<double> student_opt;
  std::optional<SgdMomentum<double>> projection_opt;
  long step = 0;
  CounterRng batch_rng{0, "train/batches"};
  CounterRng augment_rng{0, "train/augment"};
};

/// Fresh state: initialized networks, empty banks, counters at zero.
TrainState init_train_state(const RunConfig& cfg, const TrainingData& data,
                            const TextualSemanticsBank& tsb);

/// Anchors used for classification and zero-shot: the text anchors, or their
/// projection when a head is configured.
Matrix<double> effective_text_anchors(const TrainState& state, const TextualSemanticsBank& tsb);

struct StepResult {
  LossOutput loss;
  GradientList<double> student_grads;
  std::optional<GradientList<double>> projection_grads;
};

/// Bank update plus loss and gradients for one (already augmented) batch;
/// parameters are not touched.
StepResult compute_step(TrainState& state, const Matrix<double>& inputs,
                        const Matrix<double>& teacher, const TextualSemanticsBank& tsb,
                        const RunConfig& cfg);

/// One full training step (batch draw, augmentation, update). Returns the
/// metrics row for the step.
MetricsRow train_step(TrainState& state, const TrainingData& data, const TextualSemanticsBank& tsb,
                      const RunConfig& cfg);

struct TrainHooks {
  std::function<void(const MetricsRow&)> on_step;
  /// Called after the last step of each epoch (1-based epoch index).
  std::function<void(Index epoch, const TrainState&, const MetricsRow&)> on_epoch;
  /// Directory for the diagnostic snapshot written on numeric abort.
  std::optional<std::filesystem::path> diagnostics_dir;
};

struct TrainResult {
  TrainState state;
  std::vector<MetricsRow> metrics;
};

/// Runs from `state` until `cfg.optimizer.total_steps()` steps have been taken.
TrainResult train_distillation(const RunConfig& cfg, const TrainingData& data,
                               const TextualSemanticsBank& tsb, TrainState state,
                               const TrainHooks& hooks = {});
TrainResult train_distillation(const RunConfig& cfg, const TrainingData& data,
                               const TextualSemanticsBank& tsb, const TrainHooks& hooks = {});

/// Checkpoint directory: params as f64 embedding files plus manifest.json.
void save_checkpoint(const std::filesystem::path& dir, const TrainState& state,
                     const TextualSemanticsBank& tsb, const RunConfig& cfg);
TrainState load_checkpoint(const std::filesystem::path& dir, const RunConfig& cfg,
                           const TrainingData& data, const TextualSemanticsBank& tsb);

/// Zero-shot (and optionally linear-probe, on a half/half split of the
/// held-out data) plus alignment diagnostics for a trained state.
EvalReport evaluate_state(const TrainState& state, const TextualSemanticsBank& tsb,
                          const TrainingData& data, const RunConfig& cfg, bool with_probe);

/// Writes config.resolved.json, metrics, checkpoints and the final report
/// under cfg.output_dir.
TrainResult run_distill(const RunConfig& cfg,
                        const std::optional<std::filesystem::path>& resume_from = {});

}  // namespace lgd
