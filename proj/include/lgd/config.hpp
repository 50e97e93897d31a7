// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

// Run configuration. A resolved config has every field materialized, so a
// run is reproducible from the echoed file alone.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgd/losses.hpp"
#include "lgd/optim.hpp"
#include "lgd/synthworld.hpp"

namespace lgd {

inline constexpr int kConfigSchemaVersion = 1;

struct DataConfig {
  /// "synthetic" draws from a generated world; "files" reads precomputed
  /// inputs and teacher embeddings.
  std::string source = "synthetic";
  WorldParams world;
  std::string train_inputs;
  std::string train_teacher;
  std::string eval_inputs;
  std::string eval_teacher;
  std::string eval_labels;
};

struct TsbConfig {
  /// "world": anchors of the synthetic world; "files": embeddings + names
  /// manifest; "foreign_world": anchors of an unrelated world (same dims)
  /// generated from foreign_seed.
  std::string source = "world";
  std::string embeddings;
  std::string names;
  std::uint64_t foreign_seed = 0;
  /// Restrict the bank to these categories before training (text control).
  std::vector<std::string> subset;
};

struct LossSection {
  LossMode mode = LossMode::kStandard;
  double tau_teacher = kDefaultTauTeacher;
  double tau_student = kDefaultTauStudent;
  double alpha = kDefaultAlphaStandard;
  Reduction reduction = Reduction::kMean;
  double vsb_momentum = 0.999;
  /// "replace": first centroid replaces the empty anchor; "random": ablation
  /// with randomly initialized anchors that are momentum-updated from the start.
  std::string vsb_init = "replace";
  Index queue_size = 1024;

  LossConfig loss_config() const;
};

struct StudentSection {
  std::vector<Index> hidden_dims = {64};
};

struct ProjectionSection {
  bool enabled = false;
  std::vector<Index> hidden_dims;
  bool bias = false;
  /// "random" or "world_adapter" (the world's text lift plus noise; synthetic data only).
  std::string init = "random";
  double init_noise_sigma = 0.0;
};

struct OptimSection {
  double base_lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double warmup_epochs = 5;
  Index epochs = 30;
  Index steps_per_epoch = 16;
  Index batch_size = 64;

  CosineWarmupSchedule schedule() const { return {base_lr, warmup_epochs, double(epochs)}; }
  SgdConfig sgd() const { return {momentum, weight_decay}; }
  long total_steps() const { return static_cast<long>(epochs * steps_per_epoch); }
};

struct AugmentSection {
  double jitter_sigma = 0.05;
};

struct EvalSection {
  Index every_epochs = 1;  // 0 disables in-training evaluation
  Index samples = 2048;
};

struct CheckpointSection {
  Index every_epochs = 10;  // 0: final checkpoint only
};

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  std::string preset = "desk";
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  DataConfig data;
  TsbConfig tsb;
  LossSection loss;
  StudentSection student;
  ProjectionSection projection;
  OptimSection optimizer;
  AugmentSection augmentation;
  EvalSection eval;
  CheckpointSection checkpoint;

  void validate() const;
};

/// Defaults for a named preset: desk, paper-90ep or paper-200ep.
RunConfig preset_config(const std::string& name);

nlohmann::json to_json(const RunConfig& c);
/// Overlays `j` onto `base`. Unknown fields and schema mismatches are rejected.
RunConfig overlay_config(const RunConfig& base, const nlohmann::json& j);
/// Preset named in the document (or `fallback`), then the document on top.
RunConfig resolve_config(const nlohmann::json& j, const std::string& fallback_preset = "desk");
RunConfig load_config(const std::string& path);

std::string to_string(Reduction r);
Reduction parse_reduction(const std::string& s);

}  // namespace lgd
