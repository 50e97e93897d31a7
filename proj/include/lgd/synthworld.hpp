// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

// Synthetic stand-in for a pre-trained teacher and text encoder. A world
// has C unit category directions in R^D; a sample's teacher embedding is a
// noisy direction, its raw input a fixed linear mix of that embedding, and
// text anchors are perturbed copies of the directions (optionally lifted
// into a different text dimension).

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgd/banks.hpp"
#include "lgd/rng.hpp"

namespace lgd {

struct WorldParams {
  Index num_categories = 16;
  Index dim = 16;
  Index input_dim = 32;
  /// Dimension of text anchors; equal to dim unless modelling a separately
  /// trained text encoder.
  Index text_dim = 16;
  double min_angle_deg = 45.0;
  double text_offset_sigma = 0.1;
  double sample_noise_sigma = 0.15;
  double input_noise_sigma = 0.05;
  double max_condition = 100.0;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const WorldParams& p);
WorldParams world_params_from_json(const nlohmann::json& j);

struct SyntheticWorld {
  WorldParams params;
  Matrix<double> category_directions;  // C x D, unit rows
  Matrix<double> mixing_map;           // input_dim x D
  /// text_dim x D with orthonormal columns; identity when text_dim == dim.
  Matrix<double> text_lift;
};

struct Batch {
  Matrix<double> inputs;              // B x input_dim
  Matrix<double> teacher_embeddings;  // B x D, unit rows
  std::vector<Index> labels;          // evaluation only
};

/// Smallest pairwise angle between the direction lines (degrees, via |cos|).
double min_pairwise_angle_deg(const Matrix<double>& unit_rows);

SyntheticWorld gen_world(const WorldParams& params);

/// Draws B samples from the given stream; advances its counter.
Batch sample_batch(const SyntheticWorld& world, Index batch_size, CounterRng& rng);

std::vector<std::string> default_category_names(Index count);

/// Text anchors, generated once per world from its own stream. When
/// `name_subset` is given, the bank holds only those categories.
TextualSemanticsBank gen_text_anchors(const SyntheticWorld& world,
                                      const std::optional<std::vector<std::string>>& name_subset = {},
                                      const std::vector<std::string>& names = {});

}  // namespace lgd
