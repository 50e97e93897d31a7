// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lgd/synthworld.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <numbers>
#include <set>

#include "lgd/json_util.hpp"

namespace lgd {

namespace {

constexpr int kDirectionAttempts = 10000;
constexpr int kDirectionRestarts = 20;
constexpr int kMixingAttempts = 100;
constexpr double kAngleToleranceDeg = 1e-9;

Vector<double> random_unit(Index dim, CounterRng& rng) {
  for (;;) {
    Vector<double> v(dim);
    for (Index d = 0; d < dim; ++d) v(d) = rng.normal();
    const double n = v.norm();
    if (n > kZeroNormThreshold) return v / n;
  }
}

/// Columns of a random orthonormal (rows x cols) frame, rows >= cols.
Matrix<double> random_orthonormal(Index rows, Index cols, CounterRng& rng) {
  Eigen::MatrixXd g(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  return q;
}

std::optional<Matrix<double>> rejection_directions(const WorldParams& p, CounterRng& rng) {
  const double max_abs_cos = std::cos(p.min_angle_deg * std::numbers::pi / 180.0);
  for (int restart = 0; restart < kDirectionRestarts; ++restart) {
    Matrix<double> dirs(p.num_categories, p.dim);
    Index placed = 0;
    int attempts = 0;
    while (placed < p.num_categories && attempts < kDirectionAttempts) {
      ++attempts;
      const Vector<double> v = random_unit(p.dim, rng);
      bool ok = true;
      for (Index k = 0; k < placed && ok; ++k) {
        ok = std::abs(dirs.row(k).dot(v)) <= max_abs_cos;
      }
      if (ok) {
        dirs.row(placed++) = v.transpose();
        attempts = 0;
      }
    }
    if (placed == p.num_categories) return dirs;
  }
  return std::nullopt;
}

double condition_number(const Matrix<double>& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  const double smallest = s(s.size() - 1);
  return smallest > 0 ? s(0) / smallest : std::numeric_limits<double>::infinity();
}

}  // namespace

void WorldParams::validate() const {
  if (num_categories < 2) throw ConfigError("world: C must be >= 2");
  if (dim < 2) throw ConfigError("world: D must be >= 2");
  if (input_dim < dim) throw ConfigError("world: input_dim must be >= D");
  if (text_dim < dim) throw ConfigError("world: text_dim must be >= D");
  if (!(min_angle_deg >= 0 && min_angle_deg <= 90)) {
    throw ConfigError("world: min_angle_deg must lie in [0, 90]");
  }
  if (text_offset_sigma < 0 || sample_noise_sigma < 0 || input_noise_sigma < 0) {
    throw ConfigError("world: noise levels must be non-negative");
  }
  if (!(max_condition >= 1)) throw ConfigError("world: max_condition must be >= 1");
}

nlohmann::json to_json(const WorldParams& p) {
  return {{"num_categories", p.num_categories},
          {"dim", p.dim},
          {"input_dim", p.input_dim},
          {"text_dim", p.text_dim},
          {"min_angle_deg", p.min_angle_deg},
          {"text_offset_sigma", p.text_offset_sigma},
          {"sample_noise_sigma", p.sample_noise_sigma},
          {"input_noise_sigma", p.input_noise_sigma},
          {"max_condition", p.max_condition},
          {"seed", p.seed}};
}

WorldParams world_params_from_json(const nlohmann::json& j) {
  WorldParams p;
  json_util::ObjectReader r(j, "world");
  r.get("num_categories", p.num_categories);
  r.get("dim", p.dim);
  r.get("input_dim", p.input_dim);
  p.text_dim = p.dim;
  r.get("text_dim", p.text_dim);
  r.get("min_angle_deg", p.min_angle_deg);
  r.get("text_offset_sigma", p.text_offset_sigma);
  r.get("sample_noise_sigma", p.sample_noise_sigma);
  r.get("input_noise_sigma", p.input_noise_sigma);
  r.get("max_condition", p.max_condition);
  r.get("seed", p.seed);
  r.finish();
  return p;
}

double min_pairwise_angle_deg(const Matrix<double>& unit_rows) {
  double worst = 90.0;
  for (Index a = 0; a < unit_rows.rows(); ++a) {
    for (Index b = a + 1; b < unit_rows.rows(); ++b) {
      const double c = std::min(1.0, std::abs(unit_rows.row(a).dot(unit_rows.row(b))));
      worst = std::min(worst, std::acos(c) * 180.0 / std::numbers::pi);
    }
  }
  return worst;
}

SyntheticWorld gen_world(const WorldParams& params) {
  params.validate();
  SyntheticWorld w;
  w.params = params;

  CounterRng dir_rng(params.seed, "world/directions");
  auto dirs = rejection_directions(params, dir_rng);
  if (!dirs && params.num_categories <= params.dim) {
    // An orthonormal frame meets any floor up to 90 degrees.
    dirs = random_orthonormal(params.dim, params.num_categories, dir_rng).transpose();
  }
  if (!dirs || min_pairwise_angle_deg(*dirs) < params.min_angle_deg - kAngleToleranceDeg) {
    throw GenerationError("gen_world: cannot place " + std::to_string(params.num_categories) +
                          " directions in R^" + std::to_string(params.dim) +
                          " with pairwise angle >= " + std::to_string(params.min_angle_deg) +
                          " deg");
  }
  w.category_directions = std::move(*dirs);

  CounterRng mix_rng(params.seed, "world/mixing");
  const double sigma = 1.0 / std::sqrt(static_cast<double>(params.dim));
  bool found = false;
  for (int k = 0; k < kMixingAttempts && !found; ++k) {
    w.mixing_map = normal_matrix(params.input_dim, params.dim, sigma, mix_rng);
    found = condition_number(w.mixing_map) <= params.max_condition;
  }
  if (!found) {
    throw GenerationError("gen_world: no mixing map with condition <= " +
                          std::to_string(params.max_condition));
  }

  if (params.text_dim == params.dim) {
    w.text_lift = Matrix<double>::Identity(params.dim, params.dim);
  } else {
    CounterRng lift_rng(params.seed, "world/text_lift");
    w.text_lift = random_orthonormal(params.text_dim, params.dim, lift_rng);
  }
  return w;
}

Batch sample_batch(const SyntheticWorld& world, Index batch_size, CounterRng& rng) {
  const auto& p = world.params;
  Batch b;
  b.inputs.resize(batch_size, p.input_dim);
  b.teacher_embeddings.resize(batch_size, p.dim);
  b.labels.resize(batch_size);
  Vector<double> latent(p.dim);
  for (Index i = 0; i < batch_size; ++i) {
    const Index label = rng.below(p.num_categories);
    for (Index d = 0; d < p.dim; ++d) {
      latent(d) = world.category_directions(label, d) + p.sample_noise_sigma * rng.normal();
    }
    latent /= latent.norm();
    b.labels[i] = label;
    b.teacher_embeddings.row(i) = latent.transpose();
    b.inputs.row(i) = (world.mixing_map * latent).transpose();
    if (p.input_noise_sigma > 0) {
      for (Index d = 0; d < p.input_dim; ++d) b.inputs(i, d) += p.input_noise_sigma * rng.normal();
    }
  }
  return b;
}

std::vector<std::string> default_category_names(Index count) {
  std::vector<std::string> names;
  for (Index c = 0; c < count; ++c) names.push_back("cat_" + std::to_string(c));
  return names;
}

TextualSemanticsBank gen_text_anchors(const SyntheticWorld& world,
                                      const std::optional<std::vector<std::string>>& name_subset,
                                      const std::vector<std::string>& names) {
  const auto& p = world.params;
  std::vector<std::string> all = names.empty() ? default_category_names(p.num_categories) : names;
  if (static_cast<Index>(all.size()) != p.num_categories) {
    throw ConfigError("gen_text_anchors: " + std::to_string(all.size()) + " names for " +
                      std::to_string(p.num_categories) + " categories");
  }
  CounterRng rng(p.seed, "world/text");
  Matrix<double> anchors(p.text_dim, p.num_categories);
  Vector<double> v(p.dim);
  for (Index c = 0; c < p.num_categories; ++c) {
    for (Index d = 0; d < p.dim; ++d) {
      v(d) = world.category_directions(c, d) + p.text_offset_sigma * rng.normal();
    }
    Vector<double> lifted = world.text_lift * v;
    anchors.col(c) = lifted / lifted.norm();
  }
  TextualSemanticsBank full(std::move(anchors), std::move(all),
                            "synthetic:seed=" + std::to_string(p.seed));
  if (name_subset) return subset_tsb(full, *name_subset);
  return full;
}

}  // namespace lgd
