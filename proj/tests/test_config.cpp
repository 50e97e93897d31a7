// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "lgd/config.hpp"

namespace lgd {
namespace {

using nlohmann::json;

TEST(Config, DeskDefaultsMaterialized) {
  const auto c = preset_config("desk");
  EXPECT_EQ(c.optimizer.base_lr, 0.03);
  EXPECT_EQ(c.optimizer.momentum, 0.9);
  EXPECT_EQ(c.optimizer.weight_decay, 1e-4);
  EXPECT_EQ(c.optimizer.warmup_epochs, 5);
  EXPECT_EQ(c.optimizer.epochs, 30);
  EXPECT_EQ(c.optimizer.batch_size, 64);
  EXPECT_EQ(c.loss.tau_teacher, 0.04);
  EXPECT_EQ(c.loss.tau_student, 0.1);
  EXPECT_EQ(c.loss.alpha, 0.5);
  EXPECT_EQ(c.loss.vsb_momentum, 0.999);
  EXPECT_EQ(c.data.world.input_dim, 32);
  EXPECT_EQ(c.data.world.dim, 16);
  EXPECT_EQ(c.student.hidden_dims, std::vector<Index>{64});
  EXPECT_NO_THROW(c.validate());
  // Every section appears in the echoed document.
  const auto j = to_json(c);
  for (const char* k : {"schema_version", "preset", "seed", "output_dir", "data", "tsb", "loss",
                        "student", "projection", "optimizer", "augmentation", "eval", "checkpoint"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
}

TEST(Config, PaperPresets) {
  const auto c = preset_config("paper-200ep");
  EXPECT_EQ(c.optimizer.epochs, 200);
  EXPECT_EQ(c.optimizer.batch_size, 256);
  EXPECT_EQ(preset_config("paper-90ep").optimizer.epochs, 90);
  EXPECT_THROW(preset_config("laptop"), ConfigError);
}

TEST(Config, RoundTripThroughJson) {
  auto c = preset_config("desk");
  c.seed = 77;
  c.loss.mode = LossMode::kGeneralized;
  c.loss.alpha = 0.33;
  c.loss.reduction = Reduction::kSum;
  c.tsb.subset = {"cat_0", "cat_3"};
  c.projection.enabled = true;
  c.projection.hidden_dims = {8};
  c.data.world.text_dim = 32;
  const auto j = to_json(c);
  const auto back = resolve_config(j);
  EXPECT_EQ(to_json(back), j);
}

TEST(Config, PartialOverlayKeepsDefaults) {
  const auto c = resolve_config(json::parse(R"({"optimizer": {"epochs": 3}, "seed": 5})"));
  EXPECT_EQ(c.optimizer.epochs, 3);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.optimizer.base_lr, 0.03);
}

TEST(Config, UnknownFieldsRejectedWithPath) {
  for (const char* doc : {R"({"epochs": 3})", R"({"optimizer": {"epochz": 3}})",
                          R"({"data": {"world": {"colour": 1}}})"}) {
    try {
      resolve_config(json::parse(doc));
      FAIL() << doc;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("unknown field"), std::string::npos) << e.what();
    }
  }
  try {
    resolve_config(json::parse(R"({"optimizer": {"epochz": 3}})"));
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("optimizer"), std::string::npos);
  }
}

TEST(Config, SchemaAndTypeErrors) {
  EXPECT_THROW(resolve_config(json::parse(R"({"schema_version": 2})")), ConfigError);
  EXPECT_THROW(resolve_config(json::parse(R"({"optimizer": {"epochs": "ten"}})")), ConfigError);
  EXPECT_THROW(resolve_config(json::parse(R"({"loss": {"mode": "fancy"}})")), ConfigError);
  EXPECT_THROW(resolve_config(json::parse(R"([1, 2])")), ConfigError);
}

TEST(Config, ModeWithoutAlphaTakesModeDefault) {
  auto c = resolve_config(json::parse(R"({"loss": {"mode": "generalized"}})"));
  EXPECT_EQ(c.loss.alpha, 0.33);
  c = resolve_config(json::parse(R"({"loss": {"mode": "generalized", "alpha": 0.2}})"));
  EXPECT_EQ(c.loss.alpha, 0.2);
  c = resolve_config(json::parse(R"({"loss": {"alpha": 0.7}})"));
  EXPECT_EQ(c.loss.mode, LossMode::kStandard);
  EXPECT_EQ(c.loss.alpha, 0.7);
}

TEST(Config, WorldDimOverlayCarriesTextDim) {
  const auto c = resolve_config(json::parse(R"({"data": {"world": {"dim": 8, "input_dim": 16}}})"));
  EXPECT_EQ(c.data.world.text_dim, 8);
}

TEST(Config, ValidateRejectsInconsistentSettings) {
  auto c = preset_config("desk");
  c.optimizer.warmup_epochs = 40;
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset_config("desk");
  c.tsb.source = "files";
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset_config("desk");
  c.loss.vsb_init = "zeros";
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset_config("desk");
  c.data.source = "files";
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset_config("desk");
  c.loss.tau_teacher = 0;
  EXPECT_ANY_THROW(c.validate());
}

}  // namespace
}  // namespace lgd
