// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lgd/config.hpp"

#include "lgd/dataio.hpp"
#include "lgd/json_util.hpp"

namespace lgd {

using json_util::ObjectReader;
using nlohmann::json;

std::string to_string(Reduction r) { return r == Reduction::kMean ? "mean" : "sum"; }

Reduction parse_reduction(const std::string& s) {
  if (s == "mean") return Reduction::kMean;
  if (s == "sum") return Reduction::kSum;
  throw ConfigError("unknown reduction '" + s + "' (expected mean|sum)");
}

LossConfig LossSection::loss_config() const {
  LossConfig c;
  c.tau_teacher = tau_teacher;
  c.tau_student = tau_student;
  c.alpha = alpha;
  c.mode = mode;
  c.reduction = reduction;
  return c;
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") return c;
  if (name == "paper-90ep" || name == "paper-200ep") {
    c.optimizer.batch_size = 256;
    c.optimizer.epochs = name == "paper-90ep" ? 90 : 200;
    c.optimizer.warmup_epochs = 5;
    c.optimizer.base_lr = 0.03;
    // 1.28M images at 256 per step.
    c.optimizer.steps_per_epoch = 5005;
    c.loss.queue_size = 65536;
    c.checkpoint.every_epochs = 10;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk|paper-90ep|paper-200ep)");
}

void RunConfig::validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw ConfigError("config: unsupported schema_version " + std::to_string(schema_version));
  }
  if (data.source == "synthetic") {
    data.world.validate();
  } else if (data.source == "files") {
    if (data.train_inputs.empty() || data.train_teacher.empty()) {
      throw ConfigError("config: data.source=files requires train_inputs and train_teacher");
    }
  } else {
    throw ConfigError("config: data.source must be synthetic|files");
  }
  if (tsb.source != "world" && tsb.source != "files" && tsb.source != "foreign_world") {
    throw ConfigError("config: tsb.source must be world|files|foreign_world");
  }
  if (tsb.source != "files" && data.source != "synthetic") {
    throw ConfigError("config: tsb.source=" + tsb.source + " requires synthetic data");
  }
  if (tsb.source == "files" && (tsb.embeddings.empty() || tsb.names.empty())) {
    throw ConfigError("config: tsb.source=files requires embeddings and names");
  }
  loss.loss_config().validate();
  if (!(loss.vsb_momentum >= 0 && loss.vsb_momentum <= 1)) {
    throw ConfigError("config: loss.vsb_momentum must lie in [0, 1]");
  }
  if (loss.vsb_init != "replace" && loss.vsb_init != "random") {
    throw ConfigError("config: loss.vsb_init must be replace|random");
  }
  if (loss.queue_size < 1) throw ConfigError("config: loss.queue_size must be >= 1");
  for (Index h : student.hidden_dims) {
    if (h < 1) throw ConfigError("config: student.hidden_dims entries must be >= 1");
  }
  if (projection.init != "random" && projection.init != "world_adapter") {
    throw ConfigError("config: projection.init must be random|world_adapter");
  }
  if (projection.init == "world_adapter" && data.source != "synthetic") {
    throw ConfigError("config: projection.init=world_adapter requires synthetic data");
  }
  if (optimizer.batch_size < 1 || optimizer.epochs < 1 || optimizer.steps_per_epoch < 1) {
    throw ConfigError("config: batch_size, epochs and steps_per_epoch must be >= 1");
  }
  try {
    optimizer.schedule().validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (augmentation.jitter_sigma < 0) throw ConfigError("config: jitter_sigma must be >= 0");
  if (eval.samples < 1) throw ConfigError("config: eval.samples must be >= 1");
}

json to_json(const RunConfig& c) {
  return {
      {"schema_version", c.schema_version},
      {"preset", c.preset},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"data",
       {{"source", c.data.source},
        {"world", to_json(c.data.world)},
        {"train_inputs", c.data.train_inputs},
        {"train_teacher", c.data.train_teacher},
        {"eval_inputs", c.data.eval_inputs},
        {"eval_teacher", c.data.eval_teacher},
        {"eval_labels", c.data.eval_labels}}},
      {"tsb",
       {{"source", c.tsb.source},
        {"embeddings", c.tsb.embeddings},
        {"names", c.tsb.names},
        {"foreign_seed", c.tsb.foreign_seed},
        {"subset", c.tsb.subset}}},
      {"loss",
       {{"mode", to_string(c.loss.mode)},
        {"tau_teacher", c.loss.tau_teacher},
        {"tau_student", c.loss.tau_student},
        {"alpha", c.loss.alpha},
        {"reduction", to_string(c.loss.reduction)},
        {"vsb_momentum", c.loss.vsb_momentum},
        {"vsb_init", c.loss.vsb_init},
        {"queue_size", c.loss.queue_size}}},
      {"student", {{"hidden_dims", c.student.hidden_dims}}},
      {"projection",
       {{"enabled", c.projection.enabled},
        {"hidden_dims", c.projection.hidden_dims},
        {"bias", c.projection.bias},
        {"init", c.projection.init},
        {"init_noise_sigma", c.projection.init_noise_sigma}}},
      {"optimizer",
       {{"base_lr", c.optimizer.base_lr},
        {"momentum", c.optimizer.momentum},
        {"weight_decay", c.optimizer.weight_decay},
        {"warmup_epochs", c.optimizer.warmup_epochs},
        {"epochs", c.optimizer.epochs},
        {"steps_per_epoch", c.optimizer.steps_per_epoch},
        {"batch_size", c.optimizer.batch_size}}},
      {"augmentation", {{"jitter_sigma", c.augmentation.jitter_sigma}}},
      {"eval", {{"every_epochs", c.eval.every_epochs}, {"samples", c.eval.samples}}},
      {"checkpoint", {{"every_epochs", c.checkpoint.every_epochs}}},
  };
}

namespace {

template <typename F>
void section(ObjectReader& r, const char* key, F&& f) {
  if (const json* j = r.child(key)) {
    ObjectReader sub(*j, r.where() + "." + key);
    f(sub);
    sub.finish();
  }
}

WorldParams overlay_world(const WorldParams& base, const json& j) {
  // Start from the base params and overlay only the fields present.
  json merged = to_json(base);
  if (!j.is_object()) throw ConfigError("config.data.world: expected a JSON object");
  for (const auto& [k, v] : j.items()) merged[k] = v;
  bool text_dim_given = j.contains("text_dim");
  WorldParams p = world_params_from_json(merged);
  if (!text_dim_given && j.contains("dim") && base.text_dim == base.dim) p.text_dim = p.dim;
  return p;
}

}  // namespace

RunConfig overlay_config(const RunConfig& base, const json& j) {
  RunConfig c = base;
  ObjectReader r(j, "config");
  r.get("schema_version", c.schema_version);
  if (c.schema_version != kConfigSchemaVersion) {
    throw ConfigError("config: unsupported schema_version " + std::to_string(c.schema_version));
  }
  r.get("preset", c.preset);
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  section(r, "data", [&](ObjectReader& s) {
    s.get("source", c.data.source);
    if (const json* w = s.child("world")) c.data.world = overlay_world(c.data.world, *w);
    s.get("train_inputs", c.data.train_inputs);
    s.get("train_teacher", c.data.train_teacher);
    s.get("eval_inputs", c.data.eval_inputs);
    s.get("eval_teacher", c.data.eval_teacher);
    s.get("eval_labels", c.data.eval_labels);
  });
  section(r, "tsb", [&](ObjectReader& s) {
    s.get("source", c.tsb.source);
    s.get("embeddings", c.tsb.embeddings);
    s.get("names", c.tsb.names);
    s.get("foreign_seed", c.tsb.foreign_seed);
    s.get("subset", c.tsb.subset);
  });
  section(r, "loss", [&](ObjectReader& s) {
    std::string mode, reduction;
    const bool mode_given = s.get("mode", mode);
    if (mode_given) c.loss.mode = parse_loss_mode(mode);
    if (!s.get("alpha", c.loss.alpha) && mode_given) {
      c.loss.alpha = c.loss.mode == LossMode::kGeneralized ? kDefaultAlphaGeneralized
                                                           : kDefaultAlphaStandard;
    }
    s.get("tau_teacher", c.loss.tau_teacher);
    s.get("tau_student", c.loss.tau_student);
    if (s.get("reduction", reduction)) c.loss.reduction = parse_reduction(reduction);
    s.get("vsb_momentum", c.loss.vsb_momentum);
    s.get("vsb_init", c.loss.vsb_init);
    s.get("queue_size", c.loss.queue_size);
  });
  section(r, "student", [&](ObjectReader& s) { s.get("hidden_dims", c.student.hidden_dims); });
  section(r, "projection", [&](ObjectReader& s) {
    s.get("enabled", c.projection.enabled);
    s.get("hidden_dims", c.projection.hidden_dims);
    s.get("bias", c.projection.bias);
    s.get("init", c.projection.init);
    s.get("init_noise_sigma", c.projection.init_noise_sigma);
  });
  section(r, "optimizer", [&](ObjectReader& s) {
    s.get("base_lr", c.optimizer.base_lr);
    s.get("momentum", c.optimizer.momentum);
    s.get("weight_decay", c.optimizer.weight_decay);
    s.get("warmup_epochs", c.optimizer.warmup_epochs);
    s.get("epochs", c.optimizer.epochs);
    s.get("steps_per_epoch", c.optimizer.steps_per_epoch);
    s.get("batch_size", c.optimizer.batch_size);
  });
  section(r, "augmentation", [&](ObjectReader& s) { s.get("jitter_sigma", c.augmentation.jitter_sigma); });
  section(r, "eval", [&](ObjectReader& s) {
    s.get("every_epochs", c.eval.every_epochs);
    s.get("samples", c.eval.samples);
  });
  section(r, "checkpoint", [&](ObjectReader& s) { s.get("every_epochs", c.checkpoint.every_epochs); });
  r.finish();
  return c;
}

RunConfig resolve_config(const json& j, const std::string& fallback_preset) {
  std::string preset = fallback_preset;
  if (j.is_object() && j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError("config.preset: expected a string");
    preset = j["preset"].get<std::string>();
  }
  return overlay_config(preset_config(preset), j);
}

RunConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return resolve_config(j);
}

}  // namespace lgd
