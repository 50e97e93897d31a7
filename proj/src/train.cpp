// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lgd/train.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lgd/json_util.hpp"

namespace lgd {

namespace fs = std::filesystem;
using nlohmann::json;

Index TrainingData::input_dim() const {
  return world ? world->params.input_dim : train_inputs.cols();
}

Index TrainingData::dim() const { return world ? world->params.dim : train_teacher.cols(); }

Batch TrainingData::next_batch(Index batch_size, CounterRng& rng) const {
  if (world) return sample_batch(*world, batch_size, rng);
  Batch b;
  b.inputs.resize(batch_size, train_inputs.cols());
  b.teacher_embeddings.resize(batch_size, train_teacher.cols());
  b.labels.assign(batch_size, 0);
  for (Index i = 0; i < batch_size; ++i) {
    const Index r = rng.below(train_inputs.rows());
    b.inputs.row(i) = train_inputs.row(r);
    b.teacher_embeddings.row(i) = train_teacher.row(r);
  }
  return b;
}

TrainingData make_training_data(const RunConfig& cfg) {
  cfg.validate();
  TrainingData d;
  if (cfg.data.source == "synthetic") {
    d.world = gen_world(cfg.data.world);
    CounterRng eval_rng(cfg.data.world.seed, "eval/split");
    d.eval = sample_batch(*d.world, cfg.eval.samples, eval_rng);
    return d;
  }
  d.train_inputs = read_embeddings(cfg.data.train_inputs);
  auto teacher = l2_normalize_rows(read_embeddings(cfg.data.train_teacher));
  if (teacher.any_zero()) throw InputError("train_teacher: zero-norm teacher embedding");
  d.train_teacher = std::move(teacher.values);
  if (d.train_inputs.rows() != d.train_teacher.rows()) {
    throw ShapeError("train inputs and teacher embeddings have different row counts");
  }
  if (!cfg.data.eval_inputs.empty()) {
    d.eval.inputs = read_embeddings(cfg.data.eval_inputs);
    auto et = l2_normalize_rows(read_embeddings(cfg.data.eval_teacher));
    d.eval.teacher_embeddings = std::move(et.values);
    d.eval.labels = read_labels(cfg.data.eval_labels);
    if (d.eval.inputs.rows() != d.eval.teacher_embeddings.rows() ||
        d.eval.inputs.rows() != static_cast<Index>(d.eval.labels.size())) {
      throw ShapeError("eval split: inputs, teacher embeddings and labels disagree in count");
    }
  }
  return d;
}

TextualSemanticsBank make_tsb(const RunConfig& cfg, const TrainingData& data) {
  std::optional<TextualSemanticsBank> full;
  if (cfg.tsb.source == "files") {
    full = load_tsb(cfg.tsb.embeddings, cfg.tsb.names);
  } else if (cfg.tsb.source == "foreign_world") {
    WorldParams p = cfg.data.world;
    p.seed = cfg.tsb.foreign_seed;
    auto bank = gen_text_anchors(gen_world(p));
    full.emplace(bank.anchors(), bank.category_names(),
                 "synthetic-foreign:seed=" + std::to_string(p.seed));
  } else {
    full = gen_text_anchors(*data.world);
  }
  if (!cfg.tsb.subset.empty()) return subset_tsb(*full, cfg.tsb.subset);
  return *full;
}

TrainState init_train_state(const RunConfig& cfg, const TrainingData& data,
                            const TextualSemanticsBank& tsb) {
  const Index dim = data.dim();
  const Index c = tsb.num_categories();
  TrainState s;
  s.student = StudentNet(student_spec(data.input_dim(), cfg.student.hidden_dims, dim));
  CounterRng init_rng(cfg.seed, "init/student");
  s.student.init_random(init_rng);

  if (cfg.projection.enabled) {
    s.projection =
        ProjectionHead(projection_spec(tsb.dim(), dim, cfg.projection.hidden_dims, cfg.projection.bias));
    CounterRng proj_rng(cfg.seed, "init/projection");
    if (cfg.projection.init == "world_adapter") {
      if (!cfg.projection.hidden_dims.empty()) {
        throw ConfigError("projection.init=world_adapter requires a single linear layer");
      }
      if (!data.world || data.world->text_lift.rows() != tsb.dim()) {
        throw ConfigError("projection.init=world_adapter requires the world's own text space");
      }
      const double sigma = cfg.projection.init_noise_sigma / std::sqrt(double(tsb.dim()));
      s.projection->weight(0) =
          data.world->text_lift + normal_matrix(tsb.dim(), dim, sigma, proj_rng);
    } else {
      s.projection->init_random(proj_rng);
    }
    s.projection_opt.emplace(s.projection->parameters(), cfg.optimizer.sgd());
  } else if (tsb.dim() != dim) {
    throw ConfigError("text anchor dim " + std::to_string(tsb.dim()) + " differs from embedding dim " +
                      std::to_string(dim) + "; enable the projection head");
  }

  if (cfg.loss.vsb_init == "random") {
    CounterRng vsb_rng(cfg.seed, "init/vsb");
    auto anchors = l2_normalize_rows(normal_matrix(c, dim, 1.0, vsb_rng)).values;
    s.vsb = VisualSemanticsBank(anchors.transpose(), std::vector<bool>(c, true), cfg.loss.vsb_momentum);
  } else {
    s.vsb = VisualSemanticsBank(dim, c, cfg.loss.vsb_momentum);
  }
  if (cfg.loss.mode == LossMode::kBaselineSeed) s.queue.emplace(cfg.loss.queue_size, dim);
  s.student_opt = SgdMomentum<double>(s.student.parameters(), cfg.optimizer.sgd());
  s.batch_rng = CounterRng(cfg.seed, "train/batches");
  s.augment_rng = CounterRng(cfg.seed, "train/augment");
  return s;
}

Matrix<double> effective_text_anchors(const TrainState& state, const TextualSemanticsBank& tsb) {
  if (state.projection) return project_anchors(*state.projection, tsb.anchors()).anchors;
  return tsb.anchors();
}

namespace {

json snapshot_json(const std::optional<ScoreDistribution<double>>& s) {
  if (!s) return nullptr;
  json rows = json::array();
  for (Index i = 0; i < s->rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < s->cols(); ++j) row.push_back((*s)(i, j));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

StepResult compute_step(TrainState& state, const Matrix<double>& inputs,
                        const Matrix<double>& teacher, const TextualSemanticsBank& tsb,
                        const RunConfig& cfg) {
  const LossConfig lc = cfg.loss.loss_config();
  {
    const Matrix<double> anchors = effective_text_anchors(state, tsb);
    if (!anchors.allFinite()) {
      TrainingError err("non-finite projected text anchors at step " + std::to_string(state.step));
      err.set_diagnostic_path(
          json{{"step", state.step}, {"reason", "non-finite projected text anchors"}}.dump());
      throw err;
    }
    const auto assignments = classify_by_anchors(teacher, anchors);
    apply_momentum_update(state.vsb,
                          batch_centroids(teacher, assignments, state.vsb.num_categories()));
  }
  const auto fwd = state.student.forward(inputs);
  const Matrix<double>& z_s = fwd.output;
  if (!z_s.allFinite()) {
    // Diverged parameters; the student-side scores cannot be formed.
    TrainingError err("non-finite student embedding at step " + std::to_string(state.step));
    const Matrix<double> anchors = effective_text_anchors(state, tsb);
    json snap = {{"step", state.step}, {"reason", "non-finite student embedding"}};
    if (anchors.allFinite()) {
      snap["teacher_textual"] =
          snapshot_json(softmax_rows(matmul(teacher, anchors), lc.tau_teacher));
    }
    err.set_diagnostic_path(snap.dump());
    throw err;
  }
  const ProjectionHead* proj = state.projection ? &*state.projection : nullptr;

  StepResult r;
  switch (cfg.loss.mode) {
    case LossMode::kStandard:
      r.loss = lgd_loss(teacher, z_s, tsb, state.vsb, lc, proj);
      break;
    case LossMode::kGeneralized:
      r.loss = generalized_lgd_loss(teacher, z_s, tsb, state.vsb, proj, lc);
      break;
    case LossMode::kBaselineSeed: {
      // The very first batch primes the queue so the loss has instances.
      const bool primed = state.queue->empty();
      if (primed) state.queue->enqueue(teacher);
      r.loss = seed_baseline_loss(teacher, z_s, *state.queue, lc);
      if (!primed) state.queue->enqueue(teacher);
      break;
    }
  }
  r.student_grads = state.student.backward(fwd.cache, r.loss.grad_student);
  r.projection_grads = r.loss.grad_projection;
  return r;
}


MetricsRow train_step(TrainState& state, const TrainingData& data, const TextualSemanticsBank& tsb,
                      const RunConfig& cfg) {
  const auto& opt = cfg.optimizer;
  Batch batch = data.next_batch(opt.batch_size, state.batch_rng);
  if (cfg.augmentation.jitter_sigma > 0) {
    batch.inputs += normal_matrix(batch.inputs.rows(), batch.inputs.cols(),
                                  cfg.augmentation.jitter_sigma, state.augment_rng);
  }
  const double t = double(state.step) / double(opt.total_steps());
  const double lr = opt.schedule().lr_at(t);
  StepResult r = compute_step(state, batch.inputs, batch.teacher_embeddings, tsb, cfg);
  if (!std::isfinite(r.loss.total)) {
    TrainingError err("non-finite loss at step " + std::to_string(state.step));
    err.set_diagnostic_path(json{{"step", state.step},
                                 {"teacher_visual", snapshot_json(r.loss.scores.teacher_visual)},
                                 {"student_visual", snapshot_json(r.loss.scores.student_visual)},
                                 {"teacher_textual", snapshot_json(r.loss.scores.teacher_textual)},
                                 {"student_textual", snapshot_json(r.loss.scores.student_textual)}}
                                .dump());
    throw err;
  }
  state.student_opt.step(state.student.mutable_parameters(), r.student_grads, lr, state.step);
  if (state.projection && r.projection_grads) {
    state.projection_opt->step(state.projection->mutable_parameters(), *r.projection_grads, lr,
                               state.step);
  }

  MetricsRow row;
  row.step = state.step + 1;
  row.epoch = double(state.step + 1) / double(opt.steps_per_epoch);
  row.lr = lr;
  row.loss_total = r.loss.total;
  const auto& l = r.loss;
  if (l.has_component("visual")) row.loss_visual = l.component("visual");
  if (l.has_component("seed")) row.loss_visual = l.component("seed");
  if (l.has_component("textual")) row.loss_textual = l.component("textual");
  if (l.has_component("student_textual")) row.loss_textual = l.component("student_textual");
  row.vsb_initialized_count = state.vsb.initialized_count();
  for (std::size_t k = 0; k < l.component_names.size(); ++k) {
    row.components.emplace_back(l.component_names[k], l.components[k]);
  }
  ++state.step;
  return row;
}

TrainResult train_distillation(const RunConfig& cfg, const TrainingData& data,
                               const TextualSemanticsBank& tsb, TrainState state,
                               const TrainHooks& hooks) {
  TrainResult out;
  const long total = cfg.optimizer.total_steps();
  const Index spe = cfg.optimizer.steps_per_epoch;
  while (state.step < total) {
    MetricsRow row;
    try {
      row = train_step(state, data, tsb, cfg);
    } catch (TrainingError& e) {
      // The snapshot travels in the error until a directory is known.
      if (hooks.diagnostics_dir && !e.diagnostic_path().empty() &&
          e.diagnostic_path().front() == '{') {
        fs::create_directories(*hooks.diagnostics_dir);
        const fs::path p =
            *hooks.diagnostics_dir / ("abort_step_" + std::to_string(state.step) + ".json");
        write_text_atomic(p, e.diagnostic_path() + "\n");
        e.set_diagnostic_path(p.string());
      }
      throw;
    }
    const bool epoch_end = state.step % spe == 0;
    if (epoch_end) {
      const Index epoch = state.step / spe;
      if (cfg.eval.every_epochs > 0 && epoch % cfg.eval.every_epochs == 0 &&
          data.eval.inputs.rows() > 0) {
        row.zeroshot_acc =
            zeroshot_eval(state.student, data.eval, effective_text_anchors(state, tsb)).accuracy;
      }
    }
    if (hooks.on_step) hooks.on_step(row);
    out.metrics.push_back(row);
    if (epoch_end && hooks.on_epoch) hooks.on_epoch(state.step / spe, state, row);
  }
  out.state = std::move(state);
  return out;
}

TrainResult train_distillation(const RunConfig& cfg, const TrainingData& data,
                               const TextualSemanticsBank& tsb, const TrainHooks& hooks) {
  return train_distillation(cfg, data, tsb, init_train_state(cfg, data, tsb), hooks);
}

namespace {

json shape_json(const Matrix<double>& m) { return json::array({m.rows(), m.cols()}); }

json save_params(const fs::path& dir, const std::string& prefix, const ParameterList<double>& ps) {
  json list = json::array();
  for (const auto& p : ps) {
    const std::string file = prefix + "." + p.name + ".lgde";
    write_embeddings(dir / file, p.value, Dtype::kF64);
    list.push_back({{"name", p.name}, {"file", file}, {"shape", shape_json(p.value)}});
  }
  return list;
}

json save_buffers(const fs::path& dir, const std::string& prefix, const ParameterList<double>& ps,
                  const std::vector<Matrix<double>>& bufs) {
  json list = json::array();
  for (std::size_t k = 0; k < bufs.size(); ++k) {
    const std::string file = prefix + "." + ps[k].name + ".momentum.lgde";
    write_embeddings(dir / file, bufs[k], Dtype::kF64);
    list.push_back(file);
  }
  return list;
}

Matrix<double> load_shaped(const fs::path& path, const Matrix<double>& like) {
  Matrix<double> m = read_embeddings(path);
  if (m.rows() != like.rows() || m.cols() != like.cols()) {
    throw FormatError(path.string() + ": shape " + shape_str(m) + " does not match expected " +
                      shape_str(like));
  }
  return m;
}

void load_params(const fs::path& dir, const json& list, ParameterList<double>& ps) {
  if (!list.is_array() || list.size() != ps.size()) {
    throw FormatError(dir.string() + ": parameter list does not match the configured network");
  }
  for (std::size_t k = 0; k < ps.size(); ++k) {
    if (list[k].at("name").get<std::string>() != ps[k].name) {
      throw FormatError(dir.string() + ": parameter order mismatch at " + ps[k].name);
    }
    ps[k].value = load_shaped(dir / list[k].at("file").get<std::string>(), ps[k].value);
  }
}

void load_buffers(const fs::path& dir, const json& list, std::vector<Matrix<double>>& bufs) {
  if (!list.is_array() || list.size() != bufs.size()) {
    throw FormatError(dir.string() + ": optimizer buffer list does not match");
  }
  for (std::size_t k = 0; k < bufs.size(); ++k) {
    bufs[k] = load_shaped(dir / list[k].get<std::string>(), bufs[k]);
  }
}

}  // namespace

void save_checkpoint(const fs::path& dir, const TrainState& s, const TextualSemanticsBank& tsb,
                     const RunConfig& cfg) {
  fs::create_directories(dir);
  json m;
  m["format_version"] = 1;
  m["step"] = s.step;
  m["total_steps"] = cfg.optimizer.total_steps();
  m["schedule_position"] = double(s.step) / double(cfg.optimizer.total_steps());
  m["epoch"] = double(s.step) / double(cfg.optimizer.steps_per_epoch);
  m["rng"] = {{"algorithm", std::string(kRngAlgorithm)},
              {"seed", cfg.seed},
              {"batch_counter", s.batch_rng.counter()},
              {"augment_counter", s.augment_rng.counter()}};
  m["student"] = {{"input_dim", s.student.input_dim()},
                  {"hidden_dims", s.student.spec().hidden_dims},
                  {"output_dim", s.student.output_dim()},
                  {"params", save_params(dir, "student", s.student.parameters())},
                  {"momentum_buffers", save_buffers(dir, "student", s.student.parameters(),
                                                    s.student_opt.buffers())}};
  if (s.projection) {
    m["projection"] = {{"input_dim", s.projection->input_dim()},
                       {"hidden_dims", s.projection->spec().hidden_dims},
                       {"output_dim", s.projection->output_dim()},
                       {"bias", s.projection->spec().bias},
                       {"params", save_params(dir, "projection", s.projection->parameters())},
                       {"momentum_buffers",
                        save_buffers(dir, "projection", s.projection->parameters(),
                                     s.projection_opt->buffers())}};
  } else {
    m["projection"] = nullptr;
  }
  save_vsb(dir / "vsb", s.vsb, tsb.category_names(), Dtype::kF64);
  m["vsb"] = "vsb.json";
  if (s.queue && !s.queue->empty()) {
    write_embeddings(dir / "queue.lgde", s.queue->entries(), Dtype::kF64);
    m["queue"] = {{"capacity", s.queue->capacity()}, {"file", "queue.lgde"}};
  } else if (s.queue) {
    m["queue"] = {{"capacity", s.queue->capacity()}, {"file", nullptr}};
  } else {
    m["queue"] = nullptr;
  }
  save_tsb(dir / "tsb.lgde", dir / "tsb.names", tsb);
  m["tsb"] = {{"embeddings", "tsb.lgde"}, {"names", "tsb.names"}, {"source_tag", tsb.source_tag()}};
  write_text_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

TrainState load_checkpoint(const fs::path& dir, const RunConfig& cfg, const TrainingData& data,
                           const TextualSemanticsBank& tsb) {
  json m;
  try {
    m = json::parse(read_text(dir / "manifest.json"));
  } catch (const json::parse_error& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  try {
    TrainState s = init_train_state(cfg, data, tsb);
    s.step = m.at("step").get<long>();
    const auto& rng = m.at("rng");
    if (rng.at("algorithm").get<std::string>() != kRngAlgorithm) {
      throw FormatError(dir.string() + ": checkpoint was written with a different RNG");
    }
    if (rng.at("seed").get<std::uint64_t>() != cfg.seed) {
      throw FormatError(dir.string() + ": checkpoint seed differs from config seed");
    }
    s.batch_rng.set_counter(rng.at("batch_counter").get<std::uint64_t>());
    s.augment_rng.set_counter(rng.at("augment_counter").get<std::uint64_t>());
    load_params(dir, m.at("student").at("params"), s.student.mutable_parameters());
    load_buffers(dir, m.at("student").at("momentum_buffers"), s.student_opt.mutable_buffers());
    if (s.projection) {
      if (m.at("projection").is_null()) throw FormatError(dir.string() + ": no projection saved");
      load_params(dir, m["projection"].at("params"), s.projection->mutable_parameters());
      load_buffers(dir, m["projection"].at("momentum_buffers"),
                   s.projection_opt->mutable_buffers());
    }
    auto bank = load_vsb(dir / m.at("vsb").get<std::string>());
    if (bank.vsb.dim() != s.vsb.dim() || bank.vsb.num_categories() != s.vsb.num_categories()) {
      throw FormatError(dir.string() + ": visual bank shape does not match configuration");
    }
    s.vsb = std::move(bank.vsb);
    if (s.queue && m.at("queue").is_object() && !m["queue"].at("file").is_null()) {
      s.queue->enqueue(read_embeddings(dir / m["queue"]["file"].get<std::string>()));
    }
    return s;
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + ": malformed manifest: " + e.what());
  }
}

EvalReport evaluate_state(const TrainState& state, const TextualSemanticsBank& tsb,
                          const TrainingData& data, const RunConfig& cfg, bool with_probe) {
  if (data.eval.inputs.rows() == 0) throw EvalError("no held-out split available for evaluation");
  const Matrix<double> anchors = effective_text_anchors(state, tsb);
  const Matrix<double> z_s = state.student.forward(data.eval.inputs).output;
  const auto zs = zeroshot_eval(z_s, data.eval.labels, anchors);
  const auto zt = zeroshot_eval(data.eval.teacher_embeddings, data.eval.labels, anchors);
  const auto diag =
      alignment_diagnostics(data.eval.teacher_embeddings, z_s, anchors, state.vsb, cfg.loss.loss_config());
  EvalReport r;
  r.zeroshot_accuracy = zs.accuracy;
  r.per_class_accuracy = zs.per_class_accuracy;
  r.teacher_zeroshot_accuracy = zt.accuracy;
  r.mean_kl_teacher_student_textual = diag.mean_kl_textual;
  r.mean_kl_teacher_student_visual = diag.mean_kl_visual;
  r.anchor_separation = diag.anchor_separation;
  r.num_samples = z_s.rows();
  if (with_probe && z_s.rows() >= 4) {
    const Index half = z_s.rows() / 2;
    const std::vector<Index> ytr(data.eval.labels.begin(), data.eval.labels.begin() + half);
    const std::vector<Index> yte(data.eval.labels.begin() + half, data.eval.labels.end());
    ProbeConfig pc;
    pc.seed = cfg.seed;
    r.linear_probe_accuracy =
        linear_probe(z_s.topRows(half), ytr, z_s.bottomRows(z_s.rows() - half), yte,
                     tsb.num_categories(), pc)
            .accuracy;
  }
  return r;
}

namespace {

std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

std::vector<std::string> read_lines_if_exists(const fs::path& p, bool skip_header) {
  std::vector<std::string> out;
  if (!fs::exists(p)) return out;
  std::istringstream in(read_text(p));
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first && skip_header) {
      first = false;
      continue;
    }
    first = false;
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

TrainResult run_distill(const RunConfig& cfg, const std::optional<fs::path>& resume_from) {
  cfg.validate();
  const fs::path out_dir = cfg.output_dir;
  fs::create_directories(out_dir);
  write_text_atomic(out_dir / "config.resolved.json", to_json(cfg).dump(2) + "\n");

  const TrainingData data = make_training_data(cfg);
  const TextualSemanticsBank tsb = make_tsb(cfg, data);
  TrainState state =
      resume_from ? load_checkpoint(*resume_from, cfg, data, tsb) : init_train_state(cfg, data, tsb);

  std::vector<std::string> csv, jsonl;
  if (resume_from) {
    csv = read_lines_if_exists(out_dir / "metrics.csv", true);
    jsonl = read_lines_if_exists(out_dir / "metrics.jsonl", false);
    // Keep only rows up to the resumed step.
    auto upto = [&](std::vector<std::string>& lines, bool is_json) {
      std::vector<std::string> kept;
      for (const auto& l : lines) {
        long step = is_json ? json::parse(l).at("step").get<long>() : std::stol(l.substr(0, l.find(',')));
        if (step <= state.step) kept.push_back(l);
      }
      lines = std::move(kept);
    };
    upto(csv, false);
    upto(jsonl, true);
  }
  auto flush_metrics = [&] {
    write_text_atomic(out_dir / "metrics.csv", metrics_csv_header() + "\n" + join_lines(csv));
    write_text_atomic(out_dir / "metrics.jsonl", join_lines(jsonl));
  };

  TrainHooks hooks;
  hooks.diagnostics_dir = out_dir;
  hooks.on_step = [&](const MetricsRow& row) { jsonl.push_back(metrics_json(row).dump()); };
  hooks.on_epoch = [&](Index epoch, const TrainState& s, const MetricsRow& row) {
    csv.push_back(metrics_csv_line(row));
    flush_metrics();
    if (cfg.checkpoint.every_epochs > 0 && epoch % cfg.checkpoint.every_epochs == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04ld", static_cast<long>(epoch));
      save_checkpoint(out_dir / "checkpoints" / name, s, tsb, cfg);
    }
  };
  TrainResult result = train_distillation(cfg, data, tsb, std::move(state), hooks);
  flush_metrics();
  save_checkpoint(out_dir / "checkpoints" / "final", result.state, tsb, cfg);
  if (data.eval.inputs.rows() > 0) {
    const EvalReport report = evaluate_state(result.state, tsb, data, cfg, false);
    write_text_atomic(out_dir / "report.json", to_json(report).dump(2) + "\n");
  }
  return result;
}

}  // namespace lgd
