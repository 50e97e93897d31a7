// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>

#include "lgd/config.hpp"
#include "lgd/dataio.hpp"
#include "lgd/eval.hpp"
#include "lgd/experiments.hpp"
#include "lgd/train.hpp"

namespace lgd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GenArgs {
  WorldParams world;
  std::string out = "world";
  Index eval_samples = 2048;
  Index train_samples = 0;
};

struct RunArgs {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string loss;
  std::string text_subset;
  std::string resume;
  std::optional<Index> epochs;
};

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::string tsb;
  std::string names;
  std::string out;
  bool probe = false;
};

struct SuiteArgs {
  std::string name;
  Index seeds = 5;
  std::uint64_t first_seed = 1;
  std::string config;
  std::string preset;
  std::string out = "suite";
  unsigned threads = 0;
  std::optional<Index> epochs;
};

json read_json_file(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Preset, then the config document, then command-line flags.
RunConfig build_config(const RunArgs& a) {
  json doc = a.config.empty() ? json::object() : read_json_file(a.config);
  RunConfig cfg = a.preset.empty() ? resolve_config(doc) : overlay_config(preset_config(a.preset), doc);
  if (!a.preset.empty()) cfg.preset = a.preset;
  if (a.seed) {
    cfg.seed = *a.seed;
    cfg.data.world.seed = *a.seed;
  }
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (!a.loss.empty()) {
    cfg.loss.mode = parse_loss_mode(a.loss);
    const bool alpha_given = doc.contains("loss") && doc["loss"].is_object() && doc["loss"].contains("alpha");
    if (!alpha_given) {
      cfg.loss.alpha = cfg.loss.mode == LossMode::kGeneralized ? kDefaultAlphaGeneralized
                                                               : kDefaultAlphaStandard;
    }
  }
  if (!a.text_subset.empty()) cfg.tsb.subset = read_names(a.text_subset);
  if (a.epochs) cfg.optimizer.epochs = *a.epochs;
  cfg.validate();
  return cfg;
}

int cmd_gen(const GenArgs& a, std::ostream& out) {
  a.world.validate();
  const SyntheticWorld world = gen_world(a.world);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  json w = to_json(a.world);
  json doc = {{"format_version", 1},
              {"kind", "synthetic_world"},
              {"rng_algorithm", kRngAlgorithm},
              {"params", w},
              {"min_pairwise_angle_deg", min_pairwise_angle_deg(world.category_directions)},
              {"files",
               {{"tsb_embeddings", "tsb.lgde"}, {"tsb_names", "tsb.names"}}}};
  const TextualSemanticsBank tsb = gen_text_anchors(world);
  save_tsb(dir / "tsb.lgde", dir / "tsb.names", tsb);
  if (a.eval_samples > 0) {
    CounterRng rng(a.world.seed, "eval/split");
    const Batch b = sample_batch(world, a.eval_samples, rng);
    write_embeddings(dir / "eval_inputs.lgde", b.inputs);
    write_embeddings(dir / "eval_teacher.lgde", b.teacher_embeddings);
    write_labels(dir / "eval_labels.txt", b.labels);
    doc["files"]["eval_inputs"] = "eval_inputs.lgde";
    doc["files"]["eval_teacher"] = "eval_teacher.lgde";
    doc["files"]["eval_labels"] = "eval_labels.txt";
  }
  if (a.train_samples > 0) {
    CounterRng rng(a.world.seed, "gen/train_split");
    const Batch b = sample_batch(world, a.train_samples, rng);
    write_embeddings(dir / "train_inputs.lgde", b.inputs);
    write_embeddings(dir / "train_teacher.lgde", b.teacher_embeddings);
    doc["files"]["train_inputs"] = "train_inputs.lgde";
    doc["files"]["train_teacher"] = "train_teacher.lgde";
  }
  write_text_atomic(dir / "world.json", doc.dump(2) + "\n");
  out << "wrote world (C=" << a.world.num_categories << ", D=" << a.world.dim
      << ", seed=" << a.world.seed << ") to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_distill(const RunArgs& a, std::ostream& out) {
  const RunConfig cfg = build_config(a);
  std::optional<fs::path> resume;
  if (!a.resume.empty()) {
    resume = fs::path(a.resume);
    if (!fs::exists(*resume / "manifest.json")) {
      throw ConfigError("--resume: no checkpoint manifest in '" + a.resume + "'");
    }
  }
  const TrainResult r = run_distill(cfg, resume);
  const MetricsRow& last = r.metrics.empty() ? MetricsRow{} : r.metrics.back();
  out << "distill done: steps " << r.state.step << ", final loss " << format_double(last.loss_total)
      << ", vsb initialized " << r.state.vsb.initialized_count() << "/"
      << r.state.vsb.num_categories() << "\n";
  const fs::path report = fs::path(cfg.output_dir) / "report.json";
  if (fs::exists(report)) out << read_text(report);
  return kExitOk;
}

/// A checkpoint lives at <run>/checkpoints/<name>; the run's resolved config
/// sits at <run>/config.resolved.json.
fs::path locate_config(const fs::path& checkpoint) {
  for (fs::path p = fs::absolute(checkpoint); !p.empty() && p != p.root_path(); p = p.parent_path()) {
    if (fs::exists(p / "config.resolved.json")) return p / "config.resolved.json";
  }
  throw ConfigError("eval: cannot find config.resolved.json above '" + checkpoint.string() +
                    "'; pass --config");
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const fs::path ckpt = a.checkpoint;
  if (!fs::exists(ckpt / "manifest.json")) {
    throw ConfigError("eval: no checkpoint manifest in '" + a.checkpoint + "'");
  }
  const fs::path cfg_path = a.config.empty() ? locate_config(ckpt) : fs::path(a.config);
  RunConfig cfg = resolve_config(read_json_file(cfg_path.string()));
  if (!a.tsb.empty() || !a.names.empty()) {
    if (a.tsb.empty() || a.names.empty()) throw ConfigError("eval: --tsb and --names go together");
    cfg.tsb.source = "files";
    cfg.tsb.embeddings = a.tsb;
    cfg.tsb.names = a.names;
  }
  cfg.validate();
  const TrainingData data = make_training_data(cfg);
  const TextualSemanticsBank tsb = make_tsb(cfg, data);
  const TrainState state = load_checkpoint(ckpt, cfg, data, tsb);
  const EvalReport report = evaluate_state(state, tsb, data, cfg, a.probe);
  const std::string text = to_json(report).dump(2) + "\n";
  const fs::path dest = a.out.empty() ? ckpt / "eval_report.json" : fs::path(a.out);
  write_text_atomic(dest, text);
  out << text;
  return kExitOk;
}

int cmd_suite(const SuiteArgs& a, std::ostream& out) {
  if (a.seeds < 1) throw ConfigError("suite: --seeds must be >= 1");
  RunArgs ra;
  ra.config = a.config;
  ra.preset = a.preset;
  ra.epochs = a.epochs;
  const RunConfig base = build_config(ra);
  std::vector<std::uint64_t> seeds;
  for (Index k = 0; k < a.seeds; ++k) seeds.push_back(a.first_seed + static_cast<std::uint64_t>(k));
  const SuiteResult r = run_suite(a.name, base, seeds, a.threads);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  write_text_atomic(dir / "config.resolved.json", to_json(base).dump(2) + "\n");
  write_text_atomic(dir / "results.csv", suite_csv(r));
  const std::string summary = suite_summary(r);
  write_text_atomic(dir / "summary.txt", summary);
  out << summary;
  return r.all_ok() ? kExitOk : kExitPartialFailure;
}

std::string fmt(double v) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(4) << v;
  return o.str();
}

/// Shapes, norms and the nearest other anchor for every column.
void print_anchor_table(const Matrix<double>& anchors, const std::vector<std::string>& names,
                        const std::vector<bool>* initialized, std::ostream& out) {
  const Index c = anchors.cols();
  out << "anchors: " << anchors.rows() << " x " << c << " (dim x categories)\n";
  out << "mean pairwise cosine: " << fmt(mean_pairwise_cosine(anchors)) << "\n";
  out << "  idx  name                 norm     nearest              cosine\n";
  for (Index k = 0; k < c; ++k) {
    Index best = -1;
    double best_cos = -2;
    const double nk = anchors.col(k).norm();
    for (Index j = 0; j < c; ++j) {
      const double nj = anchors.col(j).norm();
      if (j == k || nk == 0 || nj == 0) continue;
      const double cs = anchors.col(k).dot(anchors.col(j)) / (nk * nj);
      if (cs > best_cos) {
        best_cos = cs;
        best = j;
      }
    }
    out << "  " << std::setw(3) << k << "  " << std::left << std::setw(20) << names[k] << std::right
        << " " << fmt(nk);
    if (initialized && !(*initialized)[k]) {
      out << "   (uninitialized)\n";
    } else if (best >= 0) {
      out << "   " << std::left << std::setw(20) << names[best] << std::right << " " << fmt(best_cos)
          << "\n";
    } else {
      out << "\n";
    }
  }
}

void inspect_vsb(const fs::path& p, std::ostream& out) {
  const VsbCheckpoint v = load_vsb(p);
  out << "visual semantics bank: " << p.string() << "\n";
  out << "initialized_count: " << v.vsb.initialized_count() << " / " << v.vsb.num_categories() << "\n";
  out << "momentum: " << format_double(v.vsb.momentum()) << "\n";
  print_anchor_table(v.vsb.anchors(), v.category_names, &v.vsb.initialized(), out);
}

void inspect_tsb(const fs::path& emb, const fs::path& names, std::ostream& out) {
  std::vector<std::string> warnings;
  const TextualSemanticsBank t = load_tsb(emb, names, &warnings);
  out << "textual semantics bank: " << emb.string() << "\n";
  out << "categories: " << t.num_categories() << ", dim: " << t.dim() << "\n";
  for (const auto& w : warnings) out << "warning: " << w << "\n";
  // Norms as stored, before the load-time normalization.
  const Matrix<double> raw = read_embeddings(emb);
  out << "stored row norms: min " << fmt(raw.rowwise().norm().minCoeff()) << " max "
      << fmt(raw.rowwise().norm().maxCoeff()) << "\n";
  print_anchor_table(t.anchors(), t.category_names(), nullptr, out);
}

void inspect_checkpoint(const fs::path& dir, std::ostream& out) {
  const json m = read_json_file((dir / "manifest.json").string());
  out << "checkpoint: " << dir.string() << "\n";
  out << "step: " << m.at("step") << " / " << m.at("total_steps") << " (epoch "
      << format_double(m.at("epoch").get<double>()) << ")\n";
  out << "rng: " << m.at("rng").dump() << "\n";
  auto params = [&](const char* key) {
    if (!m.contains(key) || m[key].is_null()) return;
    out << key << " parameters:\n";
    for (const auto& p : m[key].at("params")) {
      const Matrix<double> v = read_embeddings(dir / p.at("file").get<std::string>());
      out << "  " << std::left << std::setw(4) << p.at("name").get<std::string>() << std::right << " "
          << v.rows() << " x " << v.cols() << "  frobenius " << fmt(v.norm()) << "\n";
    }
  };
  params("student");
  params("projection");
  if (m.contains("queue") && m["queue"].is_object()) {
    out << "queue capacity: " << m["queue"].at("capacity") << "\n";
  }
  inspect_vsb(dir / m.at("vsb").get<std::string>(), out);
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  const fs::path p = path;
  if (!fs::exists(p)) throw IoError("inspect: '" + path + "' does not exist");
  if (fs::is_directory(p)) {
    if (!fs::exists(p / "manifest.json")) {
      throw ConfigError("inspect: directory '" + path + "' is not a checkpoint");
    }
    inspect_checkpoint(p, out);
    return kExitOk;
  }
  fs::path sidecar = p;
  sidecar.replace_extension(".json");
  if (p.extension() == ".json" || fs::exists(sidecar)) {
    const fs::path js = p.extension() == ".json" ? p : sidecar;
    const json doc = read_json_file(js.string());
    if (doc.value("kind", "") == "visual_semantics_bank") {
      inspect_vsb(js, out);
      return kExitOk;
    }
    if (p.extension() == ".json") {
      out << doc.dump(2) << "\n";
      return kExitOk;
    }
  }
  fs::path names = p;
  names.replace_extension(".names");
  if (fs::exists(names)) {
    inspect_tsb(p, names, out);
    return kExitOk;
  }
  const Matrix<double> m = read_embeddings(p);
  out << "embedding file: " << p.string() << "\n" << m.rows() << " x " << m.cols() << "\n";
  out << "row norms: min " << fmt(m.rowwise().norm().minCoeff()) << " max "
      << fmt(m.rowwise().norm().maxCoeff()) << "\n";
  return kExitOk;
}

void add_run_flags(CLI::App* sc, RunArgs& a) {
  sc->add_option("--config", a.config, "Run config JSON");
  sc->add_option("--preset", a.preset, "desk|paper-90ep|paper-200ep")
      ->check(CLI::IsMember({"desk", "paper-90ep", "paper-200ep"}));
  sc->add_option("--seed", a.seed, "Run and world seed");
  sc->add_option("--out", a.out, "Output directory");
  sc->add_option("--loss", a.loss, "standard|generalized|baseline_seed")
      ->check(CLI::IsMember({"standard", "generalized", "baseline_seed"}));
  sc->add_option("--text-subset", a.text_subset, "Names file restricting the text bank");
  sc->add_option("--epochs", a.epochs, "Override optimizer.epochs");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Language-guided distillation toolkit", "lgd"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lgd 1.0.0");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic world and its text bank");
  g->add_option("--C", gen.world.num_categories, "Number of categories")->capture_default_str();
  g->add_option("--D", gen.world.dim, "Embedding dimension")->capture_default_str();
  g->add_option("--input-dim", gen.world.input_dim, "Student input dimension")->capture_default_str();
  g->add_option("--text-dim", gen.world.text_dim, "Text anchor dimension (default: D)");
  g->add_option("--min-angle", gen.world.min_angle_deg, "Minimum angle between categories (deg)")
      ->capture_default_str();
  g->add_option("--sigma-text", gen.world.text_offset_sigma)->capture_default_str();
  g->add_option("--sigma-sample", gen.world.sample_noise_sigma)->capture_default_str();
  g->add_option("--sigma-input", gen.world.input_noise_sigma)->capture_default_str();
  g->add_option("--seed", gen.world.seed)->capture_default_str();
  g->add_option("--eval-samples", gen.eval_samples, "Held-out split size (0: none)")->capture_default_str();
  g->add_option("--train-samples", gen.train_samples, "Pre-sampled training split size")
      ->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->capture_default_str();

  RunArgs dist;
  auto* d = app.add_subcommand("distill", "Run a distillation");
  add_run_flags(d, dist);
  d->add_option("--resume", dist.resume, "Checkpoint directory to resume from");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required();
  e->add_option("--config", ev.config, "Run config (default: the run's config.resolved.json)");
  e->add_option("--tsb", ev.tsb, "Text bank embeddings file");
  e->add_option("--names", ev.names, "Text bank names manifest");
  e->add_option("--out", ev.out, "Report path (default: <checkpoint>/eval_report.json)");
  e->add_flag("--probe", ev.probe, "Also fit a linear probe");

  SuiteArgs su;
  auto* s = app.add_subcommand("suite", "Run a paired experiment suite");
  s->add_option("name", su.name, "ablation|text_control|collapse|lgd_vs_seed")
      ->required()
      ->check(CLI::IsMember(suite_names()));
  s->add_option("--seeds", su.seeds, "Number of seeds")->capture_default_str();
  s->add_option("--first-seed", su.first_seed)->capture_default_str();
  s->add_option("--config", su.config, "Base run config");
  s->add_option("--preset", su.preset)->check(CLI::IsMember({"desk", "paper-90ep", "paper-200ep"}));
  s->add_option("--out", su.out, "Output directory")->capture_default_str();
  s->add_option("--threads", su.threads, "Worker threads (default: LGD_THREADS or all cores)");
  s->add_option("--epochs", su.epochs, "Override optimizer.epochs");

  std::string inspect_path;
  auto* in = app.add_subcommand("inspect", "Summarize a bank, embedding file or checkpoint");
  in->add_option("path", inspect_path)->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) {
      if (g->count("--text-dim") == 0) gen.world.text_dim = gen.world.dim;
      return cmd_gen(gen, out);
    }
    if (*d) return cmd_distill(dist, out);
    if (*e) return cmd_eval(ev, out);
    if (*s) return cmd_suite(su, out);
    if (*in) return cmd_inspect(inspect_path, out);
  } catch (const TrainingError& ex) {
    err << "lgd: numeric abort: " << ex.what() << "\n";
    if (!ex.diagnostic_path().empty()) err << "lgd: diagnostics: " << ex.diagnostic_path() << "\n";
    return kExitNumericAbort;
  } catch (const std::exception& ex) {
    err << "lgd: error: " << ex.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace lgd::cli
