// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lgd/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

namespace lgd {

bool SuiteResult::all_ok() const {
  for (const auto& c : cells) {
    if (!c.ok) return false;
  }
  return true;
}

const CellResult* SuiteResult::find(const std::string& arm, std::uint64_t seed) const {
  for (const auto& c : cells) {
    if (c.arm == arm && c.seed == seed) return &c;
  }
  return nullptr;
}

std::vector<double> SuiteResult::values(const std::string& arm, const std::string& metric) const {
  std::vector<double> v;
  for (auto s : seeds) {
    const CellResult* c = find(arm, s);
    if (c && c->ok && c->metrics.count(metric)) v.push_back(c->metrics.at(metric));
  }
  return v;
}

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe m;
  m.n = v.size();
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= double(v.size());
  if (v.size() < 2) return m;
  double ss = 0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.se = std::sqrt(ss / double(v.size() - 1)) / std::sqrt(double(v.size()));
  return m;
}

MeanSe paired_difference(const SuiteResult& r, const std::string& arm_a, const std::string& arm_b,
                         const std::string& metric) {
  std::vector<double> d;
  for (auto s : r.seeds) {
    const CellResult* a = r.find(arm_a, s);
    const CellResult* b = r.find(arm_b, s);
    if (a && b && a->ok && b->ok && a->metrics.count(metric) && b->metrics.count(metric)) {
      d.push_back(a->metrics.at(metric) - b->metrics.at(metric));
    }
  }
  return mean_se(d);
}

std::vector<std::string> suite_names() { return {"ablation", "text_control", "collapse", "lgd_vs_seed"}; }

RunConfig collapse_base(const RunConfig& base) {
  RunConfig c = base;
  c.data.world.text_dim = 2 * c.data.world.dim;
  c.projection.enabled = true;
  return c;
}

namespace {

RunConfig with_mode(RunConfig c, LossMode mode, double alpha) {
  c.loss.mode = mode;
  c.loss.alpha = alpha;
  return c;
}

std::vector<std::string> half_subset(const RunConfig& base) {
  const auto names = default_category_names(base.data.world.num_categories);
  return {names.begin(), names.begin() + static_cast<std::ptrdiff_t>(names.size() / 2)};
}

}  // namespace

std::vector<ArmSpec> suite_arms(const std::string& suite, const RunConfig& base) {
  if (suite == "ablation") {
    return {{"visual_only", with_mode(base, LossMode::kStandard, 1.0)},
            {"textual_only", with_mode(base, LossMode::kStandard, 0.0)},
            {"combined", with_mode(base, LossMode::kStandard, kDefaultAlphaStandard)}};
  }
  if (suite == "lgd_vs_seed") {
    return {{"lgd", with_mode(base, LossMode::kStandard, kDefaultAlphaStandard)},
            {"seed", with_mode(base, LossMode::kBaselineSeed, kDefaultAlphaStandard)}};
  }
  if (suite == "text_control") {
    RunConfig matched = base;
    if (matched.tsb.subset.empty()) matched.tsb.subset = half_subset(base);
    matched.tsb.source = "world";
    RunConfig foreign = matched;
    foreign.tsb.source = "foreign_world";
    return {{"matched", matched}, {"mismatched", foreign}};
  }
  if (suite == "collapse") {
    const RunConfig c = collapse_base(base);
    return {{"naive", with_mode(c, LossMode::kStandard, 0.0)},
            {"generalized", with_mode(c, LossMode::kGeneralized, kDefaultAlphaGeneralized)}};
  }
  throw ConfigError("unknown suite '" + suite + "' (expected ablation|text_control|collapse|lgd_vs_seed)");
}

namespace {

double mean_column_norm(const Matrix<double>& a) { return a.colwise().norm().mean(); }

}  // namespace

std::map<std::string, double> run_cell(const std::string& suite, const ArmSpec& arm,
                                       std::uint64_t seed) {
  RunConfig cfg = arm.cfg;
  cfg.seed = seed;
  cfg.data.world.seed = seed;
  cfg.tsb.foreign_seed = seed + kForeignSeedOffset;
  cfg.eval.every_epochs = 0;
  cfg.validate();

  const TrainingData data = make_training_data(cfg);
  const TextualSemanticsBank tsb = make_tsb(cfg, data);
  TrainState state = init_train_state(cfg, data, tsb);
  const Matrix<double> anchors_init = effective_text_anchors(state, tsb);
  TrainResult res = train_distillation(cfg, data, tsb, std::move(state));
  const TrainState& s = res.state;

  std::map<std::string, double> m;
  m["final_loss"] = res.metrics.back().loss_total;
  m["vsb_initialized_count"] = double(s.vsb.initialized_count());

  if (suite == "text_control") {
    // Both arms are scored on the subset task with the task's own text anchors.
    const TextualSemanticsBank task = subset_tsb(gen_text_anchors(*data.world), cfg.tsb.subset);
    const TextualSemanticsBank full = gen_text_anchors(*data.world);
    std::vector<Index> cats;
    for (const auto& n : cfg.tsb.subset) cats.push_back(full.index_of(n));
    const Batch sub = restrict_to_categories(data.eval, cats);
    m["zeroshot_acc"] = zeroshot_eval(s.student, sub, task).accuracy;
    m["teacher_zeroshot_acc"] = zeroshot_eval_teacher(sub, task).accuracy;
    return m;
  }

  const Matrix<double> anchors = effective_text_anchors(s, tsb);
  const EvalReport rep = evaluate_state(s, tsb, data, cfg, false);
  m["zeroshot_acc"] = rep.zeroshot_accuracy;
  m["teacher_zeroshot_acc"] = *rep.teacher_zeroshot_accuracy;
  m["kl_textual"] = rep.mean_kl_teacher_student_textual;
  m["kl_visual"] = rep.mean_kl_teacher_student_visual;
  if (s.projection) {
    m["anchor_cos_init"] = mean_pairwise_cosine(anchors_init);
    m["anchor_cos_final"] = mean_pairwise_cosine(anchors);
    m["anchor_norm_init"] = mean_column_norm(anchors_init);
    m["anchor_norm_final"] = mean_column_norm(anchors);
    // Zero-shot against the world's own text anchors carried through the trained head.
    m["zeroshot_acc_world_text"] =
        zeroshot_eval(s.student, data.eval, project_anchors(*s.projection, tsb.anchors()).anchors)
            .accuracy;
  }
  return m;
}

unsigned suite_thread_count(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LGD_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    throw ConfigError("LGD_THREADS must be a positive integer, got '" + std::string(env) + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

SuiteResult run_suite(const std::string& suite, const RunConfig& base,
                      const std::vector<std::uint64_t>& seeds, unsigned threads) {
  const auto arms = suite_arms(suite, base);
  SuiteResult r;
  r.suite = suite;
  r.seeds = seeds;
  for (const auto& a : arms) r.arms.push_back(a.name);
  for (auto s : seeds) {
    for (const auto& a : arms) {
      CellResult c;
      c.arm = a.name;
      c.seed = s;
      r.cells.push_back(std::move(c));
    }
  }
  const unsigned n_threads =
      std::min<unsigned>(suite_thread_count(threads), static_cast<unsigned>(r.cells.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < r.cells.size();) {
      CellResult& c = r.cells[k];
      const ArmSpec& a = arms[k % arms.size()];
      try {
        c.metrics = run_cell(suite, a, c.seed);
        c.ok = true;
      } catch (const std::exception& e) {
        c.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return r;
}

std::string suite_csv(const SuiteResult& r) {
  std::ostringstream out;
  out << "arm,seed,metric,value\n";
  for (const auto& c : r.cells) {
    if (!c.ok) {
      out << c.arm << ',' << c.seed << ",failed,1\n";
      continue;
    }
    for (const auto& [k, v] : c.metrics) {
      out << c.arm << ',' << c.seed << ',' << k << ',' << format_double(v) << '\n';
    }
  }
  return out.str();
}

namespace {

std::string fixed(double v, int prec = 4) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(prec);
  o << v;
  return o.str();
}

}  // namespace

std::string suite_summary(const SuiteResult& r) {
  std::ostringstream out;
  out << "suite " << r.suite << ": " << r.arms.size() << " arms x " << r.seeds.size() << " seeds\n";
  std::vector<std::string> metrics;
  for (const auto& c : r.cells) {
    for (const auto& [k, v] : c.metrics) {
      if (std::find(metrics.begin(), metrics.end(), k) == metrics.end()) metrics.push_back(k);
    }
  }
  std::sort(metrics.begin(), metrics.end());
  for (const auto& metric : metrics) {
    out << "\n" << metric << "\n";
    for (const auto& arm : r.arms) {
      const auto ms = mean_se(r.values(arm, metric));
      out << "  " << arm << ": mean " << fixed(ms.mean) << " se " << fixed(ms.se) << " (n=" << ms.n
          << ")\n";
    }
    for (std::size_t i = 0; i < r.arms.size(); ++i) {
      for (std::size_t j = i + 1; j < r.arms.size(); ++j) {
        const auto d = paired_difference(r, r.arms[i], r.arms[j], metric);
        out << "  " << r.arms[i] << " - " << r.arms[j] << ": " << fixed(d.mean) << " se "
            << fixed(d.se) << "\n";
      }
    }
  }
  bool header = false;
  for (const auto& c : r.cells) {
    if (c.ok) continue;
    if (!header) out << "\nfailed cells\n";
    header = true;
    out << "  " << c.arm << " seed " << c.seed << ": " << c.error << "\n";
  }
  return out.str();
}

AlignmentChange alignment_before_after(const RunConfig& cfg) {
  const TrainingData data = make_training_data(cfg);
  const TextualSemanticsBank tsb = make_tsb(cfg, data);
  TrainState init = init_train_state(cfg, data, tsb);
  const StudentNet student0 = init.student;
  const auto proj0 = init.projection;
  TrainResult res = train_distillation(cfg, data, tsb, std::move(init));

  TrainState before = res.state;
  before.student = student0;
  before.projection = proj0;
  const EvalReport b = evaluate_state(before, tsb, data, cfg, false);
  const EvalReport a = evaluate_state(res.state, tsb, data, cfg, false);
  AlignmentChange out;
  out.before = {b.mean_kl_teacher_student_textual, b.mean_kl_teacher_student_visual,
                b.anchor_separation};
  out.after = {a.mean_kl_teacher_student_textual, a.mean_kl_teacher_student_visual,
               a.anchor_separation};
  out.zeroshot_before = b.zeroshot_accuracy;
  out.zeroshot_after = a.zeroshot_accuracy;
  return out;
}

}  // namespace lgd
