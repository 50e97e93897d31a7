// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <Eigen/QR>

#include <cmath>

#include "lgd/eval.hpp"
#include "lgd/train.hpp"
#include "support/gradcheck.hpp"

namespace lgd {
namespace {

using testing::random_unit_rows;

WorldParams world4(std::uint64_t seed, double noise) {
  WorldParams p;
  p.num_categories = 4;
  p.dim = 8;
  p.text_dim = 8;
  p.input_dim = 12;
  p.sample_noise_sigma = noise;
  p.text_offset_sigma = 0;
  p.seed = seed;
  return p;
}

TEST(ZeroShot, NoiselessTeacherIsPerfect) {
  const auto w = gen_world(world4(1, 0));
  CounterRng rng(1, "e");
  const auto data = sample_batch(w, 500, rng);
  const auto r = zeroshot_eval_teacher(data, gen_text_anchors(w));
  EXPECT_EQ(r.accuracy, 1.0);
  for (double a : r.per_class_accuracy) EXPECT_EQ(a, 1.0);
}

// Each draw pairs a fresh random-weight student with one sample, so the
// outcomes are independent; a rotation-invariant output layer makes the
// prediction uniform relative to the anchors, giving success rate 1/C.
TEST(ZeroShot, RandomStudentAtChance) {
  const auto w = gen_world(world4(2, 0.15));
  const auto tsb = gen_text_anchors(w);
  CounterRng data_rng(2, "e");
  const Index n = 10000;
  const auto data = sample_batch(w, n, data_rng);
  Index correct = 0;
  for (Index i = 0; i < n; ++i) {
    StudentNet s(student_spec(12, {16}, 8));
    CounterRng init(static_cast<std::uint64_t>(i), "init/student");
    s.init_random(init);
    const auto r = zeroshot_eval(s.forward(data.inputs.row(i)).output, {data.labels[i]},
                                 tsb.anchors());
    correct += r.predictions[0] == data.labels[i];
  }
  const double acc = double(correct) / n;
  EXPECT_NEAR(acc, 0.25, 3 * std::sqrt(0.25 * 0.75 / n));
}

TEST(ZeroShot, DeterministicAndErrors) {
  const auto w = gen_world(world4(3, 0.2));
  CounterRng rng(3, "e");
  const auto data = sample_batch(w, 200, rng);
  const auto tsb = gen_text_anchors(w);
  const auto a = zeroshot_eval_teacher(data, tsb), b = zeroshot_eval_teacher(data, tsb);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_GE(a.accuracy, 0.25);
  EXPECT_THROW(zeroshot_eval(data.teacher_embeddings, {0, 1}, tsb.anchors()), ShapeError);
  EXPECT_THROW(zeroshot_eval(Matrix<double>::Ones(2, 3), {0, 1}, tsb.anchors()), ShapeError);
}

TEST(ZeroShot, MissingClassIsNaN) {
  Matrix<double> z(2, 2);
  z << 1, 0, 0.9, 0.1;
  const auto r = zeroshot_eval(z, {0, 0}, Matrix<double>::Identity(2, 2));
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_TRUE(std::isnan(r.per_class_accuracy[1]));
}

TEST(LinearProbe, SeparableTwoClass) {
  Matrix<double> x(6, 2);
  x << 1, 0.1, 0.9, -0.2, 1.2, 0.3, -1, 0.2, -0.8, -0.1, -1.1, 0;
  const std::vector<Index> y{0, 0, 0, 1, 1, 1};
  const auto r = linear_probe(x, y, x, y, 2);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_THROW(linear_probe(x, {0, 0, 0, 0, 0, 0}, x, y, 2), EvalError);
}

TEST(LinearProbe, NoiselessTeacherEmbeddings) {
  const auto w = gen_world(world4(4, 0));
  CounterRng rng(4, "e");
  const auto train = sample_batch(w, 200, rng), test = sample_batch(w, 200, rng);
  EXPECT_EQ(linear_probe(train.teacher_embeddings, train.labels, test.teacher_embeddings,
                         test.labels, 4)
                .accuracy,
            1.0);
}

TEST(LinearProbe, RotationInvariant) {
  const auto w = gen_world(world4(5, 0.6));
  CounterRng rng(5, "e");
  const auto train = sample_batch(w, 300, rng), test = sample_batch(w, 300, rng);
  Eigen::HouseholderQR<Matrix<double>> qr(normal_matrix(8, 8, 1.0, rng));
  const Matrix<double> q = qr.householderQ();
  const auto a = linear_probe(train.teacher_embeddings, train.labels, test.teacher_embeddings,
                              test.labels, 4);
  const auto b = linear_probe(train.teacher_embeddings * q, train.labels,
                              test.teacher_embeddings * q, test.labels, 4);
  EXPECT_NEAR(a.accuracy, b.accuracy, 1.0 / 300 + 1e-12);
  EXPECT_NEAR(a.final_loss, b.final_loss, 1e-6);
}

TEST(LinearProbe, LabelFraction) {
  const auto w = gen_world(world4(6, 0.1));
  CounterRng rng(6, "e");
  const auto train = sample_batch(w, 400, rng), test = sample_batch(w, 200, rng);
  ProbeConfig cfg;
  cfg.label_fraction = 0.1;
  const auto r = linear_probe(train.teacher_embeddings, train.labels, test.teacher_embeddings,
                              test.labels, 4, cfg);
  EXPECT_GT(r.accuracy, 0.9);
  cfg.label_fraction = 0;
  EXPECT_THROW(linear_probe(train.teacher_embeddings, train.labels, test.teacher_embeddings,
                            test.labels, 4, cfg),
               ParameterError);
}

TEST(Alignment, ZeroWhenStudentEqualsTeacher) {
  CounterRng rng(7, "e");
  const Matrix<double> z = random_unit_rows(20, 6, rng);
  const Matrix<double> l = random_unit_rows(4, 6, rng).transpose();
  const VisualSemanticsBank v(random_unit_rows(4, 6, rng).transpose(), std::vector<bool>(4, true),
                              0.999);
  LossConfig cfg;
  cfg.tau_student = cfg.tau_teacher;
  const auto d = alignment_diagnostics(z, z, l, v, cfg);
  EXPECT_NEAR(d.mean_kl_textual, 0.0, 1e-9);
  EXPECT_NEAR(d.mean_kl_visual, 0.0, 1e-9);
  Matrix<double> noisy = l2_normalize_rows(Matrix<double>(z + normal_matrix(20, 6, 1.0, rng))).values;
  const auto e = alignment_diagnostics(z, noisy, l, v, cfg);
  EXPECT_GT(e.mean_kl_textual, d.mean_kl_textual + 1e-3);
  EXPECT_GT(e.mean_kl_visual, d.mean_kl_visual + 1e-3);
  EXPECT_NEAR(e.anchor_separation, mean_pairwise_cosine(l), 1e-15);
  EXPECT_THROW(alignment_diagnostics(z, noisy.leftCols(5), l, v, cfg), ShapeError);
}

TEST(Restrict, KeepsAndRelabels) {
  Batch b;
  b.inputs = Matrix<double>::Zero(5, 1);
  b.teacher_embeddings = Matrix<double>::Zero(5, 1);
  for (Index i = 0; i < 5; ++i) b.inputs(i, 0) = double(i);
  b.labels = {0, 3, 1, 3, 2};
  const auto r = restrict_to_categories(b, {3, 1});
  EXPECT_EQ(r.labels, (std::vector<Index>{0, 1, 0}));
  EXPECT_EQ(r.inputs(2, 0), 3.0);
}

TEST(EvalReport, JsonHasNullsForMissing) {
  EvalReport r;
  r.per_class_accuracy = {1.0, std::nan("")};
  const auto j = to_json(r);
  EXPECT_TRUE(j["linear_probe_accuracy"].is_null());
  EXPECT_TRUE(j["per_class_accuracy"][1].is_null());
}

// A trained student evaluated both ways; probe accuracy should not fall
// below zero-shot by more than one binomial standard error.
TEST(EvaluateState, ProbeNotWorseThanZeroShot) {
  RunConfig cfg = preset_config("desk");
  cfg.data.world.num_categories = 8;
  cfg.optimizer.epochs = 8;
  cfg.optimizer.warmup_epochs = 1;
  cfg.eval.every_epochs = 0;
  cfg.eval.samples = 1024;
  const auto data = make_training_data(cfg);
  const auto tsb = make_tsb(cfg, data);
  const auto res = train_distillation(cfg, data, tsb);
  const auto rep = evaluate_state(res.state, tsb, data, cfg, true);
  ASSERT_TRUE(rep.linear_probe_accuracy.has_value());
  const double p = rep.zeroshot_accuracy;
  const double se = std::sqrt(std::max(p * (1 - p), 1e-4) / (cfg.eval.samples / 2.0));
  EXPECT_GE(*rep.linear_probe_accuracy, p - se);
  EXPECT_EQ(static_cast<Index>(rep.per_class_accuracy.size()), 8);
}

}  // namespace
}  // namespace lgd
