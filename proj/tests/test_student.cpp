// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "lgd/optim.hpp"
#include "support/gradcheck.hpp"

namespace lgd {
namespace {

using testing::max_relative_error;
using testing::numeric_gradient;

TEST(StudentForward, ZeroWeightsPositiveBias) {
  StudentNet net(student_spec(3, {4}, 2));
  net.bias(1) << 3, 4;
  const auto out = net.forward(Matrix<double>::Random(5, 3));
  for (Index i = 0; i < 5; ++i) {
    EXPECT_NEAR(out.output(i, 0), 0.6, 1e-15);
    EXPECT_NEAR(out.output(i, 1), 0.8, 1e-15);
  }
}

TEST(StudentForward, IdentityLayer) {
  StudentNet net(student_spec(3, {}, 3));
  net.weight(0) = Matrix<double>::Identity(3, 3);
  Matrix<double> x(1, 3);
  x << 0.48, 0.6, 0.64;
  EXPECT_LE((net.forward(x).output - x).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(StudentForward, MatchesLayerByLayerOracle) {
  CounterRng rng(1, "t");
  StudentNet net(student_spec(5, {7, 6}, 4));
  net.init_random(rng);
  for (Index l = 0; l < net.num_layers(); ++l) net.bias(l) = normal_matrix(1, net.bias(l).cols(), 0.3, rng);
  const Matrix<double> x = normal_matrix(9, 5, 1.0, rng);
  const Matrix<double> got = net.forward(x).output;
  for (Index i = 0; i < 9; ++i) {
    std::vector<double> h(x.row(i).data(), x.row(i).data() + 5);
    for (Index l = 0; l < net.num_layers(); ++l) {
      const auto& w = net.parameters()[2 * l].value;
      const auto& b = net.parameters()[2 * l + 1].value;
      std::vector<double> y(w.cols());
      for (Index o = 0; o < w.cols(); ++o) {
        double s = b(0, o);
        for (Index k = 0; k < w.rows(); ++k) s += h[k] * w(k, o);
        y[o] = (l + 1 < net.num_layers()) ? std::max(0.0, s) : s;
      }
      h = y;
    }
    double n = 0;
    for (double v : h) n += v * v;
    n = std::sqrt(n);
    for (Index o = 0; o < 4; ++o) EXPECT_NEAR(got(i, o), h[o] / n, 1e-12);
    EXPECT_NEAR(got.row(i).norm(), 1.0, 1e-9);
  }
}

TEST(StudentForward, ShapeMismatch) {
  StudentNet net(student_spec(3, {4}, 2));
  EXPECT_THROW(net.forward(Matrix<double>::Zero(2, 4)), ShapeError);
  EXPECT_EQ(net.parameter_count(), 3 * 4 + 4 + 4 * 2 + 2);
}

TEST(StudentForward, ZeroOutputFlagged) {
  StudentNet net(student_spec(3, {}, 2));
  const auto out = net.forward(Matrix<double>::Ones(2, 3));
  EXPECT_TRUE(out.cache.zero_rows[0]);
  EXPECT_EQ(out.output(0, 0), 0.0);
}

TEST(StudentBackward, ZeroUpstreamGivesZeroGradients) {
  CounterRng rng(2, "t");
  StudentNet net(student_spec(4, {5}, 3));
  net.init_random(rng);
  const auto fwd = net.forward(normal_matrix(6, 4, 1.0, rng));
  for (const auto& g : net.backward(fwd.cache, Matrix<double>::Zero(6, 3))) EXPECT_TRUE(g.isZero(0));
}

TEST(StudentBackward, LinearLayerWithoutNormalization) {
  Mlp<double> net(MlpSpec{3, {}, 2, false, true});
  Matrix<double> x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  const auto fwd = net.forward(x);
  // loss = sum of outputs -> dW = x^T 1, db = column count.
  const auto g = net.backward(fwd.cache, Matrix<double>::Ones(2, 2));
  Matrix<double> dw(3, 2);
  dw << 5, 5, 7, 7, 9, 9;
  EXPECT_EQ(g[0], dw);
  EXPECT_EQ(g[1], Matrix<double>::Constant(1, 2, 2.0));
}

TEST(StudentBackward, FiniteDifferences) {
  CounterRng rng(3, "t");
  for (int trial = 0; trial < 10; ++trial) {
    StudentNet net(student_spec(2 + rng.below(5), {Index(3 + rng.below(5)), Index(2 + rng.below(4))},
                                2 + rng.below(6)));
    net.init_random(rng);
    for (Index l = 0; l < net.num_layers(); ++l) {
      net.bias(l) = normal_matrix(1, net.bias(l).cols(), 0.2, rng);
    }
    const Matrix<double> x = normal_matrix(4, net.input_dim(), 1.0, rng);
    const Matrix<double> c = normal_matrix(4, net.output_dim(), 1.0, rng);
    // loss = <c, z>
    auto f = [&] { return net.forward(x).output.cwiseProduct(c).sum(); };
    const auto fwd = net.forward(x);
    const auto grads = net.backward(fwd.cache, c);
    auto& params = net.mutable_parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      EXPECT_LE(max_relative_error(grads[k], numeric_gradient(params[k].value, f)), 1e-6)
          << params[k].name;
    }
  }
}

TEST(StudentBackward, StaleCacheRejected) {
  StudentNet net(student_spec(2, {3}, 2));
  const auto fwd = net.forward(Matrix<double>::Ones(1, 2));
  net.weight(0)(0, 0) = 1;
  EXPECT_THROW(net.backward(fwd.cache, Matrix<double>::Ones(1, 2)), StateError);
}

TEST(ProjectionHead, OutputDimAndUnnormalized) {
  ProjectionHead head(projection_spec(5, 3));
  CounterRng rng(4, "t");
  head.init_random(rng);
  const auto p = project_anchors(head, Matrix<double>::Identity(5, 4));
  EXPECT_EQ(p.anchors.rows(), 3);
  EXPECT_EQ(p.anchors.cols(), 4);
  EXPECT_LE((p.anchors - head.weight(0).transpose().leftCols(4)).cwiseAbs().maxCoeff(), 1e-15);
}

ParameterList<double> one_param(double v, bool decay = true) {
  return {{"w", Matrix<double>::Constant(1, 1, v), decay}};
}

TEST(Sgd, PlainStep) {
  auto p = one_param(1.0);
  SgdMomentum<double> opt(p, SgdConfig{0.9, 0.0});
  opt.step(p, {Matrix<double>::Constant(1, 1, 0.5)}, 0.1);
  EXPECT_DOUBLE_EQ(p[0].value(0, 0), 1.0 - 0.1 * 0.5);
}

TEST(Sgd, MomentumCoasting) {
  auto p = one_param(1.0);
  SgdMomentum<double> opt(p, SgdConfig{0.9, 0.0});
  opt.mutable_buffers()[0](0, 0) = 2.0;
  opt.step(p, {Matrix<double>::Zero(1, 1)}, 0.1);
  EXPECT_NEAR(p[0].value(0, 0), 1.0 - 0.1 * 0.9 * 2.0, 1e-15);
}

TEST(Sgd, TwoStepClosedForm) {
  CounterRng rng(5, "t");
  for (int trial = 0; trial < 100; ++trial) {
    const double p0 = rng.normal(), g1 = rng.normal(), g2 = rng.normal();
    const double lr1 = rng.uniform(), lr2 = rng.uniform(), wd = 0.01 * rng.uniform(), mu = 0.9;
    auto p = one_param(p0);
    SgdMomentum<double> opt(p, SgdConfig{mu, wd});
    opt.step(p, {Matrix<double>::Constant(1, 1, g1)}, lr1);
    opt.step(p, {Matrix<double>::Constant(1, 1, g2)}, lr2);
    const double b1 = g1 + wd * p0;
    const double p1 = p0 - lr1 * b1;
    const double expect = p0 - lr1 * b1 - lr2 * (mu * b1 + g2 + wd * p1);
    EXPECT_NEAR(p[0].value(0, 0), expect, 1e-12);
  }
}

TEST(Sgd, DecayOnlyOnFlaggedParameters) {
  ParameterList<double> p{{"w", Matrix<double>::Constant(1, 1, 2.0), true},
                          {"b", Matrix<double>::Constant(1, 1, 2.0), false}};
  SgdMomentum<double> opt(p, SgdConfig{0.9, 0.1});
  opt.step(p, {Matrix<double>::Zero(1, 1), Matrix<double>::Zero(1, 1)}, 1.0);
  EXPECT_NEAR(p[0].value(0, 0), 2.0 - 0.2, 1e-15);
  EXPECT_EQ(p[1].value(0, 0), 2.0);
  StudentNet net(student_spec(2, {3}, 2));
  for (const auto& q : net.parameters()) {
    EXPECT_EQ(q.decay, q.name.find("weight") != std::string::npos) << q.name;
  }
}

TEST(Sgd, NonFiniteGradientReportsStep) {
  auto p = one_param(1.0);
  SgdMomentum<double> opt(p, SgdConfig{});
  try {
    opt.step(p, {Matrix<double>::Constant(1, 1, NAN)}, 0.1, 17);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
  }
  EXPECT_EQ(p[0].value(0, 0), 1.0);
  EXPECT_THROW(opt.step(p, {}, 0.1), ShapeError);
}

TEST(Schedule, KeyValues) {
  CosineWarmupSchedule s{0.03, 5, 30};
  const double w = s.warmup_fraction();
  EXPECT_NEAR(s.lr_at(w), 0.03, 1e-12);
  EXPECT_NEAR(s.lr_at(1.0), 0.0, 1e-12);
  EXPECT_NEAR(s.lr_at((1 + w) / 2), 0.015, 1e-12);
  EXPECT_EQ(s.lr_at(0.0), 0.0);
  EXPECT_NEAR(s.lr_at(w / 2), 0.015, 1e-15);
}

TEST(Schedule, ContinuousAtJunctionAndMonotone) {
  CosineWarmupSchedule s{0.1, 3, 20};
  const double w = s.warmup_fraction();
  EXPECT_NEAR(s.lr_at(std::nextafter(w, 0.0)), 0.1, 1e-12);
  EXPECT_NEAR(s.lr_at(std::nextafter(w, 1.0)), 0.1, 1e-12);
  double prev = s.lr_at(w);
  for (int i = 1; i <= 100; ++i) {
    const double t = w + (1 - w) * i / 100.0;
    EXPECT_LE(s.lr_at(t), prev + 1e-15);
    prev = s.lr_at(t);
  }
}

TEST(Schedule, Validation) {
  EXPECT_THROW((CosineWarmupSchedule{0.1, 5, 5}.validate()), ParameterError);
  EXPECT_THROW((CosineWarmupSchedule{-1, 1, 5}.validate()), ParameterError);
  EXPECT_NO_THROW((CosineWarmupSchedule{0.1, 0, 5}.validate()));
}

}  // namespace
}  // namespace lgd
