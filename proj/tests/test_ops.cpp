#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sargan/errors.hpp"
#include "sargan/ops.hpp"
#include "test_support.hpp"

using namespace sargan;
using sargan::testing::check_gradients;
using sargan::testing::random_tensor;

namespace {

// Direct cross-correlation, the reference the im2col path is checked against.
Tensor conv2d_oracle(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                     std::size_t pad) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), K = w.dim(2);
  const std::size_t Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  Tensor out({N, O, Ho, Wo});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < K; ++ki)
              for (std::size_t kj = 0; kj < K; ++kj) {
                const long ih = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                const long iw = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W))
                  continue;
                acc += x.at(n, c, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw)) *
                       w.at(o, c, ki, kj);
              }
          out.at(n, o, i, j) = acc;
        }
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  return std::inner_product(a.data().begin(), a.data().end(), b.data().begin(), 0.0);
}

Var conv(Tape& t, const Tensor& x, const Tensor& w, const Tensor& b, std::size_t s,
         std::size_t p) {
  return conv2d(t.constant(x), t.constant(w), t.constant(b), s, p);
}

}  // namespace

TEST(Conv2d, HalvesSpatialExtentWithStrideTwo) {
  Rng rng(1);
  Tape t;
  Var y = conv(t, random_tensor({1, 1, 256, 256}, rng), random_tensor({1, 1, 4, 4}, rng),
               Tensor({1}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 128, 128}));
}

TEST(Conv2d, UnitKernelIsIdentity) {
  Tape t;
  Var y = conv(t, Tensor({1, 1, 1, 1}, 0.37), Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0);
  EXPECT_EQ(y.value()[0], 0.37);
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  Rng rng(2);
  const Tensor x = random_tensor({1, 2, 5, 5}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng);
  const Tensor b = random_tensor({3}, rng);
  for (auto [s, p] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
    Tape t;
    const Tensor got = conv(t, x, w, b, s, p).value();
    const Tensor want = conv2d_oracle(x, w, b, s, p);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv2d, RejectsChannelMismatchNamingTheDimension) {
  Tape t;
  try {
    conv(t, Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1}), 1, 0);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
  EXPECT_THROW(conv(t, Tensor({1, 1, 2, 2}), Tensor({1, 1, 5, 5}), Tensor({1}), 1, 0),
               ShapeError);
}

TEST(Conv2d, EightStrideTwoLayersReach1x1From256) {
  std::size_t extent = 256;
  for (int i = 0; i < 8; ++i) extent = conv_output_extent(extent, 4, 2, 1);
  EXPECT_EQ(extent, 1u);
  extent = 256;
  for (int i = 0; i < 8; ++i) extent = conv_output_extent(extent, 5, 2, 2);
  EXPECT_EQ(extent, 1u);
}

TEST(ConvTranspose2d, DoublesSpatialExtent) {
  Rng rng(3);
  Tape t;
  Var y = conv_transpose2d(t.constant(random_tensor({1, 3, 2, 2}, rng)),
                           t.constant(random_tensor({3, 5, 4, 4}, rng)), t.constant(Tensor({5})),
                           2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 5, 4, 4}));
  Var odd = conv_transpose2d(t.constant(random_tensor({1, 3, 2, 2}, rng)),
                             t.constant(random_tensor({3, 5, 5, 5}, rng)),
                             t.constant(Tensor({5})), 2, 2, 1);
  EXPECT_EQ(odd.shape(), (Shape{1, 5, 4, 4}));
}

TEST(ConvTranspose2d, UnitKernelIsIdentity) {
  Rng rng(4);
  const Tensor x = random_tensor({1, 1, 3, 3}, rng);
  Tape t;
  Var y = conv_transpose2d(t.constant(x), t.constant(Tensor({1, 1, 1, 1}, 1.0)),
                           t.constant(Tensor({1})), 1, 0);
  EXPECT_EQ(y.value(), x);
}

TEST(ConvTranspose2d, IsAdjointOfConv2d) {
  Rng rng(5);
  struct Case {
    std::size_t k, s, p, op, h;
  };
  for (const Case& c : {Case{4, 2, 1, 0, 8}, Case{3, 1, 1, 0, 6}, Case{5, 2, 2, 1, 8},
                        Case{3, 2, 1, 1, 8}}) {
    const Tensor w = random_tensor({3, 2, c.k, c.k}, rng);  // conv: O=3, C=2
    const Tensor u = random_tensor({2, 2, c.h, c.h}, rng);
    Tape t;
    const Tensor cu = conv(t, u, w, Tensor({3}), c.s, c.p).value();
    const Tensor v = random_tensor(cu.shape(), rng);
    // The same weight tensor read as Ci x Co x k x k maps 3 -> 2 channels.
    const Tensor ctv = conv_transpose2d(t.constant(v), t.constant(w), t.constant(Tensor({2})),
                                        c.s, c.p, c.op)
                           .value();
    ASSERT_EQ(ctv.shape(), u.shape());
    EXPECT_NEAR(dot(cu, v), dot(u, ctv), 1e-10);
  }
}

TEST(BatchNorm, NormalisesEachChannel) {
  Rng rng(6);
  const Tensor x = random_tensor({2, 3, 5, 5}, rng, -3.0, 7.0);
  BatchNormStats stats{Tensor({3}), Tensor({3}, 1.0)};
  Tape t;
  const Tensor y = batch_norm(t.constant(x), t.constant(Tensor({3}, 1.0)),
                              t.constant(Tensor({3})), stats, {})
                       .value();
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0, ss = 0.0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 25; ++i) s += y[(n * 3 + c) * 25 + i];
    const double mu = s / 50.0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 25; ++i) ss += std::pow(y[(n * 3 + c) * 25 + i] - mu, 2);
    EXPECT_LT(std::abs(mu), 1e-6);
    EXPECT_NEAR(ss / 50.0, 1.0, 1e-4);
  }
}

TEST(BatchNorm, ConstantInputCollapsesToBeta) {
  BatchNormStats stats{Tensor({1}), Tensor({1}, 1.0)};
  Tape t;
  const Tensor y = batch_norm(t.constant(Tensor({1, 1, 4, 4}, 2.5)),
                              t.constant(Tensor({1}, 1.0)), t.constant(Tensor({1}, 3.0)), stats,
                              {})
                       .value();
  for (double v : y.data()) EXPECT_EQ(v, 3.0);
}

TEST(BatchNorm, MatchesDirectFormulaAndUpdatesRunningStats) {
  Rng rng(7);
  const Tensor x = random_tensor({4, 3, 8, 8}, rng);
  const Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
  const Tensor beta = random_tensor({3}, rng);
  BatchNormStats stats{Tensor({3}), Tensor({3}, 1.0)};
  Tape t;
  const Tensor y =
      batch_norm(t.constant(x), t.constant(gamma), t.constant(beta), stats, {}).value();
  const double m = 4.0 * 64.0;
  for (std::size_t c = 0; c < 3; ++c) {
    double mu = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t h = 0; h < 8; ++h)
        for (std::size_t w = 0; w < 8; ++w) mu += x.at(n, c, h, w);
    mu /= m;
    double var = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t h = 0; h < 8; ++h)
        for (std::size_t w = 0; w < 8; ++w) var += std::pow(x.at(n, c, h, w) - mu, 2);
    var /= m;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t h = 0; h < 8; ++h)
        for (std::size_t w = 0; w < 8; ++w) {
          const double want = gamma[c] * (x.at(n, c, h, w) - mu) / std::sqrt(var + 1e-5) + beta[c];
          EXPECT_NEAR(y.at(n, c, h, w), want, 1e-10);
        }
    EXPECT_NEAR(stats.running_mean[c], 0.1 * mu, 1e-12);
    EXPECT_NEAR(stats.running_var[c], 0.9 + 0.1 * var * m / (m - 1.0), 1e-12);
  }
}

TEST(BatchNorm, InferModeUsesRunningStatistics) {
  BatchNormStats stats{Tensor({1}, 2.0), Tensor({1}, 4.0)};
  Tape t;
  BatchNormOptions opts;
  opts.mode = Mode::infer;
  const Tensor y = batch_norm(t.constant(Tensor({1, 1, 1, 1}, 6.0)),
                              t.constant(Tensor({1}, 1.0)), t.constant(Tensor({1})), stats, opts)
                       .value();
  EXPECT_NEAR(y[0], 4.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_EQ(stats.running_mean[0], 2.0);
}

TEST(BatchNorm, RejectsSingleElementGroupInTrainMode) {
  BatchNormStats stats{Tensor({2}), Tensor({2}, 1.0)};
  Tape t;
  EXPECT_THROW(batch_norm(t.constant(Tensor({1, 2, 1, 1})), t.constant(Tensor({2}, 1.0)),
                          t.constant(Tensor({2})), stats, {}),
               ShapeError);
}

TEST(Activation, ScalarValues) {
  Tape t;
  EXPECT_DOUBLE_EQ(activate(t.constant(Tensor({1}, -1.0)), Activation::leaky_relu(0.2)).value()[0],
                   -0.2);
  EXPECT_EQ(activate(t.constant(Tensor({1}, 0.0)), Activation::tanh()).value()[0], 0.0);
  EXPECT_EQ(activate(t.constant(Tensor({1}, 0.0)), Activation::sigmoid()).value()[0], 0.5);
}

TEST(Activation, MatchesScalarMathLibrary) {
  Rng rng(8);
  const Tensor x = random_tensor({257}, rng, -6.0, 6.0);
  Tape t;
  Var in = t.constant(x);
  const Tensor lr = activate(in, Activation::leaky_relu(0.2)).value();
  const Tensor r = activate(in, Activation::relu()).value();
  const Tensor th = activate(in, Activation::tanh()).value();
  const Tensor sg = activate(in, Activation::sigmoid()).value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(lr[i], x[i] >= 0 ? x[i] : 0.2 * x[i], 1e-12);
    EXPECT_NEAR(r[i], std::max(0.0, x[i]), 1e-12);
    EXPECT_NEAR(th[i], std::tanh(x[i]), 1e-12);
    EXPECT_NEAR(sg[i], 1.0 / (1.0 + std::exp(-x[i])), 1e-12);
    EXPECT_GE(th[i], -1.0);
    EXPECT_LE(th[i], 1.0);
    EXPECT_GT(sg[i], 0.0);
    EXPECT_LT(sg[i], 1.0);
  }
}

TEST(Dropout, ZeroRateIsIdentity) {
  Rng rng(9);
  const Tensor x = random_tensor({100}, rng);
  Tape t;
  EXPECT_EQ(dropout(t.constant(x), 0.0, Mode::train, rng).value(), x);
  EXPECT_EQ(dropout(t.constant(x), 0.5, Mode::infer, rng).value(), x);
}

TEST(Dropout, HalfRateSurvivorFractionAndScale) {
  Rng rng(10);
  Tape t;
  const Tensor y = dropout(t.constant(Tensor({1000000}, 1.0)), 0.5, Mode::train, rng).value();
  std::size_t survivors = 0;
  for (double v : y.data()) {
    if (v != 0.0) {
      ++survivors;
      ASSERT_EQ(v, 2.0);
    }
  }
  EXPECT_NEAR(static_cast<double>(survivors) / 1e6, 0.5, 0.002);
}

TEST(Dropout, SameSeedSameMask) {
  Tape t;
  Rng a(11), b(11);
  Var x = t.constant(Tensor({4096}, 1.0));
  EXPECT_EQ(dropout(x, 0.5, Mode::train, a).value(), dropout(x, 0.5, Mode::train, b).value());
}

TEST(Dropout, RejectsRateOfOne) {
  Rng rng(12);
  Tape t;
  EXPECT_THROW(dropout(t.constant(Tensor({3})), 1.0, Mode::train, rng), std::invalid_argument);
}

TEST(ConcatChannels, StacksChannelBlocks) {
  Rng rng(13);
  const Tensor a = random_tensor({2, 3, 4, 4}, rng);
  const Tensor b = random_tensor({2, 5, 4, 4}, rng);
  Tape t;
  const Tensor y = concat_channels(t.constant(a), t.constant(b)).value();
  EXPECT_EQ(y.shape(), (Shape{2, 8, 4, 4}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t w = 0; w < 4; ++w) ASSERT_EQ(y.at(n, c, h, w), a.at(n, c, h, w));
  EXPECT_EQ(concat_channels(t.constant(a), t.constant(Tensor({2, 0, 4, 4}))).value(), a);
}

TEST(ConcatChannels, SkipConnectionShape) {
  Tape t;
  Var a = t.constant(Tensor({1, 64, 128, 128}));
  EXPECT_EQ(concat_channels(a, a).shape(), (Shape{1, 128, 128, 128}));
}

TEST(ConcatChannels, RejectsSpatialMismatch) {
  Tape t;
  EXPECT_THROW(concat_channels(t.constant(Tensor({1, 1, 4, 4})), t.constant(Tensor({1, 1, 4, 5}))),
               ShapeError);
}

TEST(Backward, LinearLossGivesInputAsGradient) {
  Rng rng(14);
  const Tensor x = random_tensor({7}, rng);
  Parameter w(random_tensor({7}, rng));
  Tape t;
  Var loss = sum(mul(t.parameter(w), t.constant(x)));
  t.backward(loss);
  EXPECT_EQ(w.grad, x);
}

TEST(Backward, DisconnectedParameterGetsZeroGradient) {
  Parameter used(Tensor({3}, 1.0));
  Parameter unused(Tensor({4}, 1.0));
  Tape t;
  Var a = t.parameter(used);
  t.parameter(unused);
  t.backward(sum(a));
  EXPECT_EQ(unused.grad, Tensor({4}));
  EXPECT_EQ(used.grad, Tensor({3}, 1.0));
}

TEST(Backward, RejectsNonScalarLoss) {
  Parameter p(Tensor({2}, 1.0));
  Tape t;
  EXPECT_THROW(t.backward(t.parameter(p)), ShapeError);
}

TEST(Backward, SharedInputAccumulatesFromBothUses) {
  Parameter p(Tensor({1}, 3.0));
  Tape t;
  Var a = t.parameter(p);
  t.backward(sum(mul(a, a)));
  EXPECT_EQ(p.grad[0], 6.0);
}

class GradientCheck : public ::testing::Test {
 protected:
  Rng rng{42};

  // Projects a tensor-valued result onto a fixed random direction.
  Var project(Tape& t, Var y, std::uint64_t seed) {
    Rng r(seed);
    return sum(mul(y, t.constant(random_tensor(y.shape(), r))));
  }
};

TEST_F(GradientCheck, Conv2d) {
  Parameter x(random_tensor({2, 2, 6, 6}, rng)), w(random_tensor({3, 2, 4, 4}, rng)),
      b(random_tensor({3}, rng));
  auto res = check_gradients({&x, &w, &b}, [&](Tape& t, std::vector<Var>& v) {
    return project(t, conv2d(v[0], v[1], v[2], 2, 1), 1);
  });
  EXPECT_LE(res.worst_relative_error, 1e-4);
}

TEST_F(GradientCheck, ConvTranspose2d) {
  Parameter x(random_tensor({2, 3, 3, 3}, rng)), w(random_tensor({3, 2, 4, 4}, rng)),
      b(random_tensor({2}, rng));
  auto res = check_gradients({&x, &w, &b}, [&](Tape& t, std::vector<Var>& v) {
    return project(t, conv_transpose2d(v[0], v[1], v[2], 2, 1), 2);
  });
  EXPECT_LE(res.worst_relative_error, 1e-4);
}

TEST_F(GradientCheck, BatchNormTrainAndInfer) {
  Parameter x(random_tensor({2, 3, 4, 4}, rng)), g(random_tensor({3}, rng, 0.5, 1.5)),
      b(random_tensor({3}, rng));
  for (Mode mode : {Mode::train, Mode::infer}) {
    auto res = check_gradients({&x, &g, &b}, [&](Tape& t, std::vector<Var>& v) {
      BatchNormStats stats{Tensor({3}, 0.1), Tensor({3}, 0.8)};
      BatchNormOptions opts;
      opts.mode = mode;
      return project(t, batch_norm(v[0], v[1], v[2], stats, opts), 3);
    });
    EXPECT_LE(res.worst_relative_error, 1e-4);
  }
}

TEST_F(GradientCheck, Activations) {
  Parameter x(random_tensor({64}, rng));
  for (Activation act : {Activation::leaky_relu(0.2), Activation::relu(), Activation::tanh(),
                         Activation::sigmoid()}) {
    auto res = check_gradients({&x}, [&](Tape& t, std::vector<Var>& v) {
      return project(t, activate(v[0], act), 4);
    });
    EXPECT_LE(res.worst_relative_error, 1e-4);
  }
}

TEST_F(GradientCheck, DropoutConcatAndLosses) {
  Parameter a(random_tensor({1, 2, 3, 3}, rng)), b(random_tensor({1, 1, 3, 3}, rng));
  Parameter p(random_tensor({1, 1, 3, 3}, rng, 0.05, 0.95));
  auto res = check_gradients({&a, &b, &p}, [&](Tape& t, std::vector<Var>& v) {
    Rng drop(5);
    Var cat = dropout(concat_channels(v[0], v[1]), 0.5, Mode::train, drop);
    Var l = add(project(t, cat, 6), neg_log_mean(v[2]));
    l = add(l, neg_log1m_mean(v[2]));
    return add(l, l1_mean(v[1], v[2]));
  });
  EXPECT_LE(res.worst_relative_error, 1e-4);
}

TEST(Determinism, SameSeedBitwiseIdenticalForwardAndBackward) {
  auto run = [] {
    Rng rng(77);
    Parameter w(random_tensor({4, 2, 4, 4}, rng)), b(random_tensor({4}, rng));
    const Tensor x = random_tensor({1, 2, 8, 8}, rng);
    Tape t;
    Var y = dropout(activate(conv2d(t.constant(x), t.parameter(w), t.parameter(b), 2, 1),
                             Activation::leaky_relu(0.2)),
                    0.5, Mode::train, rng);
    t.backward(sum(y));
    return std::make_tuple(y.value(), w.grad, b.grad);
  };
  EXPECT_EQ(run(), run());
}
