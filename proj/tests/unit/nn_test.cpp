#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cascade/error.hpp"
#include "cascade/nn.hpp"
#include "cascade/rng.hpp"
#include "support/oracles.hpp"

namespace cascade::nn {
namespace {

Matrix random_batch(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

MlpConfig config(std::size_t in, std::size_t layers, std::size_t units, bool bn,
                 std::uint64_t seed = 1) {
  MlpConfig c;
  c.input_dim = in;
  c.num_layers = layers;
  c.hidden_units = units;
  c.use_batchnorm = bn;
  c.seed = seed;
  return c;
}

TEST(Init, ShapesAndCounts) {
  const auto p = init(config(22, 5, 32, true));
  ASSERT_EQ(p.layers.size(), 5u);
  EXPECT_EQ(p.layers[0].in_dim(), 22u);
  EXPECT_EQ(p.layers[0].out_dim(), 32u);
  EXPECT_EQ(p.layers[4].out_dim(), 1u);
  EXPECT_FALSE(p.layers[4].bn.has_value());
  for (std::size_t l = 0; l < 4; ++l) EXPECT_TRUE(p.layers[l].bn.has_value());
  // 22*32+32 + 3*(32*32+32) + 32+1 + 4*64 batchnorm
  EXPECT_EQ(p.num_trainable(), 736u + 3u * 1056u + 33u + 256u);
  const auto q = init(config(22, 2, 8, false));
  EXPECT_EQ(q.num_trainable(), 22u * 8 + 8 + 8 + 1);
}

TEST(Init, SeededAndBounded) {
  const auto a = init(config(10, 3, 16, true, 7));
  const auto b = init(config(10, 3, 16, true, 7));
  const auto c = init(config(10, 3, 16, true, 8));
  EXPECT_EQ(a, b);
  EXPECT_NE(a.layers[0].weight, c.layers[0].weight);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const double bound = init_bound(a.layers[l].in_dim(), l + 1 == a.layers.size());
    for (double w : a.layers[l].weight.data()) EXPECT_LE(std::abs(w), bound);
    for (double v : a.layers[l].bias) EXPECT_EQ(v, 0.0);
  }
}

TEST(Init, InvalidConfig) {
  EXPECT_THROW(init(config(0, 2, 8, true)), InvalidArgument);
  EXPECT_THROW(init(config(3, 0, 8, true)), InvalidArgument);
  auto c = config(3, 2, 8, true);
  c.bn_momentum = 1.0;
  EXPECT_THROW(init(c), InvalidArgument);
}

TEST(Forward, MatchesDenseOracleWithoutBatchnorm) {
  Rng rng(41);
  const auto p = init(config(6, 2, 5, false, 3));
  const Matrix x = random_batch(rng, 9, 6);
  oracle::Dense w1(5, std::vector<double>(6)), w2(1, std::vector<double>(5));
  std::vector<double> b1(5);
  for (std::size_t o = 0; o < 5; ++o) {
    for (std::size_t i = 0; i < 6; ++i) w1[o][i] = p.layers[0].weight(o, i);
    w2[0][o] = p.layers[1].weight(0, o);
  }
  const auto out = predict(p, x);
  for (std::size_t r = 0; r < 9; ++r) {
    const std::vector<double> row(x.row(r).begin(), x.row(r).end());
    EXPECT_NEAR(out[r], oracle::one_hidden_forward(row, w1, b1, w2, 0.0), 1e-13);
  }
}

TEST(Forward, BatchnormNormalizesTrainBatches) {
  Rng rng(42);
  const auto p = init(config(22, 5, 32, true, 4));
  Matrix x = random_batch(rng, 16, 22);
  for (double& v : x.data()) v = 5.0 + 30.0 * v;
  const auto pass = forward(p, x, Mode::kTrain);
  for (std::size_t l = 0; l < 4; ++l) {
    const auto& xhat = pass.layers[l].normalized;
    for (std::size_t c = 0; c < xhat.cols(); ++c) {
      double mean = 0, var = 0;
      for (std::size_t r = 0; r < 16; ++r) mean += xhat(r, c);
      mean /= 16;
      for (std::size_t r = 0; r < 16; ++r) var += (xhat(r, c) - mean) * (xhat(r, c) - mean);
      var /= 16;
      EXPECT_LE(std::abs(mean), 1e-6);
      // A column whose pre-activations are all equal normalizes to zeros.
      if (pass.layers[l].batch_var[c] > 0) {
        EXPECT_LE(std::abs(var - 1.0), 1e-6);
      }
    }
  }
}

TEST(Forward, PureAndRunningStatsUpdate) {
  Rng rng(43);
  auto p = init(config(4, 2, 3, true, 5));
  const Matrix x = random_batch(rng, 8, 4);
  const auto before = p;
  const auto pass = forward(p, x, Mode::kTrain);
  EXPECT_EQ(p, before);
  update_running_stats(p, pass);
  const auto& bn = *p.layers[0].bn;
  const auto& cache = pass.layers[0];
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_DOUBLE_EQ(bn.running_mean[c], 0.1 * cache.batch_mean[c]);
    EXPECT_DOUBLE_EQ(bn.running_var[c], 0.9 + 0.1 * cache.batch_var[c] * 8.0 / 7.0);
  }
  // Eval mode uses the running statistics, not the batch.
  const Matrix one = x.select_rows(std::vector<std::size_t>{0});
  const auto single = predict(p, one);
  const auto full = predict(p, x);
  EXPECT_DOUBLE_EQ(single[0], full[0]);
}

TEST(Forward, Errors) {
  const auto p = init(config(4, 2, 3, true));
  EXPECT_THROW(forward(p, Matrix(2, 5), Mode::kEval), InvalidArgument);
  EXPECT_THROW(forward(p, Matrix(0, 4), Mode::kEval), InvalidArgument);
  EXPECT_THROW(forward(p, Matrix(1, 4), Mode::kTrain), InvalidArgument);
  EXPECT_NO_THROW(forward(p, Matrix(1, 4), Mode::kEval));
}

TEST(Loss, LogisticValuesAndStability) {
  const std::vector<double> o{0.0, 2.0, -800.0, 800.0};
  const std::vector<double> t{1.0, 0.0, 1.0, 1.0};
  const auto l = loss(o, t, LossKind::kLogistic);
  const double expected = (std::log(2.0) + std::log1p(std::exp(2.0)) + 800.0 + 0.0) / 4.0;
  EXPECT_NEAR(l.value, expected, 1e-12);
  EXPECT_TRUE(std::isfinite(l.value));
  EXPECT_NEAR(l.grad[0], -0.5 / 4.0, 1e-15);
  EXPECT_NEAR(l.grad[2], -1.0 / 4.0, 1e-15);
  EXPECT_THROW(loss(std::vector<double>{0.0}, std::vector<double>{0.5}, LossKind::kLogistic),
               InvalidArgument);
}

TEST(Loss, ZeroLogitIsLn2) {
  for (double t : {0.0, 1.0})
    EXPECT_DOUBLE_EQ(loss(std::vector<double>{0.0}, std::vector<double>{t}, LossKind::kLogistic).value,
                     std::log(2.0));
}

TEST(Forward, EvalIsRepeatable) {
  Rng rng(47);
  const auto p = init(config(7, 4, 9, true, 2));
  const Matrix x = random_batch(rng, 5, 7);
  EXPECT_EQ(predict(p, x), predict(p, x));
}

TEST(Loss, Squared) {
  const auto l = loss(std::vector<double>{1.0, 3.0}, std::vector<double>{0.0, 1.0},
                      LossKind::kSquared);
  EXPECT_DOUBLE_EQ(l.value, 2.5);
  EXPECT_DOUBLE_EQ(l.grad[0], 1.0);
  EXPECT_DOUBLE_EQ(l.grad[1], 2.0);
}

struct GradCase {
  std::size_t in, layers, units;
  bool bn;
  LossKind kind;
  Mode mode;
};

class GradientCheck : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradientCheck, AnalyticMatchesNumeric) {
  const auto c = GetParam();
  Rng rng(44);
  auto p = init(config(c.in, c.layers, c.units, c.bn, 9));
  // Non-trivial running statistics and affine parameters for eval mode.
  for (auto& l : p.layers)
    if (l.bn)
      for (std::size_t k = 0; k < l.out_dim(); ++k) {
        l.bn->gamma[k] = rng.uniform(0.5, 1.5);
        l.bn->beta[k] = rng.uniform(-0.3, 0.3);
        l.bn->running_mean[k] = rng.uniform(-0.5, 0.5);
        l.bn->running_var[k] = rng.uniform(0.5, 2.0);
      }
  const Matrix x = random_batch(rng, 16, c.in);
  std::vector<double> t(16);
  for (double& v : t)
    v = c.kind == LossKind::kLogistic ? static_cast<double>(rng.below(2)) : rng.normal();
  GradCheckOptions opt;
  opt.mode = c.mode;
  opt.seed = 3;
  const auto r = grad_check(p, x, t, c.kind, opt);
  EXPECT_LE(r.max_rel_error, 1e-4);
  EXPECT_GE(r.checked, std::min<std::size_t>(500, p.num_trainable() - r.skipped_kinks));
}

INSTANTIATE_TEST_SUITE_P(
    Configs, GradientCheck,
    ::testing::Values(GradCase{22, 5, 32, true, LossKind::kLogistic, Mode::kTrain},
                      GradCase{22, 5, 32, true, LossKind::kSquared, Mode::kTrain},
                      GradCase{22, 5, 32, true, LossKind::kLogistic, Mode::kEval},
                      GradCase{22, 5, 32, true, LossKind::kSquared, Mode::kEval},
                      GradCase{86, 2, 8, true, LossKind::kLogistic, Mode::kTrain},
                      GradCase{86, 2, 8, true, LossKind::kSquared, Mode::kEval},
                      GradCase{10, 3, 6, false, LossKind::kSquared, Mode::kTrain},
                      GradCase{5, 1, 1, false, LossKind::kLogistic, Mode::kEval}));

TEST(GradientCheckTest, DetectsWrongGradient) {
  Rng rng(45);
  const auto p = init(config(6, 3, 8, true, 2));
  const Matrix x = random_batch(rng, 16, 6);
  std::vector<double> t(16, 1.0);
  for (std::size_t i = 0; i < 8; ++i) t[i] = 0.0;
  const auto pass = forward(p, x, Mode::kTrain);
  const auto l = loss(pass.outputs, t, LossKind::kLogistic);
  auto g = backward(p, pass, l.grad);
  for (double& v : g.layers[0].weight.data()) v *= 1.1;
  GradCheckOptions opt;
  opt.samples = 100000;
  EXPECT_GT(compare_gradients(p, x, t, LossKind::kLogistic, g, opt).max_rel_error, 1e-2);
}

TEST(Adam, SingleStepClosedForm) {
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{2.0, -0.5, 0.0};
  std::vector<double> m(3, 0.0), v(3, 0.0);
  AdamConfig hp;
  hp.lr = 0.1;
  adam_update(p, g, m, v, 1, hp);
  EXPECT_NEAR(p[0], 1.0 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-12);
  EXPECT_NEAR(p[1], -2.0 + 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_EQ(p[2], 0.5);
  EXPECT_NEAR(m[0], 0.2, 1e-15);
  EXPECT_NEAR(v[0], 0.004, 1e-15);
}

TEST(Adam, SecondStepMatchesHandRecursion) {
  std::vector<double> p{0.0};
  std::vector<double> m{0.0}, v{0.0};
  AdamConfig hp;
  hp.lr = 0.01;
  adam_update(p, std::vector<double>{1.0}, m, v, 1, hp);
  adam_update(p, std::vector<double>{3.0}, m, v, 2, hp);
  const double m2 = 0.9 * 0.1 + 0.1 * 3.0;
  const double v2 = 0.999 * 0.001 + 0.001 * 9.0;
  const double mhat = m2 / (1 - 0.81), vhat = v2 / (1 - 0.999 * 0.999);
  const double first = -0.01 * 1.0 / (1.0 + 1e-8);
  EXPECT_NEAR(p[0], first - 0.01 * mhat / (std::sqrt(vhat) + 1e-8), 1e-12);
}

TEST(Adam, DescendsConvexQuadratic) {
  std::vector<double> p{3.0, -1.5};
  std::vector<double> m(2), v(2);
  AdamConfig hp;
  hp.lr = 0.05;
  auto f = [&] { return p[0] * p[0] + 4.0 * p[1] * p[1]; };
  double prev = f();
  for (std::uint64_t s = 1; s <= 3; ++s) {
    const std::vector<double> g{2.0 * p[0], 8.0 * p[1]};
    adam_update(p, g, m, v, s, hp);
    EXPECT_LT(f(), prev);
    prev = f();
  }
}

TEST(Adam, RejectsNonFinite) {
  std::vector<double> p{1.0}, m{0.0}, v{0.0};
  const std::vector<double> g{std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(adam_update(p, g, m, v, 1, {}), Error);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_THROW(adam_update(p, std::vector<double>{1.0}, m, v, 0, {}), InvalidArgument);
}

TEST(Adam, StepOnNetworkMovesEveryTensor) {
  Rng rng(46);
  auto p = init(config(4, 3, 5, true, 6));
  const Matrix x = random_batch(rng, 16, 4);
  std::vector<double> t(16);
  for (double& v : t) v = rng.normal();
  auto state = adam_init(p, {});
  const auto before = p;
  const auto pass = forward_train(p, x);
  const auto g = backward(p, pass, loss(pass.outputs, t, LossKind::kSquared).grad);
  adam_step(p, g, state);
  EXPECT_EQ(state.step, 1u);
  EXPECT_NE(p.layers[0].weight, before.layers[0].weight);
  EXPECT_NE(p.layers[2].bias, before.layers[2].bias);
}

}  // namespace
}  // namespace cascade::nn
