#include <cmath>

#include <gtest/gtest.h>

#include "gedlab/errors.hpp"
#include "test_helpers.hpp"

namespace gedlab {
namespace {

using testing::random_tensor;

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

TEST(Tensor, RejectsSizeMismatch) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), DimensionError);
  EXPECT_EQ(Tensor::scalar(3.0).numel(), 1u);
}

TEST(Matmul, IdentityAndHandComputed) {
  Graph g(false);
  Var eye = g.constant(mat(2, 2, {1, 0, 0, 1}));
  Var col = g.constant(mat(2, 1, {3, 4}));
  EXPECT_EQ(matmul(eye, col).value().data, (std::vector<double>{3, 4}));

  Var a = g.constant(mat(2, 2, {1, 2, 3, 4}));
  Var b = g.constant(mat(2, 1, {5, 6}));
  EXPECT_EQ(matmul(a, b).value().data, (std::vector<double>{17, 39}));
}

TEST(Matmul, ZeroMatrixGivesZero) {
  Rng rng(3);
  Graph g(false);
  Var z = g.constant(Tensor::zeros({3, 4}));
  Var x = g.constant(random_tensor({4, 5}, rng));
  for (double v : matmul(z, x).value().data) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Graph g(false);
  Var a = g.constant(Tensor::zeros({2, 3}));
  Var b = g.constant(Tensor::zeros({4, 5}));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("[2x3]"), std::string::npos) << what;
    EXPECT_NE(what.find("[4x5]"), std::string::npos) << what;
  }
}

TEST(Softmax, AnalyticCases) {
  Graph g(false);
  auto run = [&](std::vector<double> v) {
    const std::size_t n = v.size();
    return softmax(g.constant(mat(1, n, std::move(v))), 1).value().data;
  };
  auto half = run({1, 1});
  EXPECT_NEAR(half[0], 0.5, 1e-15);
  EXPECT_NEAR(half[1], 0.5, 1e-15);
  auto quarter = run({std::log(2.0), 0, 0});
  EXPECT_NEAR(quarter[0], 0.5, 1e-15);
  EXPECT_NEAR(quarter[1], 0.25, 1e-15);
  EXPECT_NEAR(quarter[2], 0.25, 1e-15);
  auto big = run({1000, 0});
  EXPECT_NEAR(big[0], 1.0, 1e-12);
  EXPECT_NEAR(big[1], 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(big[0]) && std::isfinite(big[1]));
}

TEST(Softmax, NormalizedAlongEitherAxisForLargeInputs) {
  Rng rng(11);
  Graph g(false);
  Var x = g.constant(random_tensor({4, 6}, rng, 400.0));
  for (std::size_t axis : {0u, 1u}) {
    const Tensor& y = softmax(x, axis).value();
    const std::size_t outer = axis == 1 ? 4 : 6, inner = axis == 1 ? 6 : 4;
    for (std::size_t o = 0; o < outer; ++o) {
      double total = 0.0;
      for (std::size_t i = 0; i < inner; ++i) {
        const double p = axis == 1 ? y.at(o, i) : y.at(i, o);
        EXPECT_GE(p, 0.0);
        total += p;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, InvalidAxisThrows) {
  Graph g(false);
  EXPECT_THROW(softmax(g.constant(Tensor::zeros({2, 2})), 2), DimensionError);
}

TEST(Relu, ValuesAndSubgradient) {
  Tensor x({3}, {-1.0, 0.0, 2.0});
  x.requires_grad = true;
  Graph g;
  Var y = relu(g.parameter(x));
  EXPECT_EQ(y.value().data, (std::vector<double>{0, 0, 2}));
  g.backward(sum(y));
  EXPECT_EQ(x.grad, (std::vector<double>{0, 0, 1}));
}

TEST(Relu, EqualsMaskedIdentityExactly) {
  Rng rng(5);
  Graph g(false);
  Tensor x = random_tensor({50}, rng);
  const Tensor& y = relu(g.constant(x)).value();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(y.data[i], x.data[i] * (x.data[i] > 0.0 ? 1.0 : 0.0));
  }
}

TEST(CrossEntropy, HandComputedValues) {
  Graph g(false);
  std::vector<std::size_t> t0{0};
  EXPECT_NEAR(cross_entropy(g.constant(mat(1, 2, {0.5, 0.5})), t0).item(), std::log(2.0), 1e-15);
  EXPECT_EQ(cross_entropy(g.constant(mat(1, 2, {1.0, 0.0})), t0).item(), 0.0);
  std::vector<std::size_t> t01{0, 1};
  const double expected = (-std::log(0.9) - std::log(0.75)) / 2.0;
  EXPECT_NEAR(cross_entropy(g.constant(mat(2, 2, {0.9, 0.1, 0.25, 0.75})), t01).item(), expected,
              1e-15);
}

TEST(CrossEntropy, RejectsBadTargetsAndRows) {
  Graph g(false);
  std::vector<std::size_t> bad{2};
  EXPECT_THROW(cross_entropy(g.constant(mat(1, 2, {0.5, 0.5})), bad), std::out_of_range);
  std::vector<std::size_t> ok{0};
  EXPECT_THROW(cross_entropy(g.constant(mat(1, 2, {0.5, 0.6})), ok), std::invalid_argument);
}

TEST(CrossEntropy, ClampsZeroProbability) {
  Graph g(false);
  std::vector<std::size_t> t{1};
  EXPECT_NEAR(cross_entropy(g.constant(mat(1, 2, {1.0, 0.0})), t).item(), -std::log(1e-12), 1e-9);
}

TEST(Graph, ValueReferencesSurviveGrowth) {
  Graph g(false);
  Var x = g.constant(Tensor({2}, {1.5, -2.0}));
  const Tensor& ref = x.value();
  Var y = x;
  for (int k = 0; k < 5000; ++k) y = add(y, x);
  EXPECT_EQ(ref.data, (std::vector<double>{1.5, -2.0}));
  EXPECT_EQ(&ref, &x.value());
}

TEST(Backward, SumAndSquare) {
  Tensor x = Tensor::filled({2, 3}, 1.5);
  x.requires_grad = true;
  {
    Graph g;
    g.backward(sum(g.parameter(x)));
  }
  EXPECT_EQ(x.grad, std::vector<double>(6, 1.0));

  Tensor y({1}, {3.0});
  y.requires_grad = true;
  Graph g;
  Var v = g.parameter(y);
  g.backward(sum(mul(v, v)));
  EXPECT_EQ(y.grad, std::vector<double>{6.0});
}

TEST(Backward, AccumulatesAcrossCalls) {
  Tensor x({1}, {2.0});
  x.requires_grad = true;
  for (int k = 0; k < 2; ++k) {
    Graph g;
    g.backward(sum(scale(g.parameter(x), 3.0)));
  }
  EXPECT_EQ(x.grad, std::vector<double>{6.0});
  x.zero_grad();
  EXPECT_EQ(x.grad, std::vector<double>{0.0});
}

TEST(Backward, NonScalarLossThrows) {
  Tensor x = Tensor::zeros({2});
  x.requires_grad = true;
  Graph g;
  EXPECT_THROW(g.backward(g.parameter(x)), DimensionError);
}

// Quadratic loss: central differences are exact up to roundoff.
TEST(GradCheck, LinearModelSquaredLoss) {
  Rng rng(1);
  Tensor w = random_tensor({3, 2}, rng);
  Tensor b = random_tensor({2}, rng);
  Tensor x = random_tensor({4, 3}, rng);
  auto loss = [&](Graph& g) {
    Var y = add_bias(matmul(g.constant(x), g.parameter(w)), g.parameter(b));
    return sum(mul(y, y));
  };
  auto report = finite_diff_check(loss, {{"w", &w}, {"b", &b}}, 1e-5, 1e-8);
  EXPECT_TRUE(report.passed) << report.max_rel_error << " at " << report.worst_param;
  EXPECT_LT(report.max_rel_error, 1e-8);
  EXPECT_EQ(report.entries_checked, 8u);
}

TEST(GradCheck, DetectsNonDeterministicLoss) {
  Tensor w({1}, {1.0});
  Rng rng(2);
  auto loss = [&](Graph& g) { return sum(scale(g.parameter(w), 1.0 + rng.uniform())); };
  EXPECT_THROW(finite_diff_check(loss, {{"w", &w}}, 1e-5, 1e-4), std::runtime_error);
}

TEST(GradCheck, RejectsEpsOutsideRange) {
  Tensor w({1}, {1.0});
  auto loss = [&](Graph& g) { return sum(g.parameter(w)); };
  EXPECT_THROW(finite_diff_check(loss, {{"w", &w}}, 1e-2, 1e-4), std::invalid_argument);
  EXPECT_THROW(finite_diff_check(loss, {{"w", &w}}, 1e-9, 1e-4), std::invalid_argument);
}

// Each primitive inside a smooth scalar objective.
class PrimitiveGrad : public ::testing::Test {
 protected:
  void expect_grad(const LossBuilder& loss, std::vector<NamedParam> params) {
    auto report = finite_diff_check(loss, params, 1e-5, 1e-4);
    EXPECT_TRUE(report.passed) << "max rel error " << report.max_rel_error << " in "
                               << report.worst_param << "[" << report.worst_index
                               << "] analytic " << report.worst_analytic << " numeric "
                               << report.worst_numeric;
  }
  Rng rng{42};
};

TEST_F(PrimitiveGrad, MatmulBothOperands) {
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  Tensor probe = random_tensor({3, 2}, rng);
  expect_grad([&](Graph& g) { return sum(mul(matmul(g.parameter(a), g.parameter(b)), g.constant(probe))); },
              {{"a", &a}, {"b", &b}});
}

TEST_F(PrimitiveGrad, SharedInputSumsBothContributions) {
  Tensor a = random_tensor({3, 3}, rng);
  expect_grad(
      [&](Graph& g) {
        Var v = g.parameter(a);
        return sum(mul(matmul(v, v), add(v, scale(v, 0.5))));
      },
      {{"a", &a}});
}

TEST_F(PrimitiveGrad, SoftmaxBothAxes) {
  Tensor x = random_tensor({3, 4}, rng), probe = random_tensor({3, 4}, rng);
  for (std::size_t axis : {0u, 1u}) {
    expect_grad([&](Graph& g) { return sum(mul(softmax(g.parameter(x), axis), g.constant(probe))); },
                {{"x", &x}});
  }
}

TEST_F(PrimitiveGrad, ReluAwayFromKink) {
  Tensor x = random_tensor({10}, rng);
  for (double& v : x.data) v += v > 0 ? 0.1 : -0.1;
  Tensor probe = random_tensor({10}, rng);
  expect_grad([&](Graph& g) { return sum(mul(relu(g.parameter(x)), g.constant(probe))); },
              {{"x", &x}});
}

TEST_F(PrimitiveGrad, CrossEntropyThroughSoftmax) {
  Tensor x = random_tensor({4, 3}, rng);
  std::vector<std::size_t> targets{0, 2, 1, 2};
  expect_grad([&](Graph& g) { return cross_entropy(softmax(g.parameter(x), 1), targets); },
              {{"x", &x}});
}

TEST_F(PrimitiveGrad, BiasConcatSlice) {
  Tensor a = random_tensor({3, 2}, rng), b = random_tensor({3, 3}, rng);
  Tensor bias = random_tensor({5}, rng), probe = random_tensor({3, 3}, rng);
  expect_grad(
      [&](Graph& g) {
        Var c = add_bias(concat_cols({g.parameter(a), g.parameter(b)}), g.parameter(bias));
        Var s = slice_cols(c, 1, 3);
        return sum(mul(mul(s, s), g.constant(probe)));
      },
      {{"a", &a}, {"b", &b}, {"bias", &bias}});
}

TEST_F(PrimitiveGrad, EmbeddingWithRepeatedIds) {
  Tensor table = random_tensor({5, 3}, rng), probe = random_tensor({4, 3}, rng);
  std::vector<std::size_t> ids{4, 1, 4, 0};
  expect_grad(
      [&](Graph& g) {
        Var e = embedding(g.parameter(table), ids);
        return sum(mul(mul(e, e), g.constant(probe)));
      },
      {{"table", &table}});
}

TEST_F(PrimitiveGrad, ScaleRows) {
  Tensor x = random_tensor({4, 3}, rng), w = random_tensor({4, 1}, rng);
  Tensor probe = random_tensor({4, 3}, rng);
  expect_grad([&](Graph& g) { return sum(mul(scale_rows(g.parameter(x), g.parameter(w)), g.constant(probe))); },
              {{"x", &x}, {"w", &w}});
}

TEST_F(PrimitiveGrad, LayerNorm) {
  Tensor x = random_tensor({3, 6}, rng), gain = random_tensor({6}, rng);
  Tensor bias = random_tensor({6}, rng), probe = random_tensor({3, 6}, rng);
  expect_grad(
      [&](Graph& g) {
        return sum(mul(layer_norm(g.parameter(x), g.parameter(gain), g.parameter(bias)),
                       g.constant(probe)));
      },
      {{"x", &x}, {"gain", &gain}, {"bias", &bias}});
}

TEST_F(PrimitiveGrad, MaskedSelfAttention) {
  const SelfAttentionShape shape{2, 4, 2};
  Tensor q = random_tensor({8, 6}, rng), k = random_tensor({8, 6}, rng);
  Tensor v = random_tensor({8, 6}, rng), probe = random_tensor({8, 6}, rng);
  std::vector<std::uint8_t> mask{1, 1, 1, 0, 1, 1, 0, 0};
  expect_grad(
      [&](Graph& g) {
        Var out = masked_self_attention(g.parameter(q), g.parameter(k), g.parameter(v), shape,
                                        mask, 0.0, {});
        return sum(mul(out, g.constant(probe)));
      },
      {{"q", &q}, {"k", &k}, {"v", &v}});
}

TEST(LayerNorm, RowsNormalizedBeforeAffine) {
  Rng rng(8);
  Graph g(false);
  Tensor x = random_tensor({5, 7}, rng, 3.0);
  const Tensor& y = layer_norm(g.constant(x), g.constant(Tensor::filled({7}, 1.0)),
                               g.constant(Tensor::zeros({7})))
                        .value();
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 7; ++c) mean += y.at(r, c);
    mean /= 7;
    for (std::size_t c = 0; c < 7; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
    var /= 7;
    EXPECT_NEAR(mean, 0.0, 1e-8);
    EXPECT_NEAR(var, 1.0, 1e-8);
  }
}

TEST(Dropout, IdentityInEvalAndAtZeroRate) {
  Rng data(4);
  Tensor x = random_tensor({20}, data);
  Graph g(false);
  Var v = g.constant(x);
  EXPECT_EQ(dropout(v, 0.5, {}).value().data, x.data);
  Rng rng(1);
  EXPECT_EQ(dropout(v, 0.0, {&rng}).value().data, x.data);
}

TEST(Dropout, InvertedScalingPreservesMean) {
  Rng rng(9);
  const std::size_t n = 20000;
  Tensor x = Tensor::filled({n}, 2.0);
  Graph g(false);
  const Tensor& y = dropout(g.constant(x), 0.3, {&rng}).value();
  double mean = 0.0;
  std::size_t zeros = 0;
  for (double v : y.data) {
    mean += v;
    if (v == 0.0) ++zeros;
    else EXPECT_NEAR(v, 2.0 / 0.7, 1e-12);
  }
  mean /= static_cast<double>(n);
  EXPECT_NEAR(mean, 2.0, 0.02 * 2.0);
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.3, 0.02);
}

TEST(Dropout, GradientFollowsMask) {
  Rng rng(6);
  Tensor x = Tensor::filled({100}, 1.0);
  x.requires_grad = true;
  Graph g;
  Var y = dropout(g.parameter(x), 0.5, {&rng});
  g.backward(sum(y));
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(x.grad[i], y.value().data[i]);
}

TEST(MaskedAttention, SingleRealKeyAttendsToItself) {
  Rng rng(12);
  Graph g(false);
  Tensor q = random_tensor({4, 4}, rng), k = random_tensor({4, 4}, rng), v = random_tensor({4, 4}, rng);
  std::vector<std::uint8_t> mask{0, 0, 1, 0};
  const Tensor& out = masked_self_attention(g.constant(q), g.constant(k), g.constant(v), {1, 4, 2},
                                            mask, 0.0, {})
                          .value();
  for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(out.at(2, c), v.at(2, c));
}

}  // namespace
}  // namespace gedlab
