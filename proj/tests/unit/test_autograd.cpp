#include <gtest/gtest.h>

#include <cmath>

#include "molllama/attention.hpp"
#include "molllama/autograd.hpp"
#include "test_util.hpp"

using namespace molllama;
using molllama::fixtures::gradcheck;

namespace {

ag::Tensor random_tensor(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  ag::Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  }
  return ag::Tensor(m, true);
}

// Fixed random weights turn a matrix-valued output into a scalar loss.
ag::Tensor weighted_sum(const ag::Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  ag::Matrix w(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.normal();
  }
  return ag::sum(ag::mul(y, ag::constant(w)));
}

constexpr double kTol = 1e-6;

}  // namespace

TEST(Autograd, MatmulVariants) {
  Rng rng(1);
  auto a = random_tensor(3, 4, rng), b = random_tensor(4, 5, rng), c = random_tensor(5, 4, rng);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::matmul(a, b), 2); }, {a, b}), kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::matmul_nt(a, c), 3); }, {a, c}), kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::transpose(a), 4); }, {a}), kTol);
}

TEST(Autograd, ElementwiseOps) {
  Rng rng(2);
  auto a = random_tensor(3, 4, rng), b = random_tensor(3, 4, rng), row = random_tensor(1, 4, rng);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::mul(a, b) + ag::scale(a, 0.3) - b, 5); }, {a, b}), kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::add_row(a, row), 6); }, {a, row}), kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::gelu(a), 7); }, {a}), kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::tanh(a), 8); }, {a}), kTol);
}

TEST(Autograd, LayerNorm) {
  Rng rng(3);
  auto x = random_tensor(4, 6, rng), gain = random_tensor(1, 6, rng), bias = random_tensor(1, 6, rng);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::layer_norm(x, gain, bias), 9); }, {x, gain, bias}), 1e-5);
}

TEST(Autograd, MaskedSoftmax) {
  Rng rng(4);
  auto x = random_tensor(3, 5, rng);
  ag::BoolMatrix allow = ag::BoolMatrix::Constant(3, 5, true);
  allow(0, 1) = allow(0, 4) = allow(2, 0) = false;
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::masked_softmax(x, &allow), 10); }, {x}), kTol);
  const ag::Matrix p = ag::masked_softmax(x, &allow).value();
  EXPECT_EQ(p(0, 1), 0.0);
  EXPECT_EQ(p(0, 4), 0.0);
  EXPECT_EQ(p(2, 0), 0.0);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
}

TEST(Autograd, MaskedSoftmaxRejectsEmptyRow) {
  ag::BoolMatrix allow = ag::BoolMatrix::Constant(2, 2, true);
  allow(1, 0) = allow(1, 1) = false;
  EXPECT_THROW(ag::masked_softmax(ag::constant(ag::Matrix::Zero(2, 2)), &allow), std::invalid_argument);
}

TEST(Autograd, Slicing) {
  Rng rng(5);
  auto a = random_tensor(4, 3, rng), b = random_tensor(2, 3, rng), c = random_tensor(4, 2, rng);
  const std::vector<int> ids = {2, 0, 2, 3};
  const std::vector<int> order = {3, 1, 0, 2};
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::rows(a, 1, 2), 11); }, {a}), kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::cols(a, 1, 2), 12); }, {a}), kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::concat_rows(std::vector<ag::Tensor>{a, b}), 13); }, {a, b}),
            kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::concat_cols(std::vector<ag::Tensor>{a, c}), 14); }, {a, c}),
            kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::gather_rows(a, ids), 15); }, {a}), kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::select_rows(a, order), 16); }, {a}), kTol);
}

TEST(Autograd, Reductions) {
  Rng rng(6);
  auto a = random_tensor(4, 3, rng);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::mean_rows(a), 17); }, {a}), kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::max_over_rows(a), 18); }, {a}), kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ag::l2_normalize_rows(a), 19); }, {a}), kTol);
  EXPECT_THROW(ag::l2_normalize_rows(ag::constant(ag::Matrix::Zero(1, 3))), std::domain_error);
}

TEST(Autograd, CrossEntropy) {
  Rng rng(7);
  auto logits = random_tensor(4, 6, rng);
  const std::vector<int> targets = {0, 5, 2, 2};
  const std::vector<double> weights = {1.0, 0.0, 2.0, 1.0};
  EXPECT_LT(gradcheck([&] { return ag::cross_entropy(logits, targets); }, {logits}), kTol);
  EXPECT_LT(gradcheck([&] { return ag::cross_entropy(logits, targets, weights); }, {logits}), kTol);
  const std::vector<double> none = {0.0, 0.0, 0.0, 0.0};
  EXPECT_THROW(ag::cross_entropy(logits, targets, none), std::invalid_argument);
}

TEST(Autograd, UniformLogitsGiveLogVocab) {
  const ag::Tensor logits = ag::constant(ag::Matrix::Constant(3, 262, 0.25));
  const std::vector<int> targets = {1, 100, 261};
  EXPECT_NEAR(ag::cross_entropy(logits, targets).item(), std::log(262.0), 1e-12);
}

TEST(Autograd, GradientsAccumulateAcrossBackwardCalls) {
  ag::Tensor x(ag::Matrix::Constant(1, 1, 2.0), true);
  ag::sum(ag::mul(x, x)).backward();
  ag::sum(ag::scale(x, 3.0)).backward();
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 4.0 + 3.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  ag::Tensor x(ag::Matrix::Constant(2, 2, 1.0), true);
  ag::Tensor y;
  {
    ag::NoGradGuard g;
    EXPECT_FALSE(ag::grad_enabled());
    y = ag::matmul(x, x);
  }
  EXPECT_TRUE(ag::grad_enabled());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Autograd, DropoutForwardAndBackwardShareMask) {
  Rng rng(8);
  ag::Tensor x(ag::Matrix::Constant(20, 16, 1.0), true);
  const ag::Tensor y = ag::dropout(x, 0.5, rng);
  ASSERT_EQ(y.rows(), 20);
  ASSERT_EQ(y.cols(), 16);
  ag::sum(y).backward();
  // Kept entries are scaled by 1/(1-p) and get the same factor as gradient.
  for (Eigen::Index i = 0; i < 20; ++i) {
    for (Eigen::Index j = 0; j < 16; ++j) {
      const double v = y.value()(i, j);
      EXPECT_TRUE(v == 0.0 || v == 2.0);
      EXPECT_EQ(x.grad()(i, j), v);
    }
  }
  Rng other(8);
  EXPECT_EQ(ag::dropout(ag::constant(x.value()), 0.0, other).value(), x.value());
}

TEST(Attention, MaskedKeysGetZeroWeight) {
  Rng rng(9);
  const auto q = random_tensor(3, 8, rng), k = random_tensor(5, 8, rng), v = random_tensor(5, 8, rng);
  AttentionMask mask = AttentionMask::full(3, 5);
  mask.allow(0, 2) = mask.allow(1, 0) = mask.allow(2, 4) = false;
  AttentionTrace trace;
  multi_head_attention(q, k, v, &mask, 2, nullptr, &trace);
  ASSERT_EQ(trace.weights.size(), 2u);
  for (const auto& w : trace.weights) {
    EXPECT_EQ(w(0, 2), 0.0);
    EXPECT_EQ(w(1, 0), 0.0);
    EXPECT_EQ(w(2, 4), 0.0);
  }
}

TEST(Attention, CausalMaskIsLowerTriangular) {
  const AttentionMask m = AttentionMask::causal(4);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) EXPECT_EQ(m.allow(i, j), j <= i);
  }
  AttentionMask bad = AttentionMask::full(2, 2);
  bad.allow.row(1).setConstant(false);
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Attention, GradientsThroughHeadsAndBias) {
  Rng rng(10);
  auto q = random_tensor(3, 4, rng), k = random_tensor(4, 4, rng), v = random_tensor(4, 4, rng);
  const AttentionMask mask = AttentionMask::full(3, 4);
  std::vector<ag::Matrix> bias(2, ag::Matrix::Zero(3, 4));
  bias[1](0, 1) = 0.7;
  EXPECT_LT(gradcheck([&] { return weighted_sum(multi_head_attention(q, k, v, &mask, 2, &bias), 20); }, {q, k, v}),
            1e-5);
}
