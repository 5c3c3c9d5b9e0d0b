#include <gtest/gtest.h>

#include "gdp/error.hpp"
#include "gdp/ops.hpp"
#include "oracles.hpp"
#include "toy_graphs.hpp"

namespace gdp {
namespace {

using testing::gradcheck;
using testing::random_tensor;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<Scalar>(5)), Error);
  EXPECT_THROW(Tensor(Shape{2, 0}), Error);
  const Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(numel(t.shape()), t.size());
}

TEST(Tensor, GradBufferMatchesData) {
  Tensor t(Shape{4}, 0);
  EXPECT_FALSE(t.has_grad());
  t.set_requires_grad(true);
  ASSERT_TRUE(t.has_grad());
  EXPECT_EQ(t.grad().size(), t.size());
}

TEST(Backward, SumGivesOnes) {
  Tensor x = random_tensor({2, 3, 4}, 1);
  x.set_requires_grad(true);
  Tape tape;
  tape.backward(sum(tape.parameter(x)));
  for (auto g : x.grad()) EXPECT_EQ(g, 1);
}

TEST(Backward, RejectsNonScalarLoss) {
  Tensor x = random_tensor({3}, 2);
  x.set_requires_grad(true);
  Tape tape;
  const Var v = relu(tape.parameter(x));
  try {
    tape.backward(v);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Backward, GradientsAccumulateUntilZeroed) {
  Tensor x = random_tensor({5}, 3);
  x.set_requires_grad(true);
  for (int round = 0; round < 2; ++round) {
    Tape tape;
    const Var p = tape.parameter(x);
    tape.backward(sum(mul(p, p)));
  }
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 4 * x[i]);
  x.zero_grad();
  for (auto g : x.grad()) EXPECT_EQ(g, 0);
}

TEST(Backward, ReusedVariableSumsContributions) {
  Tensor x(Shape{1}, 3.0);
  x.set_requires_grad(true);
  Tape tape;
  const Var p = tape.parameter(x);
  tape.backward(sum(add(mul(p, p), scale(p, 2))));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2 * 3.0 + 2);
}

TEST(Backward, CompositeThreeLayerNetMatchesFiniteDifferences) {
  const Tensor input = random_tensor({2, 2, 6, 6}, 10);
  const std::vector<int> labels{1, 3};
  std::vector<Tensor> params{random_tensor({3, 2, 3, 3}, 11, 0.5), random_tensor({3}, 12, 0.2),
                             random_tensor({4, 3, 3, 3}, 13, 0.5), random_tensor({5, 4}, 14, 0.5),
                             random_tensor({5}, 15, 0.1)};
  const double err = gradcheck(params, [&](Tape& t, const std::vector<Var>& p) {
    Var x = conv2d(t.constant(input), p[0], 1, 1, p[1]);
    x = relu(x);
    x = conv2d(x, p[2], 2, 0);
    x = relu(x);
    x = global_avgpool(x);
    return softmax_cross_entropy(dense(x, p[3], p[4]), labels);
  });
  EXPECT_LT(err, 1e-4);
}

TEST(Forward, Deterministic) {
  const auto g = testing::with_random_weights(testing::skip_block(), 5);
  const Tensor x = random_tensor({3, 3, 8, 8}, 6);
  const Tensor a = predict(g, x);
  const Tensor b = predict(g, x);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Tape, NonFiniteOutputIsAnError) {
  Tensor x(Shape{2}, 1e200);
  Tape tape;
  const Var v = tape.constant(x);
  try {
    mul(v, v);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFinite);
  }
}

}  // namespace
}  // namespace gdp
