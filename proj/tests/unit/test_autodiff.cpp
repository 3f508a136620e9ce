#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cebm/autodiff.hpp"
#include "cebm/errors.hpp"
#include "cebm/rng.hpp"
#include "support/gradient_cases.hpp"

using namespace cebm;
using namespace cebm::ad;
using gradcases::op_cases;
using gradcases::random_tensor;

TEST(ForwardOp, IdentityKernelConvolution) {
  Tape tape;
  const Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Var y = conv2d(tape.constant(x), tape.constant(Tensor({1, 1, 1, 1}, {1.0})), 1, 0);
  EXPECT_EQ(y.value().values(), x.values());
}

TEST(ForwardOp, HandComputedCorrelation) {
  Tape tape;
  const std::vector<Var> in{tape.constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})),
                            tape.constant(Tensor({1, 1, 2, 2}, {1, 0, 0, 1}))};
  OpAttrs attrs;
  attrs.stride = 1;
  attrs.padding = 0;
  const Var y = forward_op(OpKind::conv2d, in, attrs);
  ASSERT_EQ(y.value().size(), 1u);
  EXPECT_DOUBLE_EQ(y.value()[0], 5.0);
}

TEST(ForwardOp, SwishAtZero) {
  Tape tape;
  const std::vector<Var> in{tape.constant(Tensor::scalar(0.0))};
  EXPECT_DOUBLE_EQ(forward_op(OpKind::swish, in).value().item(), 0.0);
}

TEST(Backward, SquareDerivative) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(3.0));
  const auto g = tape.backward(square(x));
  EXPECT_DOUBLE_EQ(g[x].item(), 6.0);
}

TEST(Backward, SwishDerivativeAtZero) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(0.0));
  EXPECT_DOUBLE_EQ(tape.backward(swish(x))[x].item(), 0.5);
}

TEST(Backward, TapeIsSingleUse) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(1.0));
  const Var y = square(x);
  tape.backward(y);
  EXPECT_THROW(tape.backward(y), std::logic_error);
  tape.reset();
  const Var x2 = tape.leaf(Tensor::scalar(2.0));
  EXPECT_DOUBLE_EQ(tape.backward(square(x2))[x2].item(), 4.0);
}

TEST(Backward, RequiresScalarAndFiniteInputs) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(tape.backward(square(x)), ShapeError);
  EXPECT_THROW(tape.leaf(Tensor::vector({1.0, std::nan("")})), NonFiniteError);
}

TEST(Backward, Linearity) {
  Rng rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor at = random_tensor({3, 4}, rng);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    auto grad = [&](auto build) {
      Tape tape;
      const Var x = tape.leaf(at);
      return tape.backward(build(x))[x];
    };
    const Tensor gf = grad([](const Var& x) { return sum(swish(x)); });
    const Tensor gg = grad([](const Var& x) { return logsumexp(reshape(x, {12})); });
    const Tensor gc = grad([&](const Var& x) {
      return add(scale(sum(swish(x)), a), scale(logsumexp(reshape(x, {12})), b));
    });
    for (std::size_t i = 0; i < at.size(); ++i) EXPECT_NEAR(gc[i], a * gf[i] + b * gg[i], 1e-10);
  }
}

TEST(ShapeExactness, ReshapeAndSum) {
  Tape tape;
  const Tensor x({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  EXPECT_EQ(reshape(tape.constant(x), {3, 2}).value().values(), x.values());
  EXPECT_EQ(sum(tape.constant(Tensor::full({7, 11}, 1.0))).value().item(), 77.0);
}

TEST(ShapeExactness, LogsumexpOverflowSafe) {
  Tape tape;
  const Var y = logsumexp(tape.leaf(Tensor::vector({1000.0, 1000.0})));
  EXPECT_NEAR(y.value().item(), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_TRUE(y.value().all_finite());
}

TEST(FiniteDiff, SelfTests) {
  Rng rng(31);
  const Tensor at = random_tensor({5}, rng);
  EXPECT_LT(finite_diff_check([](Tape&, const Var& x) { return sum(square(x)); }, at, 1e-4), 1e-6);
  const Tensor img = random_tensor({1, 1, 4, 4}, rng);
  const Tensor k = random_tensor({2, 1, 3, 3}, rng);
  ScalarFn f = [&](Tape& t, const Var& x) { return sum(swish(conv2d(x, t.constant(k), 1, 1))); };
  EXPECT_LT(finite_diff_check(f, img, 1e-4), 1e-4);
  EXPECT_THROW(finite_diff_check(f, img, 0.0), std::invalid_argument);
}

TEST(FiniteDiff, EveryPrimitiveOverHundredSeeds) {
  for (const auto& c : op_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed * 7919 + 1);
      const auto [f, at] = c.make(rng);
      worst = std::max(worst, finite_diff_check(f, at, 1e-4));
    }
    EXPECT_LT(worst, 1e-4) << c.name;
  }
}
