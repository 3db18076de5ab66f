#include <cmath>

#include <gtest/gtest.h>

#include "gxn/autodiff.hpp"
#include "gxn/properties.hpp"

namespace gxn {
namespace {

Matrix m11(double x) { return Matrix::Constant(1, 1, x); }

TEST(Kernels, SigmoidAtZero) {
  ParameterStore store;
  Parameter& w = store.add("w", m11(0.0));
  Tape tape;
  Tensor y = sigmoid(tape.parameter(w));
  EXPECT_DOUBLE_EQ(y.item(), 0.5);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(w.grad(0, 0), 0.25);
}

TEST(Kernels, RowSoftmaxHandValue) {
  Tape tape;
  Matrix x(1, 2);
  x << 0.0, 1.0;
  const Matrix y = row_softmax(tape.constant(x)).value();
  EXPECT_NEAR(y(0, 0), 0.26894, 1e-5);
  EXPECT_NEAR(y(0, 1), 0.73106, 1e-5);
}

TEST(Kernels, ScatterIntoZeros) {
  Tape tape;
  Matrix x(2, 1);
  x << 1.0, 2.0;
  const std::vector<Index> ids{0, 2};
  const Matrix y = scatter_rows(tape.constant(x), ids, 3).value();
  EXPECT_EQ(y(0, 0), 1.0);
  EXPECT_EQ(y(1, 0), 0.0);
  EXPECT_EQ(y(2, 0), 2.0);
}

TEST(Kernels, ShapeErrorsNameTheKernel) {
  Tape tape;
  Tensor a = tape.constant(Matrix::Zero(2, 3));
  Tensor b = tape.constant(Matrix::Zero(2, 3));
  try {
    matmul(a, b);
    FAIL() << "expected a shape error";
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("matmul"), std::string::npos);
    EXPECT_NE(what.find("(2x3)"), std::string::npos);
  }
  EXPECT_THROW(add(a, tape.constant(Matrix::Zero(3, 2))), std::invalid_argument);
  const std::vector<Index> bad{5};
  EXPECT_THROW(gather_rows(a, bad), std::out_of_range);
}

TEST(Kernels, LogClampsAtFloor) {
  Tape tape;
  EXPECT_DOUBLE_EQ(log(tape.constant(m11(0.0))).item(), std::log(1e-12));
}

TEST(Kernels, ReverseRulesMatchFiniteDifferences) {
  Rng rng(21);
  for (auto& [name, f] : props::kernels()) {
    ParameterStore store;
    Parameter& p = store.add("x", props::random_matrix(3, 4, rng));
    const Matrix w = props::random_matrix(3, 4, rng);
    std::vector<Parameter*> params{&p};
    const double err = finite_difference_check([&](Tape& t) { return f(t, p, w); }, params, 1e-6);
    EXPECT_LT(err, 1e-6) << name;
  }
}

TEST(Backward, SumGivesOnes) {
  ParameterStore store;
  Parameter& w = store.add("w", Matrix::Constant(2, 2, 0.3));
  Tape tape;
  tape.backward(sum(tape.parameter(w)));
  EXPECT_EQ(w.grad, Matrix::Ones(2, 2));
}

TEST(Backward, SquareGivesTwiceValue) {
  ParameterStore store;
  Parameter& w = store.add("w", m11(3.0));
  Tape tape;
  Tensor x = tape.parameter(w);
  tape.backward(sum(mul(x, x)));
  EXPECT_EQ(w.grad(0, 0), 6.0);
}

TEST(Backward, RepeatedCallsAccumulate) {
  ParameterStore store;
  Parameter& w = store.add("w", m11(3.0));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    Tensor x = tape.parameter(w);
    tape.backward(sum(mul(x, x)));
  }
  EXPECT_EQ(w.grad(0, 0), 12.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  ParameterStore store;
  Parameter& w = store.add("w", Matrix::Zero(2, 2));
  Tape tape;
  EXPECT_THROW(tape.backward(tape.parameter(w)), std::invalid_argument);
}

// Diamond: x feeds two branches that meet again. The gradient must equal the
// sum of the branch derivatives whichever branch is recorded first.
TEST(Backward, DiamondFanOutIsOrderIndependent) {
  ParameterStore store;
  Parameter& w = store.add("w", m11(0.7));
  const double x = 0.7;
  const double expected = 2.0 * x + sigmoid(x) * (1.0 - sigmoid(x));
  for (bool square_first : {true, false}) {
    w.zero_grad();
    Tape tape;
    Tensor p = tape.parameter(w);
    Tensor a = square_first ? mul(p, p) : sigmoid(p);
    Tensor b = square_first ? sigmoid(p) : mul(p, p);
    tape.backward(sum(add(a, b)));
    EXPECT_NEAR(w.grad(0, 0), expected, 1e-15);
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParameterStore store;
  Parameter& w = store.add("w", Matrix::Constant(2, 2, 1.5));
  w.zero_grad();
  std::vector<Parameter*> params{&w};
  adam_step(params, AdamOptions{0.1}, 1);
  EXPECT_EQ(w.value, Matrix::Constant(2, 2, 1.5));
}

TEST(Adam, OneStepHandValue) {
  ParameterStore store;
  Parameter& w = store.add("w", m11(0.0));
  w.grad = m11(1.0);
  std::vector<Parameter*> params{&w};
  adam_step(params, AdamOptions{0.1, 0.9, 0.999, 1e-8}, 1);
  // Bias correction makes both moment estimates exactly 1.
  EXPECT_NEAR(w.value(0, 0), -0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(w.grad(0, 0), 0.0);
}

TEST(Adam, IdenticalInputsGiveIdenticalUpdates) {
  ParameterStore a, b;
  Rng rng(3);
  const Matrix init = props::random_matrix(3, 3, rng);
  const Matrix grad = props::random_matrix(3, 3, rng);
  Parameter& pa = a.add("w", init);
  Parameter& pb = b.add("w", init);
  for (long step = 1; step <= 3; ++step) {
    pa.grad = grad;
    pb.grad = grad;
    std::vector<Parameter*> va{&pa}, vb{&pb};
    adam_step(va, AdamOptions{}, step);
    adam_step(vb, AdamOptions{}, step);
  }
  EXPECT_EQ(pa.value, pb.value);
}

TEST(Adam, MissingGradientIsAnError) {
  ParameterStore store;
  Parameter& w = store.add("w", m11(0.0));
  std::vector<Parameter*> params{&w};
  EXPECT_THROW(adam_step(params, AdamOptions{}, 1), std::logic_error);
  w.zero_grad();
  EXPECT_THROW(adam_step(params, AdamOptions{}, 0), std::invalid_argument);
}

TEST(FiniteDifference, SumOfSquares) {
  Rng rng(4);
  ParameterStore store;
  Parameter& w = store.add("w", props::random_matrix(3, 2, rng));
  std::vector<Parameter*> params{&w};
  const double err = finite_difference_check(
      [&](Tape& t) {
        Tensor x = t.parameter(w);
        return sum(mul(x, x));
      },
      params);
  EXPECT_LT(err, 1e-7);
}

TEST(FiniteDifference, ConstantHasZeroError) {
  ParameterStore store;
  Parameter& w = store.add("w", Matrix::Ones(2, 2));
  std::vector<Parameter*> params{&w};
  const double err = finite_difference_check(
      [&](Tape& t) { return add(sum(mul(t.parameter(w), t.constant(Matrix::Zero(2, 2)))), t.constant(m11(4.0))); },
      params);
  EXPECT_EQ(err, 0.0);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(5);
  Tape tape;
  const Matrix y = row_softmax(tape.constant(props::random_matrix(6, 5, rng, -30.0, 30.0))).value();
  EXPECT_LT((y.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Parameters, DuplicateNamesRejectedAndXavierBounded) {
  ParameterStore store;
  Rng rng(6);
  const Parameter& w = store.xavier("w", 10, 6, rng);
  EXPECT_LE(w.value.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 16.0));
  EXPECT_THROW(store.zeros("w", 1, 1), std::invalid_argument);
  EXPECT_EQ(w.first_moment, Matrix::Zero(10, 6));
}

}  // namespace
}  // namespace gxn
