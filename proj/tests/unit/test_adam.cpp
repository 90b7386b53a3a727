#include <gtest/gtest.h>

#include <cmath>

#include "advchar/adam.hpp"
#include "advchar/error.hpp"

namespace advchar {
namespace {

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
  Matrix<double> p(2, 2);
  p << 1, 2, 3, 4;
  const Matrix<double> before = p;
  const Matrix<double> g = Matrix<double>::Zero(2, 2);
  AdamState<double> state;
  Matrix<double>* params[] = {&p};
  const Matrix<double>* grads[] = {&g};
  adam_step<double>(state, params, grads, 0.1);
  EXPECT_TRUE(p == before);
  EXPECT_EQ(state.step, 1);
  adam_step<double>(state, params, grads, 0.1);
  EXPECT_EQ(state.step, 2);
}

TEST(Adam, FirstStepMovesByLrTimesSign) {
  // Bias-corrected moments on step 1 are g and g^2, so the update is
  // lr * g / (|g| + eps).
  for (double g0 : {3.0, -0.25, 0.01}) {
    for (double lr : {1e-3, 0.1}) {
      Matrix<double> p = Matrix<double>::Constant(1, 1, 0.5);
      const Matrix<double> g = Matrix<double>::Constant(1, 1, g0);
      AdamState<double> state;
      Matrix<double>* params[] = {&p};
      const Matrix<double>* grads[] = {&g};
      adam_step<double>(state, params, grads, lr);
      const double expected = -lr * (g0 > 0 ? 1.0 : -1.0);
      EXPECT_NEAR(p(0, 0) - 0.5, expected, std::abs(lr) * 1e-6);
    }
  }
}

TEST(Adam, SecondStepMatchesHandComputation) {
  Matrix<double> p = Matrix<double>::Zero(1, 1);
  const Matrix<double> g1 = Matrix<double>::Constant(1, 1, 1.0);
  const Matrix<double> g2 = Matrix<double>::Constant(1, 1, -2.0);
  AdamState<double> state;
  Matrix<double>* params[] = {&p};
  const Matrix<double>* grads1[] = {&g1};
  const Matrix<double>* grads2[] = {&g2};
  adam_step<double>(state, params, grads1, 0.1);
  adam_step<double>(state, params, grads2, 0.1);
  const double m = (0.9 * 0.1 * 1.0 + 0.1 * -2.0) / (1 - 0.81);
  const double v = (0.999 * 0.001 * 1.0 + 0.001 * 4.0) / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p(0, 0), -0.1 / (1.0 + 1e-8) - 0.1 * m / (std::sqrt(v) + 1e-8), 1e-15);
}

TEST(Adam, Errors) {
  Matrix<float> p = Matrix<float>::Zero(2, 2);
  const Matrix<float> wrong = Matrix<float>::Zero(2, 3);
  Matrix<float> nan = Matrix<float>::Zero(2, 2);
  nan(1, 1) = std::nanf("");
  AdamState<float> state;
  Matrix<float>* params[] = {&p};
  const Matrix<float>* bad_shape[] = {&wrong};
  const Matrix<float>* bad_value[] = {&nan};
  EXPECT_THROW(adam_step<float>(state, params, bad_shape, 0.1), ShapeError);
  EXPECT_THROW(adam_step<float>(state, params, bad_value, 0.1), NumericalError);
}

}  // namespace
}  // namespace advchar
