#include <gtest/gtest.h>

#include <cmath>

#include "classrecon/descent.hpp"

using namespace classrecon;

namespace {

// f(x) = 0.5 * a * |x|^2
Objective quadratic(double a) {
  return [a](const torch::Tensor& x) {
    Evaluation e;
    e.loss = 0.5 * a * x.pow(2).sum().item<double>();
    e.grad = a * x;
    e.confidence = std::exp(-e.loss);
    return e;
  };
}

}  // namespace

TEST(Descent, ConvergesOnQuadratic) {
  DescentOptions o;
  o.step = 0.5;
  o.max_iters = 100;
  o.stop_loss = 1e-10;
  const auto out = gradient_descent(torch::ones({3}, torch::kDouble), quadratic(1.0), o);
  EXPECT_EQ(out.reason, StopReason::threshold);
  EXPECT_LE(out.loss_trace.back(), 1e-10);
  EXPECT_EQ(out.loss_trace.size(), static_cast<size_t>(out.iterations) + 1);
}

TEST(Descent, BacktrackingKeepsLossNonIncreasing) {
  DescentOptions o;
  o.step = 100.0;  // far too large for a = 1
  o.max_iters = 40;
  const auto out = gradient_descent(torch::ones({4}, torch::kDouble), quadratic(1.0), o);
  for (size_t i = 1; i < out.loss_trace.size(); ++i) EXPECT_LE(out.loss_trace[i], out.loss_trace[i - 1]);
  EXPECT_LT(out.loss_trace.back(), out.loss_trace.front());
  EXPECT_GT(out.evaluations, out.iterations + 1);
  EXPECT_LT(out.step_trace.front(), 100.0);
}

TEST(Descent, WithoutBacktrackingLargeStepsDiverge) {
  DescentOptions o;
  o.step = 3.0;
  o.max_iters = 5;
  o.backtracking = false;
  const auto out = gradient_descent(torch::ones({1}, torch::kDouble), quadratic(1.0), o);
  EXPECT_GT(out.loss_trace.back(), out.loss_trace.front());
}

TEST(Descent, ZeroStepAndZeroIterations) {
  DescentOptions o;
  o.step = 0.0;
  auto out = gradient_descent(torch::ones({2}, torch::kDouble), quadratic(1.0), o);
  EXPECT_EQ(out.reason, StopReason::zero_step);
  EXPECT_EQ(out.iterations, 0);
  EXPECT_EQ(out.loss_trace.size(), 1u);

  o.step = 1.0;
  o.max_iters = 0;
  out = gradient_descent(torch::ones({2}, torch::kDouble), quadratic(1.0), o);
  EXPECT_EQ(out.iterations, 0);
  EXPECT_TRUE(torch::equal(out.point, torch::ones({2}, torch::kDouble)));
}

TEST(Descent, PlateauStop) {
  DescentOptions o;
  o.step = 0.001;
  o.max_iters = 1000;
  o.plateau_window = 5;
  o.plateau_tol = 0.05;
  const auto out = gradient_descent(torch::ones({2}, torch::kDouble), quadratic(1.0), o);
  EXPECT_EQ(out.reason, StopReason::plateau);
  EXPECT_LT(out.iterations, 1000);
}

TEST(Descent, NonFiniteWithoutSafeguardStops) {
  Objective bad = [](const torch::Tensor& x) {
    Evaluation e;
    const double v = x.sum().item<double>();
    e.loss = v < 0.5 ? std::nan("") : v;
    e.grad = torch::ones_like(x);
    return e;
  };
  DescentOptions o;
  o.step = 1.0;
  o.backtracking = false;
  const auto out = gradient_descent(torch::ones({1}, torch::kDouble), bad, o);
  EXPECT_EQ(out.reason, StopReason::non_finite);
}

TEST(Descent, GradClipBoundsTheMove) {
  DescentOptions o;
  o.step = 1.0;
  o.max_iters = 1;
  o.max_grad_norm = 0.5;
  const auto start = torch::full({4}, 10.0, torch::kDouble);  // |grad| = 20
  const auto out = gradient_descent(start, quadratic(1.0), o);
  ASSERT_EQ(out.iterations, 1);
  EXPECT_NEAR((out.point - start).norm().item<double>(), 0.5, 1e-12);

  o.max_grad_norm = 100.0;  // longer than the gradient: no effect
  const auto plain = gradient_descent(torch::full({4}, 0.2, torch::kDouble), quadratic(1.0), o);
  EXPECT_NEAR(plain.point.abs().max().item<double>(), 0.0, 1e-12);
}

TEST(Descent, StepGrowthRecoversFromSmallStart) {
  DescentOptions o;
  o.step = 1e-3;
  o.max_iters = 30;
  o.stop_loss = 1e-8;
  const auto fixed = gradient_descent(torch::ones({2}, torch::kDouble), quadratic(1.0), o);
  o.step_growth = 2.0;
  const auto grown = gradient_descent(torch::ones({2}, torch::kDouble), quadratic(1.0), o);
  EXPECT_EQ(fixed.reason, StopReason::max_iters);
  EXPECT_EQ(grown.reason, StopReason::threshold);
  for (size_t i = 1; i < grown.loss_trace.size(); ++i) EXPECT_LE(grown.loss_trace[i], grown.loss_trace[i - 1]);
}
