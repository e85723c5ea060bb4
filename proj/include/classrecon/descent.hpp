#pragma once

#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace classrecon {

/// Loss, gradient and target confidence at one point.
struct Evaluation {
  double loss = 0.0;
  torch::Tensor grad;
  double confidence = 0.0;
};

using Objective = std::function<Evaluation(const torch::Tensor&)>;

struct DescentOptions {
  double step = 1.0;
  int64_t max_iters = 200;
  double stop_loss = 0.0;   // stop once loss <= stop_loss
  bool backtracking = true;  // halve the step when a trial raises the loss
  int max_halvings = 60;
  double max_grad_norm = 0.0;  // rescale longer gradients to this norm; 0 = off
  double step_growth = 1.0;    // step multiplier after an accepted move
  int64_t plateau_window = 0;  // 0 disables plateau stopping
  double plateau_tol = 1e-3;   // relative improvement over the window
};

enum class StopReason { max_iters, threshold, plateau, no_descent, zero_step, non_finite };

std::string to_string(StopReason reason);

struct DescentOutcome {
  torch::Tensor point;
  std::vector<double> loss_trace;  // accepted iterates, starting point first
  std::vector<double> confidence_trace;
  std::vector<double> step_trace;  // step size used for each accepted move
  int64_t iterations = 0;          // accepted moves
  int64_t evaluations = 0;         // objective calls, including rejected trials
  StopReason reason = StopReason::max_iters;
};

/// Plain gradient descent `x <- x - step * grad` from `start`. With
/// backtracking the accepted loss sequence is non-increasing. A halved step
/// stays halved unless `step_growth` > 1 lets it grow back.
DescentOutcome gradient_descent(const torch::Tensor& start, const Objective& objective,
                                const DescentOptions& options);

}  // namespace classrecon
