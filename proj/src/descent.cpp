#include "classrecon/descent.hpp"

#include <cmath>

namespace classrecon {

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::max_iters: return "max_iters";
    case StopReason::threshold: return "threshold";
    case StopReason::plateau: return "plateau";
    case StopReason::no_descent: return "no_descent";
    case StopReason::zero_step: return "zero_step";
    case StopReason::non_finite: return "non_finite";
  }
  return "unknown";
}

DescentOutcome gradient_descent(const torch::Tensor& start, const Objective& objective,
                                const DescentOptions& options) {
  DescentOutcome out;
  torch::Tensor x = start.detach().clone();
  Evaluation current = objective(x);
  ++out.evaluations;
  out.loss_trace.push_back(current.loss);
  out.confidence_trace.push_back(current.confidence);
  if (!std::isfinite(current.loss) || !torch::isfinite(current.grad).all().item<bool>()) {
    out.point = x;
    out.reason = StopReason::non_finite;
    return out;
  }

  double step = options.step;
  while (true) {
    if (current.loss <= options.stop_loss) {
      out.reason = StopReason::threshold;
      break;
    }
    if (out.iterations >= options.max_iters) {
      out.reason = StopReason::max_iters;
      break;
    }
    if (step <= 0.0) {
      out.reason = StopReason::zero_step;
      break;
    }

    torch::Tensor direction = current.grad;
    if (options.max_grad_norm > 0.0) {
      const double norm = direction.norm().item<double>();
      if (norm > options.max_grad_norm) direction = direction * (options.max_grad_norm / norm);
    }
    bool accepted = false;
    bool failed = false;
    for (int halvings = 0; halvings <= options.max_halvings; ++halvings) {
      torch::Tensor trial_point = x - step * direction;
      Evaluation trial = objective(trial_point);
      ++out.evaluations;
      const bool finite = std::isfinite(trial.loss) && torch::isfinite(trial.grad).all().item<bool>();
      if (finite && (!options.backtracking || trial.loss <= current.loss)) {
        x = trial_point;
        current = std::move(trial);
        accepted = true;
        break;
      }
      if (!options.backtracking) {
        failed = true;
        break;
      }
      step *= 0.5;
    }
    if (failed) {
      out.reason = StopReason::non_finite;
      break;
    }
    if (!accepted) {
      out.reason = StopReason::no_descent;
      break;
    }

    ++out.iterations;
    out.loss_trace.push_back(current.loss);
    out.confidence_trace.push_back(current.confidence);
    out.step_trace.push_back(step);
    step *= options.step_growth;

    const auto w = static_cast<size_t>(options.plateau_window);
    if (w > 0 && out.loss_trace.size() > w) {
      const double before = out.loss_trace[out.loss_trace.size() - 1 - w];
      if (before - current.loss <= options.plateau_tol * std::abs(before)) {
        out.reason = StopReason::plateau;
        break;
      }
    }
  }
  out.point = x;
  return out;
}

}  // namespace classrecon
