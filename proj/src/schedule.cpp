#include "classrecon/schedule.hpp"

#include <cmath>
#include <string>

#include "classrecon/errors.hpp"

namespace classrecon {

VarianceSchedule::VarianceSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
  double running = 1.0;
  for (double b : beta_) {
    alpha_.push_back(1.0 - b);
    running *= 1.0 - b;
    alpha_bar_.push_back(running);
    sigma_.push_back(std::sqrt(b));
  }
}

VarianceSchedule build_schedule(int64_t steps, double beta_start, double beta_end,
                                Interpolation interpolation) {
  if (steps < 1) throw ConfigError("diffusion step count must be >= 1");
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
    throw ConfigError("need 0 < beta_start < beta_end < 1, got " + std::to_string(beta_start) + ", " +
                      std::to_string(beta_end));
  }
  std::vector<double> betas(static_cast<size_t>(steps));
  switch (interpolation) {
    case Interpolation::linear:
      for (int64_t i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        betas[static_cast<size_t>(i)] = beta_start + frac * (beta_end - beta_start);
      }
      break;
  }
  return VarianceSchedule(std::move(betas));
}

}  // namespace classrecon
