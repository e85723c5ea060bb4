#pragma once

#include <cstdint>
#include <vector>

namespace classrecon {

enum class Interpolation { linear };

/// Per-step DDPM tables, indexed 1..T. Values are float64.
class VarianceSchedule {
 public:
  VarianceSchedule() = default;
  explicit VarianceSchedule(std::vector<double> betas);

  int64_t steps() const { return static_cast<int64_t>(beta_.size()); }
  double beta(int64_t t) const { return beta_.at(idx(t)); }
  double alpha(int64_t t) const { return alpha_.at(idx(t)); }
  double alpha_bar(int64_t t) const { return alpha_bar_.at(idx(t)); }
  /// Sampling noise scale; sigma_t = sqrt(beta_t).
  double sigma(int64_t t) const { return sigma_.at(idx(t)); }

 private:
  static size_t idx(int64_t t) { return static_cast<size_t>(t - 1); }
  std::vector<double> beta_, alpha_, alpha_bar_, sigma_;
};

/// Throws ConfigError unless 0 < beta_start < beta_end < 1 and steps >= 1.
VarianceSchedule build_schedule(int64_t steps, double beta_start, double beta_end,
                                Interpolation interpolation = Interpolation::linear);

}  // namespace classrecon
