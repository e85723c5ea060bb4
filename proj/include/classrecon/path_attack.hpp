#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "classrecon/attack_result.hpp"
#include "classrecon/classifier.hpp"
#include "classrecon/diffusion.hpp"

namespace classrecon {

/// How the gradient through the T-step sampler is formed.
struct GradientMode {
  enum class Kind { full_graph, checkpointed };
  Kind kind = Kind::checkpointed;
  int64_t segment_length = 25;

  static GradientMode full_graph() { return {Kind::full_graph, 0}; }
  static GradientMode checkpointed(int64_t segment) { return {Kind::checkpointed, segment}; }
  /// "full" or "checkpointed:<segment>".
  static GradientMode parse(const std::string& text);
  std::string str() const;
};

struct PathGradient {
  double loss = 0.0;
  double confidence = 0.0;
  torch::Tensor grad_x_T;
  std::vector<torch::Tensor> grad_z;  // grad_z[t - 1]; filled only on request
  torch::Tensor image;                // sampled x_0
};

/// Gradient of CE(C(sample(path)), target) with respect to x_T (and
/// optionally every z_t), holding all network weights fixed.
///
/// full_graph keeps the entire T-step graph alive. checkpointed keeps only
/// segment boundaries from a no-grad forward pass, then replays one segment
/// at a time backwards, so at most `segment_length` steps are live.
PathGradient gradient_of_path_loss(ImageNet& classifier, NoisePredictorNet& predictor,
                                   const VarianceSchedule& sched, const NoisePath& path, int64_t target,
                                   const GradientMode& mode, bool with_z = false);

struct PathAttackConfig {
  int64_t target = 0;
  double lr = 1.0;
  int64_t max_iters = 200;
  double stop_loss = 0.05;
  GradientMode mode;
  bool backtracking = true;
  double grad_clip = 0.0;  // 0 = unclipped
  double step_growth = 1.0;
  bool optimize_z = false;
  int64_t plateau_window = 0;
  double plateau_tol = 1e-3;
};

/// Gradient descent on the initial noise of a fixed denoising path so the
/// sampled image is classified as `cfg.target`. The path argument is not
/// modified; the optimized path is returned through `final_path` if given.
AttackResult attack(const LoadedClassifier& classifier, const NoisePredictor& predictor, const NoisePath& path,
                    const PathAttackConfig& cfg, NoisePath* final_path = nullptr);

struct LrStudyRow {
  double lr = 0.0;
  bool converged = false;
  bool finite = true;
  int64_t iterations_run = 0;
  int64_t iterations_to_plateau = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::string stop_reason;
  std::string image_checksum;
  std::vector<double> loss_trace;
  torch::Tensor image;
};

struct LrStudyReport {
  int64_t target = 0;
  uint64_t path_seed = 0;
  std::vector<LrStudyRow> rows;
};

/// First iteration whose loss has covered 95% of the total decrease.
int64_t iterations_to_plateau(const std::vector<double>& loss_trace);

/// Runs attack() once per learning rate on the same path.
LrStudyReport lr_study(const LoadedClassifier& classifier, const NoisePredictor& predictor, const NoisePath& path,
                       const PathAttackConfig& base, std::span<const double> lrs);

/// `lr_study.csv` plus `lr_grid.pgm` (one tile per learning rate).
void write_lr_study(const LrStudyReport& report, const std::filesystem::path& dir);

/// SHA-256 over an image's float32 bytes.
std::string image_checksum(const torch::Tensor& image);

}  // namespace classrecon
