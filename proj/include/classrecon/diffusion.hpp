#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "classrecon/checkpoint.hpp"
#include "classrecon/data.hpp"
#include "classrecon/nets.hpp"
#include "classrecon/schedule.hpp"

namespace classrecon {

/// sqrt(alpha_bar[t]) * x + sqrt(1 - alpha_bar[t]) * eps.
torch::Tensor forward_noise(const torch::Tensor& x, int64_t t, const torch::Tensor& eps,
                            const VarianceSchedule& sched);

/// Batched variant with one step per leading-dimension element.
torch::Tensor forward_noise(const torch::Tensor& x, const torch::Tensor& t, const torch::Tensor& eps,
                            const VarianceSchedule& sched);

enum class PredictorKind { unet, tiny };

struct PredictorSpec {
  PredictorKind kind = PredictorKind::unet;
  int64_t side = 32;
  int64_t base_width = 16;  // unet
  int64_t hidden = 4;       // tiny
  int64_t max_steps = 600;
};

std::shared_ptr<NoisePredictorNet> build_predictor(const PredictorSpec& spec);
std::map<std::string, std::string> describe(const PredictorSpec& spec, const VarianceSchedule& sched,
                                            double beta_start, double beta_end);

/// A trained noise predictor together with the schedule it was trained for.
struct NoisePredictor {
  std::shared_ptr<NoisePredictorNet> net;
  VarianceSchedule schedule;
  ModelCheckpoint checkpoint;
};

NoisePredictor restore_predictor(const ModelCheckpoint& ckpt);

struct DiffusionTrainConfig {
  PredictorSpec predictor;
  int64_t iterations = 4000;
  int64_t batch_size = 32;
  double lr = 1e-3;  // Adam, cosine-decayed to 10% over the run
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

struct TrainedPredictor {
  NoisePredictor predictor;
  std::vector<double> loss_trace;  // per iteration, mean squared error per pixel
};

/// Minimizes E ||eps - eps_theta(x_t, t)||^2 with t uniform on 1..T and unit
/// weighting. Throws NumericalError on a non-finite loss.
TrainedPredictor train_diffusion(const FaceDataset& pool, const VarianceSchedule& sched,
                                 const DiffusionTrainConfig& cfg, uint64_t seed);

/// Mean squared error per pixel of the predictor on `images` noised with
/// draws from `seed` at uniformly drawn steps.
double probe_noise_mse(NoisePredictorNet& net, const VarianceSchedule& sched, const torch::Tensor& images,
                       uint64_t seed);

/// One ancestral step:
///   x_{t-1} = (x_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) * eps_theta(x_t, t)) / sqrt(alpha_t)
///             + sigma_t * z
/// Differentiable in x_t and z. Throws ConfigError if t is outside 1..T.
torch::Tensor denoise_step(const torch::Tensor& x_t, int64_t t, const torch::Tensor& z,
                           NoisePredictorNet& net, const VarianceSchedule& sched);

/// Every random draw of one ancestral sampling run. `z[t - 1]` is the noise
/// injected at step t; all tensors are [1, 1, H, W].
struct NoisePath {
  torch::Tensor x_T;
  std::vector<torch::Tensor> z;
  uint64_t seed = 0;

  int64_t steps() const { return static_cast<int64_t>(z.size()); }
  const torch::Tensor& z_at(int64_t t) const { return z.at(static_cast<size_t>(t - 1)); }
  NoisePath clone() const;
};

/// Draws x_T and z_T..z_1 from `seed`; z_1 is zero unless `zero_final_step`
/// is false.
NoisePath make_noise_path(uint64_t seed, int64_t side, int64_t steps, bool zero_final_step = true,
                          torch::Dtype dtype = torch::kFloat32);

/// Same x_T as `path`, fresh z's from `seed` (for variability studies).
NoisePath with_fresh_injections(const NoisePath& path, uint64_t seed, bool zero_final_step = true);

/// Applies steps t = from, from-1, ..., to+1 to `x` (which is x_from) using
/// the path's z's; returns x_to. Records autograd history when enabled.
torch::Tensor run_steps(const torch::Tensor& x, const NoisePath& path, int64_t from, int64_t to,
                        NoisePredictorNet& net, const VarianceSchedule& sched);

/// Deterministic fold of denoise_step from T down to 1 over a fixed path.
/// Output is unclamped. Throws NumericalError on non-finite intermediates.
torch::Tensor sample(NoisePredictorNet& net, const VarianceSchedule& sched, const NoisePath& path);

}  // namespace classrecon
