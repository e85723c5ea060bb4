#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "classrecon/attack_result.hpp"
#include "classrecon/checkpoint.hpp"
#include "classrecon/classifier.hpp"
#include "classrecon/data.hpp"
#include "classrecon/nets.hpp"

namespace classrecon {

struct VaeSpec {
  int64_t side = 32;
  int64_t latent = 64;
  double kl_weight = 0.5;
  int64_t epochs = 150;
  int64_t batch_size = 16;
  double lr = 1e-3;
};

/// Encoder output defining q(z|x) = N(mu, diag(exp(log_sigma))^2).
struct LatentGaussian {
  torch::Tensor mu;
  torch::Tensor log_sigma;
};

LatentGaussian encode(VaeNet& vae, const torch::Tensor& images);

/// mu + exp(log_sigma) * eps.
torch::Tensor reparameterize(const LatentGaussian& q, const torch::Tensor& eps);

/// KL(q || N(0, I)) per batch element, summed over latent dimensions.
torch::Tensor kl_to_standard_normal(const LatentGaussian& q);

struct TrainedVae {
  ModelCheckpoint checkpoint;
  std::vector<double> loss_trace;   // per epoch
  std::vector<double> recon_trace;  // per epoch, mean squared error per pixel
  std::vector<double> kl_trace;     // per epoch, mean KL per image
};

/// Minimizes sum-over-pixels squared error + kl_weight * KL, averaged over
/// the batch. Deterministic per seed; throws NumericalError on divergence.
TrainedVae train_vae(const FaceDataset& pool, const VaeSpec& spec, uint64_t seed);

std::shared_ptr<VaeNet> restore_vae(const ModelCheckpoint& ckpt);

enum class LatentInit { pool, prior };

struct LatentAttackConfig {
  int64_t target = 0;
  double lr = 0.05;
  int64_t max_iters = 200;
  double stop_loss = 0.05;
  LatentInit init = LatentInit::pool;
  bool backtracking = true;
  int64_t plateau_window = 0;
  double plateau_tol = 1e-3;
  uint64_t seed = 0;
};

/// Starting code: the encoder mean of a seeded random pool image, or a
/// seeded draw from N(0, I).
torch::Tensor initial_latent(VaeNet& vae, const FaceDataset& pool, const LatentAttackConfig& cfg);

/// Gradient descent on CE(C(decode(z)), target) over z only; the decoder
/// and classifier stay fixed.
AttackResult latent_attack(VaeNet& vae, const LoadedClassifier& classifier, const FaceDataset& pool,
                           const LatentAttackConfig& cfg);

}  // namespace classrecon
