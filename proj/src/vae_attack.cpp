#include "classrecon/vae_attack.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "classrecon/descent.hpp"
#include "classrecon/errors.hpp"

namespace classrecon {

LatentGaussian encode(VaeNet& vae, const torch::Tensor& images) {
  auto batch = images.dim() == 3 ? images.unsqueeze(0) : images;
  if (batch.dim() != 4 || batch.size(1) != 1 || batch.size(2) != vae.side || batch.size(3) != vae.side) {
    throw ConfigError("VAE encoder expects [N, 1, " + std::to_string(vae.side) + ", " + std::to_string(vae.side) +
                      "] images");
  }
  auto [mu, log_sigma] = vae.encode(batch);
  return {mu, log_sigma};
}

torch::Tensor reparameterize(const LatentGaussian& q, const torch::Tensor& eps) {
  return q.mu + torch::exp(q.log_sigma) * eps;
}

torch::Tensor kl_to_standard_normal(const LatentGaussian& q) {
  return 0.5 * (q.mu.pow(2) + torch::exp(2.0 * q.log_sigma) - 1.0 - 2.0 * q.log_sigma).sum(1);
}

TrainedVae train_vae(const FaceDataset& pool, const VaeSpec& spec, uint64_t seed) {
  if (pool.empty()) throw ConfigError("VAE training pool is empty");
  if (pool.height() != spec.side) throw ConfigError("pool resolution does not match VAE side");
  torch::manual_seed(seed);
  auto vae = std::make_shared<VaeNet>(spec.side, spec.latent);
  auto gen = at::detail::createCPUGenerator(seed ^ 0xFAEu);
  torch::optim::Adam opt(vae->parameters(), torch::optim::AdamOptions(spec.lr));

  TrainedVae out;
  const double pixels = static_cast<double>(spec.side * spec.side);
  for (int64_t epoch = 0; epoch < spec.epochs; ++epoch) {
    auto perm = torch::randperm(pool.size(), gen, torch::kInt64);
    double loss_sum = 0.0, recon_sum = 0.0, kl_sum = 0.0;
    int64_t batches = 0;
    for (int64_t i = 0; i < pool.size(); i += spec.batch_size) {
      auto x = pool.images.index_select(0, perm.slice(0, i, std::min(i + spec.batch_size, pool.size())));
      auto q = encode(*vae, x);
      auto eps = torch::randn(q.mu.sizes(), gen, torch::kFloat32);
      auto recon = vae->decode(reparameterize(q, eps));
      auto sq = (recon - x).pow(2).flatten(1).sum(1).mean();
      auto kl = kl_to_standard_normal(q).mean();
      auto loss = sq + spec.kl_weight * kl;
      const double value = loss.item<double>();
      if (!std::isfinite(value)) throw NumericalError("VAE training diverged at epoch " + std::to_string(epoch));
      opt.zero_grad();
      loss.backward();
      opt.step();
      loss_sum += value;
      recon_sum += sq.item<double>() / pixels;
      kl_sum += kl.item<double>();
      ++batches;
    }
    out.loss_trace.push_back(loss_sum / static_cast<double>(batches));
    out.recon_trace.push_back(recon_sum / static_cast<double>(batches));
    out.kl_trace.push_back(kl_sum / static_cast<double>(batches));
  }
  out.checkpoint = ModelCheckpoint::from_module(
      *vae, {{"arch", "vae"},
             {"side", std::to_string(spec.side)},
             {"latent", std::to_string(spec.latent)},
             {"kl_weight", std::to_string(spec.kl_weight)},
             {"seed", std::to_string(seed)}});
  return out;
}

std::shared_ptr<VaeNet> restore_vae(const ModelCheckpoint& ckpt) {
  if (ckpt.meta("arch") != "vae") throw ConfigError("checkpoint is not a VAE: " + ckpt.meta("arch"));
  auto vae = std::make_shared<VaeNet>(ckpt.meta_int("side"), ckpt.meta_int("latent"));
  ckpt.load_into(*vae);
  vae->eval();
  return vae;
}

torch::Tensor initial_latent(VaeNet& vae, const FaceDataset& pool, const LatentAttackConfig& cfg) {
  auto gen = at::detail::createCPUGenerator(cfg.seed);
  if (cfg.init == LatentInit::prior) return torch::randn({1, vae.latent}, gen, torch::kFloat32);
  if (pool.empty()) throw ConfigError("pool initialization needs a non-empty visible pool");
  torch::NoGradGuard no_grad;
  const int64_t pick = torch::randint(0, pool.size(), {1}, gen, torch::kInt64).item<int64_t>();
  return encode(vae, pool.images[pick]).mu.clone();
}

AttackResult latent_attack(VaeNet& vae, const LoadedClassifier& classifier, const FaceDataset& pool,
                           const LatentAttackConfig& cfg) {
  ImageNet& clf = *classifier.net;
  clf.eval();
  vae.eval();
  FrozenParameters frozen_vae(vae);
  FrozenParameters frozen_clf(clf);

  Objective objective = [&](const torch::Tensor& z) {
    auto leaf = z.detach().requires_grad_(true);
    auto logits = clf.forward(vae.decode(leaf));
    auto loss = cross_entropy(logits, cfg.target);
    Evaluation e;
    e.grad = torch::autograd::grad({loss}, {leaf})[0];
    e.loss = loss.item<double>();
    e.confidence = torch::softmax(logits.detach().to(torch::kDouble), 1)[0][cfg.target].item<double>();
    return e;
  };
  DescentOptions opts;
  opts.step = cfg.lr;
  opts.max_iters = cfg.max_iters;
  opts.stop_loss = cfg.stop_loss;
  opts.backtracking = cfg.backtracking;
  opts.plateau_window = cfg.plateau_window;
  opts.plateau_tol = cfg.plateau_tol;
  auto outcome = gradient_descent(initial_latent(vae, pool, cfg), objective, opts);

  AttackResult r;
  r.method = AttackMethod::vae;
  r.target = cfg.target;
  {
    torch::NoGradGuard no_grad;
    r.image = vae.decode(outcome.point)[0].clone();
  }
  r.loss_trace = outcome.loss_trace;
  r.confidence_trace = outcome.confidence_trace;
  r.iterations_run = outcome.iterations;
  r.attacked_confidence = outcome.confidence_trace.back();
  r.attacked_checksum = classifier.checksum;
  r.numerical_failure = outcome.reason == StopReason::non_finite;
  r.seeds["latent"] = cfg.seed;
  r.info["stop_reason"] = to_string(outcome.reason);
  r.info["init"] = cfg.init == LatentInit::pool ? "pool" : "prior";
  return r;
}

}  // namespace classrecon
