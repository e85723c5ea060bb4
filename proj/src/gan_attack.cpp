#include "classrecon/gan_attack.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>

#include "classrecon/errors.hpp"
#include "classrecon/nets.hpp"

namespace classrecon {
namespace {

// CE against the "real" label for a one-logit head: -log sigmoid(l).
torch::Tensor real_label_ce(const torch::Tensor& logits) {
  return torch::nn::functional::softplus(-logits).mean();
}

struct Discriminator {
  std::shared_ptr<Cnn2Net> net;
  std::unique_ptr<torch::optim::Adam> opt;
};

Discriminator fresh_discriminator(int64_t side, double lr) {
  Discriminator d;
  d.net = std::make_shared<Cnn2Net>(side, 1);
  d.opt = std::make_unique<torch::optim::Adam>(d.net->parameters(), torch::optim::AdamOptions(lr).betas({0.5, 0.999}));
  return d;
}

torch::Tensor draw_reals(const FaceDataset& pool, int64_t count, at::Generator& gen) {
  if (count <= pool.size()) {
    auto idx = torch::randperm(pool.size(), gen, torch::kInt64).slice(0, 0, count);
    return pool.images.index_select(0, std::get<0>(idx.sort()));
  }
  return pool.images.index_select(0, torch::randint(0, pool.size(), {count}, gen, torch::kInt64));
}

}  // namespace

int64_t DiscriminatorBatch::real_count() const {
  return labels.defined() ? labels.sum().item<int64_t>() : 0;
}

GeneratorLoss generator_loss(ImageNet& classifier, ImageNet& discriminator, const torch::Tensor& generated,
                             int64_t target, double alpha) {
  if (alpha < 0.0) throw ConfigError("GAN alpha must be >= 0");
  GeneratorLoss out;
  out.classifier_term = cross_entropy(classifier.forward(generated), target);
  out.discriminator_term = real_label_ce(discriminator.forward(generated).squeeze(1));
  out.total = out.classifier_term + alpha * out.discriminator_term;
  return out;
}

double discriminator_accuracy(ImageNet& discriminator, const DiscriminatorBatch& batch) {
  if (batch.size() == 0) throw ConfigError("discriminator accuracy of an empty batch");
  torch::NoGradGuard no_grad;
  auto predicted_real = discriminator.forward(batch.images).squeeze(1) > 0.0;
  auto truth = batch.labels > 0.5;
  return (predicted_real == truth).to(torch::kDouble).mean().item<double>();
}

GanAttackOutcome train_attack_gan(const LoadedClassifier& classifier, const FaceDataset& pool,
                                  const GanAttackConfig& cfg) {
  if (pool.empty()) throw ConfigError("GAN attack needs a non-empty visible pool");
  if (std::find(pool.labels.begin(), pool.labels.end(), cfg.target) != pool.labels.end()) {
    throw ConfigError("visible pool contains images of the attack target");
  }
  if (cfg.batch_real < 1 || cfg.batch_fake < 1 || cfg.g_batch < 1 || cfg.d_minibatch < 1) {
    throw ConfigError("GAN batch sizes must be positive");
  }
  const int64_t side = pool.height();
  ImageNet& clf = *classifier.net;
  clf.eval();
  FrozenParameters frozen_classifier(clf);

  torch::manual_seed(cfg.seed);
  auto generator = std::make_shared<GeneratorNet>(side, cfg.generator_width);
  torch::optim::Adam g_opt(generator->parameters(),
                           torch::optim::AdamOptions(cfg.lr_generator).betas({0.5, 0.999}));
  Discriminator disc = fresh_discriminator(side, cfg.lr_discriminator);
  auto gen = at::detail::createCPUGenerator(cfg.seed ^ 0x6A4Eu);
  const auto fixed_noise = torch::randn({cfg.batch_fake, 1, side, side}, gen, torch::kFloat32);

  std::vector<double> r_conf;  // mean target probability on the probe batch
  auto monitor_loss = [&]() {
    torch::NoGradGuard no_grad;
    generator->eval();
    disc.net->eval();
    auto probe = fixed_noise.slice(0, 0, std::min<int64_t>(cfg.batch_fake, 64));
    auto images = generator->forward(probe);
    r_conf.push_back(torch::softmax(clf.forward(images), 1).select(1, cfg.target).mean().item<double>());
    return generator_loss(clf, *disc.net, images, cfg.target, cfg.alpha).total.item<double>();
  };

  GanAttackOutcome out;
  AttackResult& r = out.result;
  r.loss_trace.push_back(monitor_loss());

  for (int64_t round = 0; round < cfg.rounds; ++round) {
    // (1) assemble this round's discriminator set
    DiscriminatorBatch batch;
    {
      torch::NoGradGuard no_grad;
      generator->eval();
      auto fakes = generator->forward(torch::randn({cfg.batch_fake, 1, side, side}, gen, torch::kFloat32));
      batch.images = torch::cat({draw_reals(pool, cfg.batch_real, gen), fakes});
      batch.labels = torch::cat({torch::ones({cfg.batch_real}), torch::zeros({cfg.batch_fake})});
    }
    out.discriminator_set_sizes.push_back(batch.size());
    out.discriminator_real_counts.push_back(batch.real_count());

    // (2) fit the discriminator
    if (cfg.reinit_discriminator && round > 0) disc = fresh_discriminator(side, cfg.lr_discriminator);
    disc.net->train();
    for (int64_t epoch = 0; epoch < cfg.d_epochs; ++epoch) {
      auto perm = torch::randperm(batch.size(), gen, torch::kInt64);
      for (int64_t i = 0; i < batch.size(); i += cfg.d_minibatch) {
        auto idx = perm.slice(0, i, std::min(i + cfg.d_minibatch, batch.size()));
        auto logits = disc.net->forward(batch.images.index_select(0, idx)).squeeze(1);
        auto loss = torch::binary_cross_entropy_with_logits(logits, batch.labels.index_select(0, idx));
        if (!std::isfinite(loss.item<double>())) throw NumericalError("discriminator diverged");
        disc.opt->zero_grad();
        loss.backward();
        disc.opt->step();
      }
    }
    disc.net->eval();
    out.discriminator_accuracy.push_back(discriminator_accuracy(*disc.net, batch));

    // (3) evolve the generator against the frozen C and D
    {
      FrozenParameters frozen_disc(*disc.net);
      generator->train();
      for (int64_t s = 0; s < cfg.g_steps; ++s) {
        auto noise = torch::randn({cfg.g_batch, 1, side, side}, gen, torch::kFloat32);
        auto loss = generator_loss(clf, *disc.net, generator->forward(noise), cfg.target, cfg.alpha).total;
        if (!std::isfinite(loss.item<double>())) throw NumericalError("generator diverged");
        g_opt.zero_grad();
        loss.backward();
        g_opt.step();
      }
    }
    ++out.rounds_run;
    r.loss_trace.push_back(monitor_loss());

    const auto w = static_cast<size_t>(cfg.plateau_rounds);
    if (w > 0 && r.loss_trace.size() > w) {
      const double before = r.loss_trace[r.loss_trace.size() - 1 - w];
      if (before - r.loss_trace.back() < cfg.plateau_tol * std::abs(before)) break;
    }
  }

  torch::NoGradGuard no_grad;
  generator->eval();
  auto candidates = generator->forward(fixed_noise);
  auto conf = torch::softmax(clf.forward(candidates), 1).select(1, cfg.target);
  const int64_t best = conf.argmax().item<int64_t>();

  r.method = AttackMethod::gan;
  r.target = cfg.target;
  r.image = candidates[best].clone();
  r.attacked_confidence = conf[best].item<double>();
  r.iterations_run = out.rounds_run;
  r.attacked_checksum = classifier.checksum;
  r.seeds["gan"] = cfg.seed;
  r.info["alpha"] = std::to_string(cfg.alpha);
  r.info["rounds_run"] = std::to_string(out.rounds_run);
  r.info["final_discriminator_accuracy"] =
      out.discriminator_accuracy.empty() ? "nan" : std::to_string(out.discriminator_accuracy.back());
  r.confidence_trace = r_conf;
  return out;
}

}  // namespace classrecon
