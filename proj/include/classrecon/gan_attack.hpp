#pragma once

#include <cstdint>
#include <vector>

#include "classrecon/attack_result.hpp"
#include "classrecon/classifier.hpp"
#include "classrecon/data.hpp"

namespace classrecon {

struct GanAttackConfig {
  int64_t target = 0;
  double alpha = 1.0;  // weight of the fool-the-discriminator term
  int64_t rounds = 50;
  int64_t d_epochs = 1;   // passes over each round's discriminator set
  int64_t g_steps = 8;    // generator updates per round
  int64_t batch_real = 200;
  int64_t batch_fake = 200;
  int64_t d_minibatch = 50;
  int64_t g_batch = 32;
  double lr_generator = 5e-4;
  double lr_discriminator = 2e-4;
  int64_t generator_width = 16;
  bool reinit_discriminator = false;
  int64_t plateau_rounds = 5;
  double plateau_tol = 1e-3;
  uint64_t seed = 0;
};

/// Images with binary labels: 1 = real (visible pool), 0 = generated.
struct DiscriminatorBatch {
  torch::Tensor images;
  torch::Tensor labels;  // float32, [N]

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
  int64_t real_count() const;
};

struct GeneratorLoss {
  torch::Tensor classifier_term;     // mean CE(C(g), target)
  torch::Tensor discriminator_term;  // mean CE(D(g), real)
  torch::Tensor total;               // classifier_term + alpha * discriminator_term
};

/// Batch-averaged CE(C(g), target) + alpha * CE(D(g), real); D emits one
/// real-vs-fake logit per image.
GeneratorLoss generator_loss(ImageNet& classifier, ImageNet& discriminator, const torch::Tensor& generated,
                             int64_t target, double alpha);

/// Binary accuracy at P(real) = 0.5. Throws ConfigError on an empty batch.
double discriminator_accuracy(ImageNet& discriminator, const DiscriminatorBatch& batch);

struct GanAttackOutcome {
  AttackResult result;
  std::vector<int64_t> discriminator_set_sizes;  // per round
  std::vector<int64_t> discriminator_real_counts;
  std::vector<double> discriminator_accuracy;  // on the round's set after D training
  int64_t rounds_run = 0;
};

/// Alternating protocol per round: draw `batch_fake` generated images and
/// `batch_real` pool images, fit the discriminator on them, then update the
/// generator on generator_loss with C and D frozen. Stops when the loss on a
/// fixed noise batch improves by less than `plateau_tol` (relative) over
/// `plateau_rounds` rounds, or after `rounds`. The reported image is the
/// fixed-noise sample the attacked classifier rates highest.
GanAttackOutcome train_attack_gan(const LoadedClassifier& classifier, const FaceDataset& visible_pool,
                                  const GanAttackConfig& cfg);

}  // namespace classrecon
