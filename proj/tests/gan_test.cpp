#include <gtest/gtest.h>

#include <cmath>

#include "classrecon/errors.hpp"
#include "classrecon/gan_attack.hpp"
#include "classrecon/synthetic_faces.hpp"
#include "support.hpp"

using namespace classrecon;
using classrecon::testing::FixedLogits;

namespace {

std::shared_ptr<FixedLogits> logits(std::vector<double> row) {
  return std::make_shared<FixedLogits>(torch::tensor(row, torch::kDouble));
}

const FaceDataset& faces32() {
  static const FaceDataset ds = downsample(make_synthetic_faces(), 32);
  return ds;
}

}  // namespace

TEST(GeneratorLoss, UniformClassifierAndConfidentDiscriminator) {
  auto c = logits(std::vector<double>(40, 0.0));
  auto d = logits({50.0});
  const auto g = torch::zeros({3, 1, 8, 8}, torch::kDouble);
  const auto loss = generator_loss(*c, *d, g, 11, 1.0);
  EXPECT_NEAR(loss.classifier_term.item<double>(), std::log(40.0), 1e-12);
  EXPECT_NEAR(loss.discriminator_term.item<double>(), 0.0, 1e-20);
  EXPECT_NEAR(loss.total.item<double>(), 3.6889, 1e-4);
}

TEST(GeneratorLoss, EvenOddsOnBothTerms) {
  std::vector<double> row(40, 0.0);
  row[4] = std::log(39.0);  // target prob 39 / 78
  auto c = logits(row);
  auto d = logits({0.0});
  const auto loss = generator_loss(*c, *d, torch::zeros({2, 1, 8, 8}, torch::kDouble), 4, 1.0);
  EXPECT_NEAR(loss.classifier_term.item<double>(), std::log(2.0), 1e-12);
  EXPECT_NEAR(loss.discriminator_term.item<double>(), std::log(2.0), 1e-12);
  EXPECT_NEAR(loss.total.item<double>(), 1.3863, 1e-4);
}

TEST(GeneratorLoss, TermsAddWithAlphaWeight) {
  torch::manual_seed(3);
  Cnn2Net c(32, 40), d(32, 1);
  c.eval();
  d.eval();
  const auto g = torch::randn({5, 1, 32, 32});
  for (double alpha : {0.0, 0.3, 1.0, 4.0}) {
    const auto loss = generator_loss(c, d, g, 17, alpha);
    const double sum = loss.classifier_term.item<double>() + alpha * loss.discriminator_term.item<double>();
    EXPECT_NEAR(loss.total.item<double>(), sum, 1e-6);
  }
  const auto zero = generator_loss(c, d, g, 17, 0.0);
  EXPECT_DOUBLE_EQ(zero.total.item<double>(), zero.classifier_term.item<double>());
  EXPECT_THROW(generator_loss(c, d, g, 17, -1.0), ConfigError);
}

TEST(DiscriminatorAccuracy, ThresholdAtHalf) {
  auto says_real = logits({1.0});
  DiscriminatorBatch b;
  b.images = torch::zeros({4, 1, 8, 8});
  b.labels = torch::tensor({1.0f, 1.0f, 1.0f, 0.0f});
  EXPECT_DOUBLE_EQ(discriminator_accuracy(*says_real, b), 0.75);
  EXPECT_EQ(b.real_count(), 3);
  auto says_fake = logits({-1.0});
  EXPECT_DOUBLE_EQ(discriminator_accuracy(*says_fake, b), 0.25);
  EXPECT_THROW(discriminator_accuracy(*says_real, DiscriminatorBatch{}), ConfigError);
}

TEST(GanAttack, ProtocolShapeAndFrozenClassifier) {
  const auto sc = make_scenario(faces32(), 2);
  const auto pool = visible_pool(faces32(), sc);
  ASSERT_EQ(pool.size(), 200);
  torch::manual_seed(1);
  auto clf_net = std::make_shared<Cnn2Net>(32, 40);
  const auto before = ModelCheckpoint::from_module(*clf_net);
  const LoadedClassifier clf{clf_net, before.checksum()};

  GanAttackConfig cfg;
  cfg.target = sc.target_classes.front();
  cfg.rounds = 2;
  cfg.g_steps = 1;
  cfg.g_batch = 4;
  cfg.generator_width = 8;
  cfg.plateau_rounds = 0;
  cfg.seed = 5;
  const auto out = train_attack_gan(clf, pool, cfg);
  EXPECT_EQ(out.rounds_run, 2);
  ASSERT_EQ(out.discriminator_set_sizes.size(), 2u);
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(out.discriminator_set_sizes[i], 400);
    EXPECT_EQ(out.discriminator_real_counts[i], 200);
    EXPECT_GE(out.discriminator_accuracy[i], 0.0);
    EXPECT_LE(out.discriminator_accuracy[i], 1.0);
  }
  EXPECT_EQ(out.result.loss_trace.size(), 3u);
  EXPECT_EQ(ModelCheckpoint::from_module(*clf_net), before);
  for (const auto& p : clf_net->parameters()) EXPECT_TRUE(p.requires_grad());
  EXPECT_EQ(out.result.image.sizes(), (std::vector<int64_t>{1, 32, 32}));
  EXPECT_EQ(out.result.attacked_checksum, before.checksum());

  const auto again = train_attack_gan(clf, pool, cfg);
  EXPECT_TRUE(torch::equal(again.result.image, out.result.image));
}

TEST(GanAttack, PoolWithTargetRejected) {
  const auto sc = make_scenario(faces32(), 2);
  auto clf_net = std::make_shared<Cnn2Net>(32, 40);
  const LoadedClassifier clf{clf_net, "x"};
  GanAttackConfig cfg;
  cfg.target = sc.target_classes.front();
  EXPECT_THROW(train_attack_gan(clf, subset(faces32(), indices_of_class(faces32(), cfg.target)), cfg), ConfigError);
  EXPECT_THROW(train_attack_gan(clf, FaceDataset{}, cfg), ConfigError);
}
