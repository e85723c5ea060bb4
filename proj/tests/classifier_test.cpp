#include <gtest/gtest.h>

#include <cmath>

#include "classrecon/classifier.hpp"
#include "classrecon/errors.hpp"
#include "classrecon/synthetic_faces.hpp"
#include "support.hpp"

using namespace classrecon;
using classrecon::testing::FixedLogits;

namespace {

struct Split {
  FaceDataset train, val;
};

const Split& small_split() {
  static const Split s = [] {
    const auto full = downsample(make_synthetic_faces(), 32);
    const auto sc = make_scenario(full, 9);
    return Split{subset(full, sc.train_flat()), subset(full, sc.val_flat())};
  }();
  return s;
}

}  // namespace

TEST(Softmax, NormalizedAndNonNegativeOnRandomInputs) {
  torch::manual_seed(0);
  auto net = build_classifier(ClassifierSpec::cnn2_default(32));
  net->eval();
  for (int batch = 0; batch < 10; ++batch) {
    const auto images = torch::randn({100, 1, 32, 32}) * (1.0 + batch);
    const auto p = predict_probs(*net, images).to(torch::kDouble);
    EXPECT_GE(p.min().item<double>(), 0.0);
    EXPECT_LE((p.sum(1) - 1.0).abs().max().item<double>(), 1e-6);
  }
}

TEST(Softmax, UniformLogits) {
  FixedLogits uniform(torch::zeros({40}));
  const auto p = predict_probs(uniform, torch::zeros({1, 8, 8}));
  EXPECT_EQ(p.sizes(), (std::vector<int64_t>{1, 40}));
  EXPECT_NEAR(p.min().item<double>(), 0.025, 1e-7);
  EXPECT_NEAR(p.max().item<double>(), 0.025, 1e-7);
  EXPECT_NEAR(cross_entropy(torch::zeros({1, 40}, torch::kDouble), 5).item<double>(), std::log(40.0), 1e-12);
  EXPECT_NEAR(std::log(40.0), 3.6889, 1e-4);
}

TEST(Softmax, ShapeMismatchRejected) {
  auto net = build_classifier(ClassifierSpec::cnn2_default(32));
  EXPECT_ANY_THROW(predict_probs(*net, torch::zeros({1, 1, 16, 16})));
}

TEST(Top1, TiesGoToLowestClassAndEdgeCases) {
  const auto logits = torch::tensor({{1.0, 3.0, 3.0}, {0.0, 0.0, 0.0}, {5.0, 1.0, 5.0}});
  EXPECT_DOUBLE_EQ(top1_accuracy_from_logits(logits, {1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(top1_accuracy_from_logits(logits, {2, 1, 2}), 0.0);
  EXPECT_THROW(top1_accuracy_from_logits(torch::zeros({0, 3}), {}), ConfigError);

  // constant predictor on a balanced 40-class set
  std::vector<int64_t> labels;
  for (int64_t k = 0; k < 40; ++k)
    for (int i = 0; i < 3; ++i) labels.push_back(k);
  EXPECT_DOUBLE_EQ(top1_accuracy_from_logits(torch::zeros({120, 40}), labels), 0.025);

  // perfect predictor
  const auto onehot = torch::nn::functional::one_hot(torch::tensor(labels), 40).to(torch::kFloat);
  EXPECT_DOUBLE_EQ(top1_accuracy_from_logits(onehot, labels), 1.0);
}

TEST(Train, ZeroEpochsKeepsInitialization) {
  auto spec = ClassifierSpec::cnn2_default(32);
  spec.epochs = 0;
  const auto& s = small_split();
  const auto trained = train_classifier(spec, s.train, s.val, 4);
  torch::manual_seed(4);
  auto init = build_classifier(spec);
  auto init_ckpt = ModelCheckpoint::from_module(*init);
  EXPECT_EQ(trained.checkpoint.entries(), init_ckpt.entries());
  EXPECT_EQ(trained.metrics.selected_epoch, 0);
  EXPECT_NEAR(trained.metrics.selected_val_top1, 0.025, 0.05);
}

TEST(Train, DeterministicGivenSeed) {
  auto spec = ClassifierSpec::cnn2_default(32);
  spec.epochs = 3;
  const auto& s = small_split();
  const auto a = train_classifier(spec, s.train, s.val, 8);
  const auto b = train_classifier(spec, s.train, s.val, 8);
  EXPECT_EQ(a.metrics.train_loss, b.metrics.train_loss);
  EXPECT_EQ(a.metrics.val_top1, b.metrics.val_top1);
  EXPECT_EQ(a.checkpoint, b.checkpoint);
  EXPECT_NE(train_classifier(spec, s.train, s.val, 9).metrics.train_loss, a.metrics.train_loss);
}

TEST(Train, Cnn2LearnsTheSplit) {
  auto spec = ClassifierSpec::cnn2_default(32);
  spec.epochs = 15;
  const auto& s = small_split();
  const auto trained = train_classifier(spec, s.train, s.val, 1);
  EXPECT_GE(trained.metrics.selected_val_top1, 0.8);
  auto net = restore_classifier(trained.checkpoint);
  EXPECT_DOUBLE_EQ(top1_accuracy(*net, s.val), trained.metrics.selected_val_top1);
}

TEST(Train, DivergenceIsReported) {
  auto spec = ClassifierSpec::cnn2_default(32);
  spec.epochs = 1;
  auto s = small_split();
  s.train.images = s.train.images.clone();
  s.train.images[0][0][0][0] = std::nan("");
  EXPECT_THROW(train_classifier(spec, s.train, s.val, 1), NumericalError);
}

TEST(PixelAttack, ZeroIterationsReturnsInitialNoise) {
  torch::manual_seed(5);
  auto net = build_classifier(ClassifierSpec::cnn2_default(32));
  const LoadedClassifier clf{net, "x"};
  PixelAttackConfig cfg;
  cfg.iters = 0;
  cfg.seed = 77;
  const auto r = pixel_space_attack(clf, 32, cfg);
  auto gen = at::detail::createCPUGenerator(77);
  EXPECT_TRUE(torch::equal(r.image, torch::randn({1, 32, 32}, gen, torch::kFloat)));
  EXPECT_EQ(r.iterations_run, 0);
}

TEST(PixelAttack, LossDoesNotIncreaseAndClassifierUntouched) {
  torch::manual_seed(6);
  auto net = build_classifier(ClassifierSpec::cnn2_default(32));
  const auto before = ModelCheckpoint::from_module(*net);
  const LoadedClassifier clf{net, before.checksum()};
  PixelAttackConfig cfg;
  cfg.target = 12;
  cfg.iters = 30;
  const auto r = pixel_space_attack(clf, 32, cfg);
  EXPECT_LE(r.loss_trace.back(), r.loss_trace.front());
  for (size_t i = 1; i < r.loss_trace.size(); ++i) EXPECT_LE(r.loss_trace[i], r.loss_trace[i - 1]);
  EXPECT_EQ(ModelCheckpoint::from_module(*net), before);
  EXPECT_EQ(r.method, AttackMethod::pixel);
  EXPECT_GT(r.attacked_confidence, r.confidence_trace.front());
}
