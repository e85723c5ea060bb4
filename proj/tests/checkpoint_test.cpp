#include <gtest/gtest.h>

#include <fstream>

#include "classrecon/checkpoint.hpp"
#include "classrecon/classifier.hpp"
#include "classrecon/errors.hpp"
#include "support.hpp"

using namespace classrecon;
using classrecon::testing::ScratchDir;

TEST(Checkpoint, SaveLoadIsBitExact) {
  ScratchDir dir("ckpt");
  torch::manual_seed(1);
  Cnn2Net net(32, 40);
  auto ckpt = ModelCheckpoint::from_module(net, {{"arch", "cnn2"}, {"side", "32"}, {"classes", "40"}});
  save_checkpoint(ckpt, dir.path() / "a.ckpt");
  const auto back = load_checkpoint(dir.path() / "a.ckpt");
  EXPECT_EQ(back, ckpt);
  EXPECT_EQ(back.serialize(), ckpt.serialize());
  EXPECT_EQ(back.checksum(), ckpt.checksum());
  EXPECT_EQ(sha256_file(dir.path() / "a.ckpt"), ckpt.checksum());
}

TEST(Checkpoint, RestoredNetworkReproducesOutputs) {
  torch::manual_seed(2);
  auto spec = ClassifierSpec::vgg11_default(32);
  auto net = build_classifier(spec);
  net->eval();
  ModelCheckpoint ckpt = ModelCheckpoint::from_module(*net, {{"arch", "vgg11"},
                                                               {"side", "32"},
                                                               {"classes", "40"},
                                                               {"width_divisor", std::to_string(spec.width_divisor)}});
  auto copy = restore_classifier(ModelCheckpoint::deserialize(ckpt.serialize()));
  const auto probe = torch::randn({4, 1, 32, 32});
  torch::NoGradGuard no_grad;
  EXPECT_TRUE(torch::equal(net->forward(probe), copy->forward(probe)));
}

TEST(Checkpoint, LoadIntoRejectsShapeMismatch) {
  Cnn2Net a(32, 40), b(32, 10);
  const auto ckpt = ModelCheckpoint::from_module(a);
  EXPECT_ANY_THROW(ckpt.load_into(b));
}

TEST(Checkpoint, MetadataAccessors) {
  ModelCheckpoint c;
  c.metadata()["n"] = "12";
  c.metadata()["x"] = "0.25";
  c.add("w", torch::arange(6, torch::kFloat).view({2, 3}));
  EXPECT_EQ(c.meta_int("n"), 12);
  EXPECT_DOUBLE_EQ(c.meta_double("x"), 0.25);
  EXPECT_ANY_THROW(c.meta("missing"));
  EXPECT_TRUE(torch::equal(c.tensor("w"), torch::arange(6, torch::kFloat).view({2, 3})));
}

TEST(Checkpoint, CorruptOrMissingFiles) {
  ScratchDir dir("ckpt_bad");
  EXPECT_THROW(load_checkpoint(dir.path() / "none.ckpt"), PrerequisiteError);
  { std::ofstream(dir.path() / "bad.ckpt") << "not a checkpoint"; }
  EXPECT_ANY_THROW(load_checkpoint(dir.path() / "bad.ckpt"));
  ModelCheckpoint c;
  c.add("w", torch::ones({3}));
  auto bytes = c.serialize();
  EXPECT_ANY_THROW(ModelCheckpoint::deserialize(bytes.substr(0, bytes.size() - 2)));
}
