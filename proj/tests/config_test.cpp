#include <gtest/gtest.h>

#include <set>

#include "classrecon/config.hpp"
#include "classrecon/errors.hpp"

using namespace classrecon;

TEST(Config, SnapshotRoundTrips) {
  ExperimentConfig cfg;
  EXPECT_EQ(parse_config(cfg.snapshot()), cfg);
  EXPECT_EQ(parse_config(cfg.snapshot()).snapshot(), cfg.snapshot());

  set_config_value(cfg, "attack.diffusion.lr", "0.1");
  set_config_value(cfg, "vae.kl_weight", "0.30000000000000004");
  set_config_value(cfg, "targets", "3,20,1");
  set_config_value(cfg, "methods", "pixel,gan");
  cfg.sync_sides();
  const auto back = parse_config(cfg.snapshot());
  EXPECT_EQ(back, cfg);
  EXPECT_EQ(back.vae.kl_weight, 0.30000000000000004);
  EXPECT_EQ(back.attack_diffusion.lr, 0.1);
}

TEST(Config, EveryKeyAppearsOnceInSnapshot) {
  const auto keys = config_keys();
  EXPECT_EQ(std::set<std::string>(keys.begin(), keys.end()).size(), keys.size());
  const auto snap = ExperimentConfig().snapshot();
  for (const auto& k : keys) EXPECT_NE(snap.find(k + " = "), std::string::npos) << k;
}

TEST(Config, GetMatchesSet) {
  ExperimentConfig cfg;
  for (const auto& k : config_keys()) {
    const auto v = get_config_value(cfg, k);
    set_config_value(cfg, k, v);
    EXPECT_EQ(get_config_value(cfg, k), v) << k;
  }
  EXPECT_EQ(cfg, ExperimentConfig());
}

TEST(Config, TargetsAreOneBasedOnDisk) {
  const auto cfg = parse_config("targets = 8, 7\n");
  EXPECT_EQ(cfg.targets, (std::vector<int64_t>{7, 6}));
  EXPECT_EQ(get_config_value(cfg, "targets"), "8,7");
  EXPECT_EQ(get_config_value(ExperimentConfig(), "targets"), "8,7");
}

TEST(Config, CommentsAndBlankLines) {
  const auto cfg = parse_config("# experiment\n\nseed = 5   \n  image_size=64\n");
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.image_size, 64);
  EXPECT_EQ(cfg.vgg11.side, 64);
  EXPECT_EQ(cfg.vae.side, 64);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("no_such_key = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("seed\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = one\n"), ConfigError);
  EXPECT_THROW(parse_config("image_size = 48\n"), ConfigError);
  EXPECT_THROW(parse_config("targets = 21\n"), ConfigError);
  EXPECT_THROW(parse_config("targets = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("targets = 3,3\n"), ConfigError);
  EXPECT_THROW(parse_config("eval_classifier = vgg11\n"), ConfigError);
  EXPECT_THROW(parse_config("methods = magic\n"), ConfigError);
  EXPECT_THROW(parse_config("attack.diffusion.grad_mode = sideways\n"), ConfigError);
  try {
    parse_config("seed = 1\n\nbogus = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_config("/nonexistent/classrecon.cfg"), ConfigError);
}

TEST(Seeds, DeterministicAndDistinct) {
  const auto a = seed_everything(1);
  EXPECT_EQ(a, seed_everything(1));
  EXPECT_EQ(a.at("master"), 1u);
  for (const char* stage : {"scenario", "cnn2", "vgg11", "diffusion", "vae", "attack.gan", "attack.vae",
                            "attack.diffusion", "attack.pixel", "eval"}) {
    EXPECT_TRUE(a.contains(stage)) << stage;
  }
  std::set<uint64_t> values;
  for (const auto& [k, v] : a) values.insert(v);
  EXPECT_EQ(values.size(), a.size());

  const auto b = seed_everything(2);
  for (const auto& [k, v] : a) {
    if (k != "master") EXPECT_NE(v, b.at(k)) << k;
  }
  EXPECT_EQ(derive_seed(10, 3), derive_seed(10, 3));
  EXPECT_NE(derive_seed(10, 3), derive_seed(10, 4));
  EXPECT_NE(derive_seed(10, 3), derive_seed(11, 3));
}

TEST(Seeds, MapRoundTrips) {
  const auto a = seed_everything(123456789);
  EXPECT_EQ(parse_seed_map(format_seed_map(a)), a);
  EXPECT_THROW(parse_seed_map("master = x\n"), ConfigError);
}
