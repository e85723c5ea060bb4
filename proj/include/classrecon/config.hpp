#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "classrecon/attack_result.hpp"
#include "classrecon/classifier.hpp"
#include "classrecon/diffusion.hpp"
#include "classrecon/gan_attack.hpp"
#include "classrecon/path_attack.hpp"
#include "classrecon/vae_attack.hpp"

namespace classrecon {

/// Everything one experiment run needs. Parsed from a flat `key = value`
/// file; see config_keys() for the accepted keys.
struct ExperimentConfig {
  std::string data = "synthetic";  // a dataset path, or "synthetic"
  uint64_t synthetic_seed = 2023;
  uint64_t seed = 1;
  std::string out_root = "out";
  int64_t image_size = 32;
  int64_t threads = 1;
  std::vector<int64_t> targets = {7, 6};  // 0-based; written 1-based
  std::vector<AttackMethod> methods = {AttackMethod::gan, AttackMethod::vae, AttackMethod::diffusion};
  ClassifierArch attacked = ClassifierArch::vgg11;
  ClassifierArch evaluator = ClassifierArch::cnn2;

  ClassifierSpec cnn2 = ClassifierSpec::cnn2_default(32);
  ClassifierSpec vgg11 = ClassifierSpec::vgg11_default(32);
  int64_t diffusion_steps = 600;
  DiffusionTrainConfig diffusion;
  VaeSpec vae;
  PathAttackConfig attack_diffusion;
  GanAttackConfig attack_gan;
  LatentAttackConfig attack_vae;
  PixelAttackConfig attack_pixel;

  ExperimentConfig();

  /// Copies image_size into every per-model side field.
  void sync_sides();
  /// Throws ConfigError on inconsistent values.
  void validate() const;
  const ClassifierSpec& spec_for(ClassifierArch arch) const;

  /// Every key in canonical order; parse(snapshot()) == *this.
  std::string snapshot() const;
  bool operator==(const ExperimentConfig& other) const { return snapshot() == other.snapshot(); }
};

std::vector<std::string> config_keys();

/// Throws ConfigError naming the line for unknown or repeated keys and
/// malformed values. Keys not mentioned keep their defaults.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& file);

/// Sets one key from its textual value (used for CLI overrides).
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);

/// Per-stage seeds derived from one master seed by a SplitMix64 counter.
using SeedMap = std::map<std::string, uint64_t>;

SeedMap seed_everything(uint64_t master_seed);
/// Child seed `index` of `parent`.
uint64_t derive_seed(uint64_t parent, uint64_t index);

std::string format_seed_map(const SeedMap& seeds);
SeedMap parse_seed_map(const std::string& text);

}  // namespace classrecon
