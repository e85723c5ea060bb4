#include "classrecon/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "classrecon/errors.hpp"

namespace classrecon {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int64_t to_int(const std::string& s) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("not an integer: '" + s + "'");
  return v;
}

uint64_t to_uint(const std::string& s) {
  uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("not an unsigned integer: '" + s + "'");
  return v;
}

double to_double(const std::string& s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("not a number: '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("not a boolean: '" + s + "'");
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

struct Key {
  std::string name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class T>
Key int_key(std::string name, T ExperimentConfig::*section, int64_t T::*field) {
  return {name, [=](const ExperimentConfig& c) { return std::to_string(c.*section.*field); },
          [=](ExperimentConfig& c, const std::string& v) { c.*section.*field = to_int(v); }};
}

template <class T>
Key real_key(std::string name, T ExperimentConfig::*section, double T::*field) {
  return {name, [=](const ExperimentConfig& c) { return fmt(c.*section.*field); },
          [=](ExperimentConfig& c, const std::string& v) { c.*section.*field = to_double(v); }};
}

template <class T>
Key bool_key(std::string name, T ExperimentConfig::*section, bool T::*field) {
  return {name, [=](const ExperimentConfig& c) { return fmt(c.*section.*field); },
          [=](ExperimentConfig& c, const std::string& v) { c.*section.*field = to_bool(v); }};
}

std::string selection_name(Selection s) { return s == Selection::best_val ? "best_val" : "final"; }

Selection parse_selection(const std::string& s) {
  if (s == "best_val") return Selection::best_val;
  if (s == "final") return Selection::final;
  throw ConfigError("unknown selection '" + s + "' (expected best_val or final)");
}

void classifier_keys(std::vector<Key>& keys, const std::string& prefix, ClassifierSpec ExperimentConfig::*spec) {
  keys.push_back(int_key(prefix + ".epochs", spec, &ClassifierSpec::epochs));
  keys.push_back(int_key(prefix + ".batch_size", spec, &ClassifierSpec::batch_size));
  keys.push_back(real_key(prefix + ".lr", spec, &ClassifierSpec::lr));
  keys.push_back(real_key(prefix + ".weight_decay", spec, &ClassifierSpec::weight_decay));
  keys.push_back({prefix + ".selection", [=](const ExperimentConfig& c) { return selection_name((c.*spec).selection); },
                  [=](ExperimentConfig& c, const std::string& v) { (c.*spec).selection = parse_selection(v); }});
  keys.push_back(real_key(prefix + ".saturate_at", spec, &ClassifierSpec::saturate_at));
  keys.push_back(int_key(prefix + ".extra_epochs", spec, &ClassifierSpec::extra_epochs));
}

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = [] {
    using C = ExperimentConfig;
    std::vector<Key> k;
    k.push_back({"data", [](const C& c) { return c.data; }, [](C& c, const std::string& v) { c.data = v; }});
    k.push_back({"data.synthetic_seed", [](const C& c) { return std::to_string(c.synthetic_seed); },
                 [](C& c, const std::string& v) { c.synthetic_seed = to_uint(v); }});
    k.push_back({"seed", [](const C& c) { return std::to_string(c.seed); },
                 [](C& c, const std::string& v) { c.seed = to_uint(v); }});
    k.push_back({"out_root", [](const C& c) { return c.out_root; },
                 [](C& c, const std::string& v) { c.out_root = v; }});
    k.push_back({"image_size", [](const C& c) { return std::to_string(c.image_size); },
                 [](C& c, const std::string& v) { c.image_size = to_int(v); }});
    k.push_back({"threads", [](const C& c) { return std::to_string(c.threads); },
                 [](C& c, const std::string& v) { c.threads = to_int(v); }});
    k.push_back({"targets",
                 [](const C& c) {
                   std::string s;
                   for (size_t i = 0; i < c.targets.size(); ++i) s += (i ? "," : "") + std::to_string(c.targets[i] + 1);
                   return s;
                 },
                 [](C& c, const std::string& v) {
                   c.targets.clear();
                   for (const auto& item : split_list(v)) c.targets.push_back(to_int(item) - 1);
                 }});
    k.push_back({"methods",
                 [](const C& c) {
                   std::string s;
                   for (size_t i = 0; i < c.methods.size(); ++i) s += (i ? "," : "") + to_string(c.methods[i]);
                   return s;
                 },
                 [](C& c, const std::string& v) {
                   c.methods.clear();
                   for (const auto& item : split_list(v)) c.methods.push_back(parse_method(item));
                 }});
    k.push_back({"attacked_classifier", [](const C& c) { return to_string(c.attacked); },
                 [](C& c, const std::string& v) { c.attacked = parse_arch(v); }});
    k.push_back({"eval_classifier", [](const C& c) { return to_string(c.evaluator); },
                 [](C& c, const std::string& v) { c.evaluator = parse_arch(v); }});

    classifier_keys(k, "cnn2", &C::cnn2);
    classifier_keys(k, "vgg11", &C::vgg11);
    k.push_back(int_key("vgg11.width_divisor", &C::vgg11, &ClassifierSpec::width_divisor));

    k.push_back({"diffusion.steps", [](const C& c) { return std::to_string(c.diffusion_steps); },
                 [](C& c, const std::string& v) { c.diffusion_steps = to_int(v); }});
    k.push_back(real_key("diffusion.beta_start", &C::diffusion, &DiffusionTrainConfig::beta_start));
    k.push_back(real_key("diffusion.beta_end", &C::diffusion, &DiffusionTrainConfig::beta_end));
    k.push_back({"diffusion.base_width", [](const C& c) { return std::to_string(c.diffusion.predictor.base_width); },
                 [](C& c, const std::string& v) { c.diffusion.predictor.base_width = to_int(v); }});
    k.push_back(int_key("diffusion.iterations", &C::diffusion, &DiffusionTrainConfig::iterations));
    k.push_back(int_key("diffusion.batch_size", &C::diffusion, &DiffusionTrainConfig::batch_size));
    k.push_back(real_key("diffusion.lr", &C::diffusion, &DiffusionTrainConfig::lr));

    k.push_back(int_key("vae.latent", &C::vae, &VaeSpec::latent));
    k.push_back(real_key("vae.kl_weight", &C::vae, &VaeSpec::kl_weight));
    k.push_back(int_key("vae.epochs", &C::vae, &VaeSpec::epochs));
    k.push_back(int_key("vae.batch_size", &C::vae, &VaeSpec::batch_size));
    k.push_back(real_key("vae.lr", &C::vae, &VaeSpec::lr));

    k.push_back(real_key("attack.diffusion.lr", &C::attack_diffusion, &PathAttackConfig::lr));
    k.push_back(int_key("attack.diffusion.max_iters", &C::attack_diffusion, &PathAttackConfig::max_iters));
    k.push_back(real_key("attack.diffusion.stop_loss", &C::attack_diffusion, &PathAttackConfig::stop_loss));
    k.push_back({"attack.diffusion.grad_mode", [](const C& c) { return c.attack_diffusion.mode.str(); },
                 [](C& c, const std::string& v) { c.attack_diffusion.mode = GradientMode::parse(v); }});
    k.push_back(bool_key("attack.diffusion.backtracking", &C::attack_diffusion, &PathAttackConfig::backtracking));
    k.push_back(real_key("attack.diffusion.grad_clip", &C::attack_diffusion, &PathAttackConfig::grad_clip));
    k.push_back(real_key("attack.diffusion.step_growth", &C::attack_diffusion, &PathAttackConfig::step_growth));
    k.push_back(bool_key("attack.diffusion.optimize_z", &C::attack_diffusion, &PathAttackConfig::optimize_z));
    k.push_back(int_key("attack.diffusion.plateau_window", &C::attack_diffusion, &PathAttackConfig::plateau_window));
    k.push_back(real_key("attack.diffusion.plateau_tol", &C::attack_diffusion, &PathAttackConfig::plateau_tol));

    k.push_back(real_key("attack.gan.alpha", &C::attack_gan, &GanAttackConfig::alpha));
    k.push_back(int_key("attack.gan.rounds", &C::attack_gan, &GanAttackConfig::rounds));
    k.push_back(int_key("attack.gan.d_epochs", &C::attack_gan, &GanAttackConfig::d_epochs));
    k.push_back(int_key("attack.gan.g_steps", &C::attack_gan, &GanAttackConfig::g_steps));
    k.push_back(int_key("attack.gan.batch_real", &C::attack_gan, &GanAttackConfig::batch_real));
    k.push_back(int_key("attack.gan.batch_fake", &C::attack_gan, &GanAttackConfig::batch_fake));
    k.push_back(int_key("attack.gan.d_minibatch", &C::attack_gan, &GanAttackConfig::d_minibatch));
    k.push_back(int_key("attack.gan.g_batch", &C::attack_gan, &GanAttackConfig::g_batch));
    k.push_back(real_key("attack.gan.lr_generator", &C::attack_gan, &GanAttackConfig::lr_generator));
    k.push_back(real_key("attack.gan.lr_discriminator", &C::attack_gan, &GanAttackConfig::lr_discriminator));
    k.push_back(int_key("attack.gan.generator_width", &C::attack_gan, &GanAttackConfig::generator_width));
    k.push_back(
        bool_key("attack.gan.reinit_discriminator", &C::attack_gan, &GanAttackConfig::reinit_discriminator));
    k.push_back(int_key("attack.gan.plateau_rounds", &C::attack_gan, &GanAttackConfig::plateau_rounds));
    k.push_back(real_key("attack.gan.plateau_tol", &C::attack_gan, &GanAttackConfig::plateau_tol));

    k.push_back(real_key("attack.vae.lr", &C::attack_vae, &LatentAttackConfig::lr));
    k.push_back(int_key("attack.vae.max_iters", &C::attack_vae, &LatentAttackConfig::max_iters));
    k.push_back(real_key("attack.vae.stop_loss", &C::attack_vae, &LatentAttackConfig::stop_loss));
    k.push_back({"attack.vae.init",
                 [](const C& c) { return std::string(c.attack_vae.init == LatentInit::pool ? "pool" : "prior"); },
                 [](C& c, const std::string& v) {
                   if (v == "pool") {
                     c.attack_vae.init = LatentInit::pool;
                   } else if (v == "prior") {
                     c.attack_vae.init = LatentInit::prior;
                   } else {
                     throw ConfigError("unknown latent init '" + v + "' (expected pool or prior)");
                   }
                 }});
    k.push_back(bool_key("attack.vae.backtracking", &C::attack_vae, &LatentAttackConfig::backtracking));
    k.push_back(int_key("attack.vae.plateau_window", &C::attack_vae, &LatentAttackConfig::plateau_window));
    k.push_back(real_key("attack.vae.plateau_tol", &C::attack_vae, &LatentAttackConfig::plateau_tol));

    k.push_back(int_key("attack.pixel.iters", &C::attack_pixel, &PixelAttackConfig::iters));
    k.push_back(real_key("attack.pixel.step", &C::attack_pixel, &PixelAttackConfig::step));
    k.push_back(real_key("attack.pixel.step_growth", &C::attack_pixel, &PixelAttackConfig::step_growth));
    k.push_back(real_key("attack.pixel.grad_clip", &C::attack_pixel, &PixelAttackConfig::grad_clip));
    k.push_back(real_key("attack.pixel.stop_confidence", &C::attack_pixel, &PixelAttackConfig::stop_confidence));
    return k;
  }();
  return keys;
}

const Key& find_key(const std::string& name) {
  for (const auto& k : registry()) {
    if (k.name == name) return k;
  }
  throw ConfigError("unknown config key '" + name + "'");
}

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  diffusion.predictor.max_steps = diffusion_steps;
  sync_sides();
}

void ExperimentConfig::sync_sides() {
  cnn2.side = vgg11.side = image_size;
  diffusion.predictor.side = image_size;
  diffusion.predictor.max_steps = diffusion_steps;
  vae.side = image_size;
}

void ExperimentConfig::validate() const {
  if (image_size < 32 || kCanonicalSide % image_size != 0 || image_size % 32 != 0) {
    throw ConfigError("image_size must be 32 or 64");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (targets.empty()) throw ConfigError("targets must list at least one person");
  for (int64_t t : targets) {
    if (t < 0 || t >= kCanonicalClasses / 2) {
      throw ConfigError("target person " + std::to_string(t + 1) + " is not an attack target (persons 1-20)");
    }
  }
  if (std::set<int64_t>(targets.begin(), targets.end()).size() != targets.size()) {
    throw ConfigError("targets contain a repeated person");
  }
  if (methods.empty()) throw ConfigError("methods must list at least one attack");
  if (attacked == evaluator) throw ConfigError("attacked and evaluation classifier must differ");
  if (diffusion_steps < 1) throw ConfigError("diffusion.steps must be >= 1");
  for (const auto* spec : {&cnn2, &vgg11}) {
    if (spec->epochs < 0 || spec->batch_size < 1 || spec->lr <= 0.0) {
      throw ConfigError(to_string(spec->arch) + " training settings out of range");
    }
  }
  if (vae.latent < 1 || vae.kl_weight < 0.0) throw ConfigError("vae.latent must be > 0 and vae.kl_weight >= 0");
  if (attack_diffusion.lr < 0.0 || attack_vae.lr < 0.0) throw ConfigError("attack step sizes must be >= 0");
  if (attack_diffusion.grad_clip < 0.0) throw ConfigError("attack.diffusion.grad_clip must be >= 0");
  if (attack_pixel.step_growth < 1.0) throw ConfigError("attack.pixel.step_growth must be >= 1");
  if (attack_pixel.grad_clip < 0.0) throw ConfigError("attack.pixel.grad_clip must be >= 0");
  if (attack_diffusion.step_growth < 1.0) throw ConfigError("attack.diffusion.step_growth must be >= 1");
  if (attack_gan.alpha < 0.0) throw ConfigError("attack.gan.alpha must be >= 0");
  if (attack_diffusion.mode.kind == GradientMode::Kind::checkpointed && attack_diffusion.mode.segment_length < 1) {
    throw ConfigError("checkpoint segment length must be >= 1");
  }
}

const ClassifierSpec& ExperimentConfig::spec_for(ClassifierArch arch) const {
  return arch == ClassifierArch::cnn2 ? cnn2 : vgg11;
}

std::string ExperimentConfig::snapshot() const {
  std::string out;
  for (const auto& k : registry()) out += k.name + " = " + k.get(*this) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> names;
  for (const auto& k : registry()) names.push_back(k.name);
  return names;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  find_key(key).set(cfg, value);
  cfg.sync_sides();
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) { return find_key(key).get(cfg); }

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    try {
      find_key(key).set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.sync_sides();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

uint64_t derive_seed(uint64_t parent, uint64_t index) {
  uint64_t state = parent ^ (0xD6E8FEB86659FD93ull * (index + 1));
  return splitmix64(state);
}

SeedMap seed_everything(uint64_t master_seed) {
  static const char* const stages[] = {"scenario",     "cnn2",       "vgg11",        "diffusion",
                                       "vae",          "attack.gan", "attack.vae",   "attack.diffusion",
                                       "attack.pixel", "eval"};
  SeedMap seeds;
  seeds["master"] = master_seed;
  uint64_t state = master_seed;
  for (const char* name : stages) seeds[name] = splitmix64(state);
  return seeds;
}

std::string format_seed_map(const SeedMap& seeds) {
  std::string out;
  for (const auto& [k, v] : seeds) out += k + " = " + std::to_string(v) + "\n";
  return out;
}

SeedMap parse_seed_map(const std::string& text) {
  SeedMap seeds;
  std::stringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed seed line '" + line + "'");
    seeds[trim(line.substr(0, eq))] = to_uint(trim(line.substr(eq + 1)));
  }
  return seeds;
}

}  // namespace classrecon
