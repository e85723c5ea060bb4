#include "classrecon/attack_result.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "classrecon/errors.hpp"
#include "classrecon/image_io.hpp"

namespace fs = std::filesystem;

namespace classrecon {

std::string to_string(AttackMethod method) {
  switch (method) {
    case AttackMethod::diffusion: return "diffusion";
    case AttackMethod::gan: return "gan";
    case AttackMethod::vae: return "vae";
    case AttackMethod::pixel: return "pixel";
  }
  return "unknown";
}

AttackMethod parse_method(const std::string& name) {
  if (name == "diffusion") return AttackMethod::diffusion;
  if (name == "gan") return AttackMethod::gan;
  if (name == "vae") return AttackMethod::vae;
  if (name == "pixel") return AttackMethod::pixel;
  throw ConfigError("unknown attack method '" + name + "'");
}

torch::Tensor cross_entropy(const torch::Tensor& logits, int64_t target) {
  auto log_probs = torch::log_softmax(logits, 1);
  return -log_probs.select(1, target).mean();
}

void write_attack_artifacts(const AttackResult& r, const fs::path& dir) {
  fs::create_directories(dir);
  write_f32(dir / "image.f32", r.image);
  write_pgm(dir / "image.pgm", to_gray(r.image));

  std::ofstream csv(dir / "loss.csv");
  csv << "iteration,loss,confidence\n" << std::setprecision(17);
  for (size_t i = 0; i < r.loss_trace.size(); ++i) {
    csv << i << ',' << r.loss_trace[i] << ','
        << (i < r.confidence_trace.size() ? r.confidence_trace[i] : 0.0) << '\n';
  }

  std::ofstream run(dir / "run.txt");
  run << std::setprecision(17);
  run << "method = " << to_string(r.method) << '\n'
      << "target = " << r.target << '\n'
      << "height = " << r.image.size(-2) << '\n'
      << "width = " << r.image.size(-1) << '\n'
      << "iterations_run = " << r.iterations_run << '\n'
      << "attacked_confidence = " << r.attacked_confidence << '\n'
      << "attacked_checksum = " << r.attacked_checksum << '\n'
      << "numerical_failure = " << (r.numerical_failure ? 1 : 0) << '\n';
  if (r.transfer_confidence) run << "transfer_confidence = " << *r.transfer_confidence << '\n';
  for (const auto& [k, v] : r.seeds) run << "seed." << k << " = " << v << '\n';
  for (const auto& [k, v] : r.info) run << "info." << k << " = " << v << '\n';
}

AttackResult read_attack_artifacts(const fs::path& dir) {
  std::ifstream run(dir / "run.txt");
  if (!run) throw PrerequisiteError("missing attack artifact " + (dir / "run.txt").string());
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(run, line);) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(dir.string() + "/run.txt lacks '" + key + "'");
    return it->second;
  };

  AttackResult r;
  r.method = parse_method(need("method"));
  r.target = std::stoll(need("target"));
  r.iterations_run = std::stoll(need("iterations_run"));
  r.attacked_confidence = std::stod(need("attacked_confidence"));
  r.attacked_checksum = need("attacked_checksum");
  r.numerical_failure = need("numerical_failure") == "1";
  if (kv.count("transfer_confidence")) r.transfer_confidence = std::stod(kv["transfer_confidence"]);
  for (const auto& [k, v] : kv) {
    if (k.rfind("seed.", 0) == 0) r.seeds[k.substr(5)] = std::stoull(v);
    if (k.rfind("info.", 0) == 0) r.info[k.substr(5)] = v;
  }
  r.image = read_f32(dir / "image.f32", {1, std::stoll(need("height")), std::stoll(need("width"))});

  std::ifstream csv(dir / "loss.csv");
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    std::istringstream ls(line);
    std::string it, loss, conf;
    std::getline(ls, it, ',');
    std::getline(ls, loss, ',');
    std::getline(ls, conf, ',');
    r.loss_trace.push_back(std::stod(loss));
    r.confidence_trace.push_back(std::stod(conf));
  }
  return r;
}

}  // namespace classrecon
