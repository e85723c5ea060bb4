#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace classrecon {

enum class AttackMethod { diffusion, gan, vae, pixel };

std::string to_string(AttackMethod method);
AttackMethod parse_method(const std::string& name);

/// Outcome of one reconstruction attack on one target class.
struct AttackResult {
  AttackMethod method = AttackMethod::diffusion;
  int64_t target = 0;                  // 0-based class id
  torch::Tensor image;                 // [1, H, W], unclamped
  std::vector<double> loss_trace;      // entry 0 is the starting loss
  std::vector<double> confidence_trace;
  int64_t iterations_run = 0;
  double attacked_confidence = 0.0;
  std::optional<double> transfer_confidence;
  std::map<std::string, uint64_t> seeds;
  std::map<std::string, std::string> info;  // free-form run details
  std::string attacked_checksum;            // checkpoint the loss was taken against
  bool numerical_failure = false;
};

/// Writes `image.f32` (raw), `image.pgm`, `loss.csv`
/// (iteration,loss,confidence) and `run.txt` (key = value manifest) into
/// `dir`; read_attack_artifacts restores everything but the traces' origin.
void write_attack_artifacts(const AttackResult& result, const std::filesystem::path& dir);
AttackResult read_attack_artifacts(const std::filesystem::path& dir);

/// Cross-entropy of each row of `logits` against `target`, averaged, via
/// log-sum-exp.
torch::Tensor cross_entropy(const torch::Tensor& logits, int64_t target);

}  // namespace classrecon
