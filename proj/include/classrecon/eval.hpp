#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "classrecon/attack_result.hpp"
#include "classrecon/classifier.hpp"
#include "classrecon/image_io.hpp"

namespace classrecon {

/// Softmax probability the evaluation classifier assigns to `target`.
double transfer_confidence(ImageNet& eval_net, const torch::Tensor& image, int64_t target);

struct ReportInput {
  AttackResult result;
  std::string artifact_path;  // relative to the run root where possible
};

struct ReportCell {
  int64_t target = 0;  // 0-based
  AttackMethod method = AttackMethod::diffusion;
  double attacked_confidence = 0.0;
  double transfer_confidence = 0.0;
  double transfer_logit = 0.0;
  std::string artifact_path;
  uint64_t seed = 0;
};

struct EvaluationReport {
  std::vector<ReportCell> cells;  // target order of first appearance, then method order
  std::string eval_checksum;
  std::vector<std::string> warnings;

  const ReportCell* find(int64_t target, AttackMethod method) const;
  std::vector<int64_t> targets() const;
  std::vector<AttackMethod> methods() const;

  /// `target_id,method,attacked_confidence,transfer_confidence,artifact_path,seed`
  /// with 1-based person ids.
  std::string csv() const;
  /// Targets x methods matrix (missing cells shown as "-") plus each
  /// method's best target.
  std::string table() const;
};

/// Scores every result with the evaluation classifier. Throws ConfigError if
/// the evaluation checkpoint is the one an attack optimized against. A
/// repeated (target, method) pair replaces the earlier cell with a warning.
EvaluationReport build_report(std::span<const ReportInput> results, const LoadedClassifier& eval);

void write_report(const EvaluationReport& report, const std::filesystem::path& dir);

/// Row-major grid of equal-sized canonical images, each tile topped by a
/// label strip; written as PGM. Throws ConfigError on no images or a size
/// mismatch.
void export_grid(std::span<const torch::Tensor> images, std::span<const std::string> labels, int64_t columns,
                 const std::filesystem::path& path);

/// Draws `text` (upper-cased, 3x5 glyphs, 1px spacing) into a raster; used
/// for grid labels.
void draw_text(GrayImage& canvas, int64_t x, int64_t y, const std::string& text, uint8_t ink);

}  // namespace classrecon
