#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "classrecon/config.hpp"
#include "classrecon/data.hpp"
#include "classrecon/eval.hpp"

namespace classrecon {

enum class Stage { data, classifiers, diffusion, vae, attacks, eval };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& name);
/// Comma-separated stage names, or "all" for default_stages(cfg).
std::vector<Stage> parse_stages(const std::string& text, const ExperimentConfig& cfg);
/// Every stage the configured methods need, in dependency order.
std::vector<Stage> default_stages(const ExperimentConfig& cfg);

struct ManifestEntry {
  std::string kind;  // "run", "stage" or "file"
  std::string checksum;
  std::string value;  // run id, stage name or run-relative path
};

/// One run directory `<out_root>/runs/<run-id>/` with checkpoints/,
/// results/, reports/, figures/ and an append-only manifest.txt listing
/// every written file with its SHA-256.
class ArtifactStore {
 public:
  /// Creates a fresh run directory; throws ConfigError if it already exists.
  static ArtifactStore create(const std::filesystem::path& out_root, const std::string& run_id);
  /// Opens an existing run; throws PrerequisiteError if it is missing.
  static ArtifactStore open(const std::filesystem::path& run_dir);

  const std::filesystem::path& root() const { return root_; }
  const std::string& run_id() const { return run_id_; }
  std::filesystem::path path(const std::string& relative) const { return root_ / relative; }

  /// Appends a file (or every file under a directory) to the manifest.
  void record(const std::string& relative);
  void mark_stage(Stage stage);
  bool stage_done(Stage stage) const;
  std::vector<ManifestEntry> manifest() const;

 private:
  ArtifactStore(std::filesystem::path root, std::string run_id);
  void append(const std::string& line);

  std::filesystem::path root_;
  std::string run_id_;
};

/// `<yyyymmdd-hhmmss-mmm>-s<seed>`.
std::string make_run_id(uint64_t seed);

/// Loads `cfg.data`, or builds the synthetic face set when it is "synthetic".
FaceDataset load_experiment_data(const ExperimentConfig& cfg);

struct PipelineOptions {
  std::string run_id;          // empty: fresh timestamped id
  std::ostream* log = nullptr;  // progress lines; nullptr is silent
};

struct PipelineOutcome {
  std::filesystem::path run_dir;
  std::vector<Stage> ran;
  std::optional<EvaluationReport> report;
};

/// Runs `stages` in dependency order inside one run directory. Stages the
/// requested ones depend on must be requested too or already recorded in
/// the run (PrerequisiteError otherwise). A stage that already ran is never
/// rerun (ConfigError). Continuing a run requires the same config.
PipelineOutcome run_pipeline(const ExperimentConfig& cfg, const std::vector<Stage>& stages,
                             const PipelineOptions& options = {});

/// Reruns every stage recorded in `run_dir`'s manifest from its config and
/// seed snapshots into a new run next to it.
PipelineOutcome replay_run(const std::filesystem::path& run_dir, const PipelineOptions& options = {});

/// Relative artifact directory of one attack, e.g. `results/gan/person8`.
std::string result_dir(AttackMethod method, int64_t target);

}  // namespace classrecon
