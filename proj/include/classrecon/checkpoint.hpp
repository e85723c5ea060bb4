#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace classrecon {

/// Named float32 parameter arrays plus a free-form metadata block.
///
/// On disk (little-endian, version 1):
///   "CRCKPT01" | u32 version | u64 metadata bytes | metadata text
///   (`key=value` lines) | u64 entry count | per entry: u32 name length,
///   name, u32 rank, rank x i64 dims, dims-product x f32 values.
/// Entries are stored in name order, so equal checkpoints serialize to
/// identical bytes.
class ModelCheckpoint {
 public:
  struct Entry {
    std::vector<int64_t> shape;
    std::vector<float> values;
    bool operator==(const Entry&) const = default;
  };

  ModelCheckpoint() = default;

  /// Snapshot of every parameter and buffer of `module`.
  static ModelCheckpoint from_module(const torch::nn::Module& module,
                                     std::map<std::string, std::string> metadata = {});

  /// Copies values into a module with the same parameter names and shapes.
  void load_into(torch::nn::Module& module) const;

  void add(const std::string& name, const torch::Tensor& value);
  const std::map<std::string, Entry>& entries() const { return entries_; }
  torch::Tensor tensor(const std::string& name) const;

  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }
  const std::string& meta(const std::string& key) const;
  int64_t meta_int(const std::string& key) const;
  double meta_double(const std::string& key) const;

  std::string serialize() const;
  static ModelCheckpoint deserialize(const std::string& bytes);

  /// SHA-256 of the serialized bytes, lowercase hex.
  std::string checksum() const;

  bool operator==(const ModelCheckpoint& other) const {
    return entries_ == other.entries_ && metadata_ == other.metadata_;
  }

 private:
  std::map<std::string, Entry> entries_;
  std::map<std::string, std::string> metadata_;
};

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& file);
ModelCheckpoint load_checkpoint(const std::filesystem::path& file);

/// SHA-256 of arbitrary bytes / of a file, lowercase hex.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& file);

}  // namespace classrecon
