#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace classrecon {

inline constexpr int64_t kCanonicalClasses = 40;
inline constexpr int64_t kImagesPerClass = 10;
inline constexpr int64_t kTrainPerClass = 7;
inline constexpr int64_t kCanonicalSide = 64;

/// Grayscale face images in the canonical [-1, 1] range, index-aligned with
/// their class labels.
struct FaceDataset {
  torch::Tensor images;  // [N, 1, H, W] float32
  std::vector<int64_t> labels;
  int64_t num_classes = 0;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int64_t height() const { return images.defined() ? images.size(2) : 0; }
  int64_t width() const { return images.defined() ? images.size(3) : 0; }
  torch::Tensor label_tensor() const;
  bool empty() const { return labels.empty(); }
};

/// Which classes the adversary attacks vs. observes, plus the per-class
/// 7/3 train/val split. All ids are 0-based.
struct AttackScenario {
  std::vector<std::vector<int64_t>> train_index;  // per class, dataset indices
  std::vector<std::vector<int64_t>> val_index;
  std::vector<int64_t> target_classes;
  std::vector<int64_t> visible_classes;
  uint64_t seed = 0;

  std::vector<int64_t> train_flat() const;
  std::vector<int64_t> val_flat() const;
};

// Storage range [0, 1] <-> canonical range [-1, 1].
inline float normalize_pixel(float unit) { return unit * 2.0f - 1.0f; }
inline float denormalize_pixel(float canonical) { return (canonical + 1.0f) * 0.5f; }

/// Loads either a directory of `class_<k>/img_<i>.pgm` files or a packed
/// float32 file `<path>` with a `<path>.labels` int32 sidecar. Rejects
/// anything that is not 40 classes x 10 images of 64x64.
FaceDataset load_dataset(const std::filesystem::path& path);

void save_dataset_pgm(const FaceDataset& ds, const std::filesystem::path& dir);
void save_dataset_packed(const FaceDataset& ds, const std::filesystem::path& file);

/// Per-class random 7/3 split seeded by `seed`; the first half of the
/// classes are attack targets, the second half are visible to the adversary.
AttackScenario make_scenario(const FaceDataset& ds, uint64_t seed);

/// All images (train and val) of the scenario's visible classes.
FaceDataset visible_pool(const FaceDataset& ds, const AttackScenario& scenario);

FaceDataset subset(const FaceDataset& ds, std::span<const int64_t> indices);

/// Area-averages images down to `side` x `side`; `side` must divide H and W.
FaceDataset downsample(const FaceDataset& ds, int64_t side);

std::vector<int64_t> indices_of_class(const FaceDataset& ds, int64_t cls);

/// Writes the split as `class train... | val...` lines; read back exactly.
void save_scenario(const AttackScenario& scenario, const std::filesystem::path& file);
AttackScenario load_scenario(const std::filesystem::path& file);

}  // namespace classrecon
