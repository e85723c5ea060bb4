#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "classrecon/attack_result.hpp"
#include "classrecon/checkpoint.hpp"
#include "classrecon/data.hpp"
#include "classrecon/nets.hpp"

namespace classrecon {

enum class ClassifierArch { cnn2, vgg11 };

std::string to_string(ClassifierArch arch);
ClassifierArch parse_arch(const std::string& name);

/// Which epoch's weights train_classifier returns.
enum class Selection {
  best_val,  // highest validation top-1 (earliest on ties)
  final,     // last epoch run
};

struct ClassifierSpec {
  ClassifierArch arch = ClassifierArch::cnn2;
  int64_t side = 32;
  int64_t classes = kCanonicalClasses;
  int64_t epochs = 40;
  int64_t batch_size = 16;
  double lr = 1e-3;  // Adam
  double weight_decay = 0.0;
  int64_t width_divisor = 2;  // vgg11 only
  Selection selection = Selection::best_val;
  /// When > 0, training ends at the first epoch whose train top-1 reaches
  /// this value plus `extra_epochs` further epochs (still bounded by
  /// `epochs`).
  double saturate_at = 0.0;
  int64_t extra_epochs = 0;

  /// Defaults: cnn2 keeps its best validation epoch; vgg11 is
  /// trained into train-set saturation with no regularization.
  static ClassifierSpec cnn2_default(int64_t side);
  static ClassifierSpec vgg11_default(int64_t side);
};

struct TrainMetrics {
  std::vector<double> train_loss;
  std::vector<double> train_top1;
  std::vector<double> val_top1;
  int64_t selected_epoch = 0;  // 0 = initialization
  double selected_train_top1 = 0.0;
  double selected_val_top1 = 0.0;
};

struct TrainedClassifier {
  ModelCheckpoint checkpoint;
  TrainMetrics metrics;
};

/// Fresh network for `spec`, weights drawn from torch's global generator.
std::shared_ptr<ImageNet> build_classifier(const ClassifierSpec& spec);

/// Rebuilds the network described by a checkpoint's metadata and loads it.
std::shared_ptr<ImageNet> restore_classifier(const ModelCheckpoint& ckpt);

/// A restored classifier plus the checksum of the checkpoint it came from.
struct LoadedClassifier {
  std::shared_ptr<ImageNet> net;
  std::string checksum;

  static LoadedClassifier from(const ModelCheckpoint& ckpt);
};

/// Adam on mean cross-entropy with per-epoch shuffling; deterministic given
/// `seed`. Throws NumericalError on a non-finite loss.
TrainedClassifier train_classifier(const ClassifierSpec& spec, const FaceDataset& train,
                                   const FaceDataset& val, uint64_t seed);

/// Softmax over classes for a batch [N, 1, H, W] (or a single [1, H, W]).
torch::Tensor predict_probs(ImageNet& net, const torch::Tensor& images);

/// Argmax match rate; ties go to the lowest class id. Throws on empty input.
double top1_accuracy(ImageNet& net, const FaceDataset& ds);
double top1_accuracy_from_logits(const torch::Tensor& logits, const std::vector<int64_t>& labels);

/// Shannon entropy (nats) of each softmax row, averaged.
double mean_prediction_entropy(ImageNet& net, const torch::Tensor& images);

struct PixelAttackConfig {
  int64_t target = 0;
  int64_t iters = 1000;
  double step = 1.0;
  double step_growth = 1.0;  // step multiplier after an accepted move
  double grad_clip = 0.0;    // 0 = unclipped
  double stop_confidence = 1.0;  // stop early once the target prob reaches this
  uint64_t seed = 0;
};

/// Gradient descent on cross-entropy to the target directly over the pixels
/// of a Gaussian-noise image, with backtracking.
AttackResult pixel_space_attack(const LoadedClassifier& classifier, int64_t side,
                                const PixelAttackConfig& cfg);

}  // namespace classrecon
