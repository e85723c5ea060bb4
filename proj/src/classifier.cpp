#include "classrecon/classifier.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "classrecon/descent.hpp"
#include "classrecon/errors.hpp"

namespace classrecon {
namespace {

constexpr int64_t kEvalBatch = 64;

torch::Tensor batched_logits(ImageNet& net, const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  for (int64_t i = 0; i < images.size(0); i += kEvalBatch) {
    parts.push_back(net.forward(images.slice(0, i, std::min(i + kEvalBatch, images.size(0)))));
  }
  return torch::cat(parts);
}

std::map<std::string, std::string> describe(const ClassifierSpec& spec) {
  return {{"arch", to_string(spec.arch)},
          {"side", std::to_string(spec.side)},
          {"classes", std::to_string(spec.classes)},
          {"width_divisor", std::to_string(spec.width_divisor)}};
}

}  // namespace

std::string to_string(ClassifierArch arch) { return arch == ClassifierArch::cnn2 ? "cnn2" : "vgg11"; }

ClassifierArch parse_arch(const std::string& name) {
  if (name == "cnn2") return ClassifierArch::cnn2;
  if (name == "vgg11") return ClassifierArch::vgg11;
  throw ConfigError("unknown classifier arch '" + name + "' (expected cnn2 or vgg11)");
}

ClassifierSpec ClassifierSpec::cnn2_default(int64_t side) {
  ClassifierSpec s;
  s.arch = ClassifierArch::cnn2;
  s.side = side;
  s.epochs = 40;
  s.batch_size = 16;
  s.lr = 1e-3;
  s.weight_decay = 1e-4;
  s.selection = Selection::best_val;
  return s;
}

ClassifierSpec ClassifierSpec::vgg11_default(int64_t side) {
  ClassifierSpec s;
  s.arch = ClassifierArch::vgg11;
  s.side = side;
  s.epochs = 120;
  s.batch_size = 16;
  s.lr = 5e-4;
  s.weight_decay = 0.0;
  s.width_divisor = 2;
  s.selection = Selection::final;
  s.saturate_at = 0.99;
  s.extra_epochs = 10;
  return s;
}

std::shared_ptr<ImageNet> build_classifier(const ClassifierSpec& spec) {
  if (spec.arch == ClassifierArch::cnn2) return std::make_shared<Cnn2Net>(spec.side, spec.classes);
  return std::make_shared<Vgg11Net>(spec.side, spec.classes, spec.width_divisor);
}

std::shared_ptr<ImageNet> restore_classifier(const ModelCheckpoint& ckpt) {
  ClassifierSpec spec;
  spec.arch = parse_arch(ckpt.meta("arch"));
  spec.side = ckpt.meta_int("side");
  spec.classes = ckpt.meta_int("classes");
  spec.width_divisor = ckpt.meta_int("width_divisor");
  auto net = build_classifier(spec);
  ckpt.load_into(*net);
  net->eval();
  return net;
}

TrainedClassifier train_classifier(const ClassifierSpec& spec, const FaceDataset& train,
                                   const FaceDataset& val, uint64_t seed) {
  if (train.empty()) throw ConfigError("empty training set");
  if (train.height() != spec.side || train.width() != spec.side) {
    throw ConfigError("training images are " + std::to_string(train.height()) + "px, spec expects " +
                      std::to_string(spec.side));
  }
  torch::manual_seed(seed);
  auto net = build_classifier(spec);
  auto gen = at::detail::createCPUGenerator(seed ^ 0x5DEECE66DULL);
  torch::optim::Adam opt(net->parameters(),
                         torch::optim::AdamOptions(spec.lr).weight_decay(spec.weight_decay));

  auto meta = describe(spec);
  meta["seed"] = std::to_string(seed);

  TrainedClassifier out;
  auto& m = out.metrics;
  const auto labels = train.label_tensor();
  auto snapshot = [&](int64_t epoch, double train_top1, double val_top1) {
    auto md = meta;
    md["epoch"] = std::to_string(epoch);
    md["train_top1"] = std::to_string(train_top1);
    md["val_top1"] = std::to_string(val_top1);
    out.checkpoint = ModelCheckpoint::from_module(*net, md);
    m.selected_epoch = epoch;
    m.selected_train_top1 = train_top1;
    m.selected_val_top1 = val_top1;
  };

  const double init_val = val.empty() ? 0.0 : top1_accuracy(*net, val);
  snapshot(0, top1_accuracy(*net, train), init_val);
  double best_val = init_val;
  int64_t stop_epoch = spec.epochs;

  for (int64_t epoch = 1; epoch <= stop_epoch; ++epoch) {
    net->train();
    auto perm = torch::randperm(train.size(), gen, torch::kInt64);
    double loss_sum = 0.0;
    int64_t batches = 0;
    for (int64_t i = 0; i < train.size(); i += spec.batch_size) {
      auto idx = perm.slice(0, i, std::min(i + spec.batch_size, train.size()));
      auto logits = net->forward(train.images.index_select(0, idx));
      auto loss = torch::nn::functional::cross_entropy(logits, labels.index_select(0, idx));
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        throw NumericalError(to_string(spec.arch) + " training diverged at epoch " + std::to_string(epoch) +
                             " batch " + std::to_string(batches) + " (loss " + std::to_string(value) + ")");
      }
      opt.zero_grad();
      loss.backward();
      opt.step();
      loss_sum += value;
      ++batches;
    }
    net->eval();
    const double train_top1 = top1_accuracy(*net, train);
    const double val_top1 = val.empty() ? 0.0 : top1_accuracy(*net, val);
    m.train_loss.push_back(loss_sum / static_cast<double>(batches));
    m.train_top1.push_back(train_top1);
    m.val_top1.push_back(val_top1);

    if (spec.selection == Selection::final || val_top1 > best_val) {
      best_val = std::max(best_val, val_top1);
      snapshot(epoch, train_top1, val_top1);
    }
    if (spec.saturate_at > 0.0 && train_top1 >= spec.saturate_at && stop_epoch == spec.epochs) {
      stop_epoch = std::min(spec.epochs, epoch + spec.extra_epochs);
    }
  }
  return out;
}

torch::Tensor predict_probs(ImageNet& net, const torch::Tensor& images) {
  auto batch = images.dim() == 3 ? images.unsqueeze(0) : images;
  if (batch.dim() != 4 || batch.size(1) != 1) {
    throw ConfigError("predict_probs expects [N, 1, H, W] or [1, H, W] images");
  }
  return torch::softmax(batched_logits(net, batch), 1);
}

double top1_accuracy_from_logits(const torch::Tensor& logits, const std::vector<int64_t>& labels) {
  if (labels.empty()) throw ConfigError("top-1 accuracy of an empty dataset");
  // torch::argmax does not promise first-index tie breaking; scan explicitly.
  auto l = logits.to(torch::kDouble).contiguous();
  const int64_t classes = l.size(1);
  const double* p = l.data_ptr<double>();
  int64_t hits = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    int64_t best = 0;
    for (int64_t c = 1; c < classes; ++c) {
      if (p[i * classes + c] > p[i * classes + best]) best = c;
    }
    hits += best == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double top1_accuracy(ImageNet& net, const FaceDataset& ds) {
  if (ds.empty()) throw ConfigError("top-1 accuracy of an empty dataset");
  return top1_accuracy_from_logits(batched_logits(net, ds.images), ds.labels);
}

double mean_prediction_entropy(ImageNet& net, const torch::Tensor& images) {
  auto logp = torch::log_softmax(batched_logits(net, images).to(torch::kDouble), 1);
  return (-(logp.exp() * logp).sum(1)).mean().item<double>();
}

LoadedClassifier LoadedClassifier::from(const ModelCheckpoint& ckpt) {
  return {restore_classifier(ckpt), ckpt.checksum()};
}

AttackResult pixel_space_attack(const LoadedClassifier& classifier, int64_t side,
                                const PixelAttackConfig& cfg) {
  ImageNet& net = *classifier.net;
  auto gen = at::detail::createCPUGenerator(cfg.seed);
  const auto start = torch::randn({1, 1, side, side}, gen, torch::kFloat32);
  FrozenParameters frozen(net);
  net.eval();

  Objective objective = [&](const torch::Tensor& x) {
    auto leaf = x.detach().requires_grad_(true);
    auto logits = net.forward(leaf);
    auto loss = cross_entropy(logits, cfg.target);
    Evaluation e;
    e.grad = torch::autograd::grad({loss}, {leaf})[0];
    e.loss = loss.item<double>();
    e.confidence = torch::softmax(logits.detach().to(torch::kDouble), 1)[0][cfg.target].item<double>();
    return e;
  };
  DescentOptions opts;
  opts.step = cfg.step;
  opts.step_growth = cfg.step_growth;
  opts.max_grad_norm = cfg.grad_clip;
  opts.max_iters = cfg.iters;
  opts.stop_loss = cfg.stop_confidence < 1.0 ? -std::log(cfg.stop_confidence) : 0.0;
  auto outcome = gradient_descent(start, objective, opts);

  AttackResult r;
  r.method = AttackMethod::pixel;
  r.target = cfg.target;
  r.image = outcome.point.squeeze(0);
  r.loss_trace = outcome.loss_trace;
  r.confidence_trace = outcome.confidence_trace;
  r.iterations_run = outcome.iterations;
  r.attacked_confidence = outcome.confidence_trace.back();
  r.attacked_checksum = classifier.checksum;
  r.numerical_failure = outcome.reason == StopReason::non_finite;
  r.seeds["noise"] = cfg.seed;
  r.info["stop_reason"] = to_string(outcome.reason);
  return r;
}

}  // namespace classrecon
