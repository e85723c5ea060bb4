#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include <torch/torch.h>

#include "classrecon/nets.hpp"

namespace classrecon::testing {

// Returns the same logits row for every image.
struct FixedLogits : ImageNet {
  explicit FixedLogits(torch::Tensor row) : row_(std::move(row)) {}
  torch::Tensor forward(torch::Tensor images) override {
    return row_.to(images.dtype()).unsqueeze(0).expand({images.size(0), row_.size(0)});
  }
  torch::Tensor row_;
};

// eps_theta(x, t) = value everywhere.
struct ConstantPredictor : NoisePredictorNet {
  explicit ConstantPredictor(double value) : value_(value) {}
  torch::Tensor forward(torch::Tensor x_t, torch::Tensor) override { return torch::full_like(x_t, value_); }
  double value_;
};

// Fresh scratch directory under the system temp dir, removed on scope exit.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("classrecon_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  static int& counter() {
    static int n = 0;
    return n;
  }
  std::filesystem::path path_;
};

}  // namespace classrecon::testing
