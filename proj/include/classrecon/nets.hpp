#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include <torch/torch.h>

namespace classrecon {

/// Image in, per-image output vector (class logits, or a single real/fake
/// logit for a discriminator).
struct ImageNet : torch::nn::Module {
  virtual torch::Tensor forward(torch::Tensor images) = 0;
};

/// Predicts the noise contained in `x_t` at diffusion step `t` (1-based,
/// one entry per batch element).
struct NoisePredictorNet : torch::nn::Module {
  virtual torch::Tensor forward(torch::Tensor x_t, torch::Tensor t) = 0;
};

/// conv(1->32, 3x3) ReLU maxpool(2) conv(32->64, 3x3) ReLU maxpool(2) linear.
struct Cnn2Net : ImageNet {
  Cnn2Net(int64_t side, int64_t outputs);
  torch::Tensor forward(torch::Tensor images) override;

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::Linear head{nullptr};
};

/// VGG11 column (8 conv layers, 5 max-pools) for one input channel, channel
/// widths divided by `width_divisor`, followed by a two-layer classifier.
struct Vgg11Net : ImageNet {
  Vgg11Net(int64_t side, int64_t classes, int64_t width_divisor);
  torch::Tensor forward(torch::Tensor images) override;

  torch::nn::Sequential features{nullptr};
  torch::nn::Sequential classifier{nullptr};
};

struct UNetOptions {
  int64_t side = 32;
  int64_t base_width = 16;
  bool step_conditioned = true;
  int64_t max_steps = 600;
};

/// Three-resolution U-Net (side, side/2, side/4) of residual blocks with
/// channel doubling and skip connections. When step-conditioned, a
/// sinusoidal embedding of `t` is projected and added inside every block.
struct UNet : NoisePredictorNet {
  explicit UNet(const UNetOptions& options);
  torch::Tensor forward(torch::Tensor x_t, torch::Tensor t) override;
  const UNetOptions& options() const { return options_; }

  struct Block {
    torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
    torch::nn::Linear step_proj{nullptr};
  };

 private:
  Block make_block(const std::string& name, int64_t in, int64_t out);
  torch::Tensor run_block(Block& b, torch::Tensor x, const torch::Tensor& emb);

  UNetOptions options_;
  torch::nn::Sequential step_mlp{nullptr};
  torch::nn::Conv2d stem{nullptr};
  Block enc1_, enc2_, mid_, dec2_, dec1_;
  torch::nn::ConvTranspose2d up2{nullptr}, up1{nullptr};
  torch::nn::GroupNorm out_norm{nullptr};
  torch::nn::Conv2d out{nullptr};
};

/// Two conv layers with a step-dependent per-channel shift in between; used
/// for small-configuration gradient checks.
struct TinyPredictor : NoisePredictorNet {
  TinyPredictor(int64_t hidden, int64_t max_steps);
  torch::Tensor forward(torch::Tensor x_t, torch::Tensor t) override;

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::Linear step_proj{nullptr};
  int64_t max_steps;
};

/// Unconditioned U-Net squashed to [-1, 1]: maps a noise image to an image.
struct GeneratorNet : ImageNet {
  GeneratorNet(int64_t side, int64_t base_width);
  torch::Tensor forward(torch::Tensor noise) override;

  std::shared_ptr<UNet> unet;
};

/// Convolutional VAE mirroring the cnn2 recipe: the encoder produces
/// (mu, log_sigma) of a diagonal Gaussian over a `latent`-dimensional code;
/// the decoder maps a code back to a [-1, 1] image.
struct VaeNet : torch::nn::Module {
  VaeNet(int64_t side, int64_t latent);
  std::pair<torch::Tensor, torch::Tensor> encode(torch::Tensor images);
  torch::Tensor decode(torch::Tensor codes);

  int64_t side, latent;
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::Linear to_stats{nullptr}, from_code{nullptr};
  torch::nn::ConvTranspose2d up1{nullptr}, up2{nullptr};
};

/// Sinusoidal embedding of integer steps; returns [N, dim].
torch::Tensor step_embedding(const torch::Tensor& t, int64_t dim);

/// Sum over all parameters' element counts.
int64_t parameter_count(const torch::nn::Module& module);

/// RAII: disables requires_grad on every parameter, restoring on exit.
class FrozenParameters {
 public:
  explicit FrozenParameters(torch::nn::Module& module);
  ~FrozenParameters();
  FrozenParameters(const FrozenParameters&) = delete;
  FrozenParameters& operator=(const FrozenParameters&) = delete;

 private:
  std::vector<std::pair<torch::Tensor, bool>> saved_;
};

}  // namespace classrecon
