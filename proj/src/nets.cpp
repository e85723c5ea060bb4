#include "classrecon/nets.hpp"

#include <cmath>
#include <numbers>

#include "classrecon/errors.hpp"

namespace nn = torch::nn;

namespace classrecon {
namespace {

nn::Conv2d conv3x3(int64_t in, int64_t out) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1));
}

int64_t groups_for(int64_t channels) {
  for (int64_t g : {8, 4, 2}) {
    if (channels % g == 0) return g;
  }
  return 1;
}

}  // namespace

Cnn2Net::Cnn2Net(int64_t side, int64_t outputs) {
  if (side % 4 != 0) throw ConfigError("cnn2 needs a side divisible by 4");
  conv1 = register_module("conv1", conv3x3(1, 32));
  conv2 = register_module("conv2", conv3x3(32, 64));
  head = register_module("head", nn::Linear(64 * (side / 4) * (side / 4), outputs));
}

torch::Tensor Cnn2Net::forward(torch::Tensor images) {
  auto x = torch::max_pool2d(torch::relu(conv1(images)), 2);
  x = torch::max_pool2d(torch::relu(conv2(x)), 2);
  return head(x.flatten(1));
}

Vgg11Net::Vgg11Net(int64_t side, int64_t classes, int64_t width_divisor) {
  if (side % 32 != 0) throw ConfigError("vgg11 needs a side divisible by 32");
  if (width_divisor < 1) throw ConfigError("vgg11 width divisor must be >= 1");
  // 0 marks a max-pool.
  const int64_t column[] = {64, 0, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0};
  features = nn::Sequential();
  int64_t channels = 1;
  for (int64_t c : column) {
    if (c == 0) {
      features->push_back(nn::MaxPool2d(2));
    } else {
      const int64_t width = c / width_divisor;
      features->push_back(conv3x3(channels, width));
      features->push_back(nn::ReLU());
      channels = width;
    }
  }
  const int64_t spatial = side / 32;
  const int64_t hidden = 2 * channels;
  classifier = nn::Sequential(nn::Flatten(), nn::Linear(channels * spatial * spatial, hidden),
                              nn::ReLU(), nn::Linear(hidden, classes));
  register_module("features", features);
  register_module("classifier", classifier);
}

torch::Tensor Vgg11Net::forward(torch::Tensor images) { return classifier->forward(features->forward(images)); }

torch::Tensor step_embedding(const torch::Tensor& t, int64_t dim) {
  const int64_t half = dim / 2;
  auto freqs = torch::exp(torch::arange(half, torch::kDouble) * (-std::log(10000.0) / static_cast<double>(half)));
  auto args = t.to(torch::kDouble).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::sin(args), torch::cos(args)}, 1);
}

UNet::UNet(const UNetOptions& options) : options_(options) {
  if (options.side % 4 != 0) throw ConfigError("U-Net needs a side divisible by 4");
  const int64_t b = options.base_width;
  if (options.step_conditioned) {
    step_mlp = register_module("step_mlp", nn::Sequential(nn::Linear(4 * b, 4 * b), nn::SiLU(),
                                                          nn::Linear(4 * b, 4 * b)));
  }
  stem = register_module("stem", conv3x3(1, b));
  enc1_ = make_block("enc1", b, b);
  enc2_ = make_block("enc2", b, 2 * b);
  mid_ = make_block("mid", 2 * b, 4 * b);
  up2 = register_module("up2", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(4 * b, 2 * b, 2).stride(2)));
  dec2_ = make_block("dec2", 4 * b, 2 * b);
  up1 = register_module("up1", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(2 * b, b, 2).stride(2)));
  dec1_ = make_block("dec1", 2 * b, b);
  out_norm = register_module("out_norm", nn::GroupNorm(groups_for(b), b));
  out = register_module("out", nn::Conv2d(nn::Conv2dOptions(b, 1, 1)));
}

UNet::Block UNet::make_block(const std::string& name, int64_t in, int64_t out_ch) {
  Block blk;
  blk.norm1 = register_module(name + "_norm1", nn::GroupNorm(groups_for(in), in));
  blk.conv1 = register_module(name + "_conv1", conv3x3(in, out_ch));
  blk.norm2 = register_module(name + "_norm2", nn::GroupNorm(groups_for(out_ch), out_ch));
  blk.conv2 = register_module(name + "_conv2", conv3x3(out_ch, out_ch));
  if (in != out_ch) blk.skip = register_module(name + "_skip", nn::Conv2d(nn::Conv2dOptions(in, out_ch, 1)));
  if (options_.step_conditioned) {
    blk.step_proj = register_module(name + "_step", nn::Linear(4 * options_.base_width, out_ch));
  }
  return blk;
}

// Pre-activation residual block. The identity path keeps the absolute level
// and scale of the input, which the normalized branch cannot see.
torch::Tensor UNet::run_block(Block& b, torch::Tensor x, const torch::Tensor& emb) {
  auto h = b.conv1(torch::silu(b.norm1(x)));
  if (emb.defined()) h = h + b.step_proj(emb).unsqueeze(-1).unsqueeze(-1);
  h = b.conv2(torch::silu(b.norm2(h)));
  return h + (b.skip ? b.skip(x) : x);
}

torch::Tensor UNet::forward(torch::Tensor x_t, torch::Tensor t) {
  torch::Tensor emb;
  if (options_.step_conditioned) {
    emb = step_mlp->forward(step_embedding(t, 4 * options_.base_width).to(x_t.dtype()));
  }
  auto h1 = run_block(enc1_, stem(x_t), emb);
  auto h2 = run_block(enc2_, torch::avg_pool2d(h1, 2), emb);
  auto h3 = run_block(mid_, torch::avg_pool2d(h2, 2), emb);
  auto d2 = run_block(dec2_, torch::cat({up2(h3), h2}, 1), emb);
  auto d1 = run_block(dec1_, torch::cat({up1(d2), h1}, 1), emb);
  return out(torch::silu(out_norm(d1)));
}

TinyPredictor::TinyPredictor(int64_t hidden, int64_t max_steps_) : max_steps(max_steps_) {
  conv1 = register_module("conv1", conv3x3(1, hidden));
  conv2 = register_module("conv2", conv3x3(hidden, 1));
  step_proj = register_module("step_proj", nn::Linear(1, hidden));
}

torch::Tensor TinyPredictor::forward(torch::Tensor x_t, torch::Tensor t) {
  auto s = (t.to(x_t.dtype()) / static_cast<double>(max_steps)).unsqueeze(1);
  auto h = torch::tanh(conv1(x_t) + step_proj(s).unsqueeze(-1).unsqueeze(-1));
  return conv2(h);
}

GeneratorNet::GeneratorNet(int64_t side, int64_t base_width) {
  unet = register_module("unet", std::make_shared<UNet>(UNetOptions{side, base_width, false, 1}));
}

torch::Tensor GeneratorNet::forward(torch::Tensor noise) { return torch::tanh(unet->forward(noise, {})); }

VaeNet::VaeNet(int64_t side_, int64_t latent_) : side(side_), latent(latent_) {
  if (side % 4 != 0) throw ConfigError("VAE needs a side divisible by 4");
  if (latent < 1) throw ConfigError("VAE latent dimension must be positive");
  const int64_t cells = 64 * (side / 4) * (side / 4);
  conv1 = register_module("conv1", conv3x3(1, 32));
  conv2 = register_module("conv2", conv3x3(32, 64));
  to_stats = register_module("to_stats", nn::Linear(cells, 2 * latent));
  from_code = register_module("from_code", nn::Linear(latent, cells));
  up1 = register_module("up1", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(64, 32, 4).stride(2).padding(1)));
  up2 = register_module("up2", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(32, 1, 4).stride(2).padding(1)));
}

std::pair<torch::Tensor, torch::Tensor> VaeNet::encode(torch::Tensor images) {
  auto x = torch::max_pool2d(torch::relu(conv1(images)), 2);
  x = torch::max_pool2d(torch::relu(conv2(x)), 2);
  auto stats = to_stats(x.flatten(1));
  return {stats.slice(1, 0, latent), stats.slice(1, latent, 2 * latent)};
}

torch::Tensor VaeNet::decode(torch::Tensor codes) {
  auto x = torch::relu(from_code(codes)).view({codes.size(0), 64, side / 4, side / 4});
  x = torch::relu(up1(x));
  return torch::tanh(up2(x));
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

FrozenParameters::FrozenParameters(torch::nn::Module& module) {
  for (auto& p : module.parameters()) {
    saved_.emplace_back(p, p.requires_grad());
    p.set_requires_grad(false);
  }
}

FrozenParameters::~FrozenParameters() {
  for (auto& [p, flag] : saved_) p.set_requires_grad(flag);
}

}  // namespace classrecon
