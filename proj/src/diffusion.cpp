#include "classrecon/diffusion.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <numbers>

#include "classrecon/errors.hpp"

namespace classrecon {
namespace {

torch::Tensor alpha_bar_table(const VarianceSchedule& sched) {
  std::vector<double> ab(static_cast<size_t>(sched.steps()));
  for (int64_t t = 1; t <= sched.steps(); ++t) ab[static_cast<size_t>(t - 1)] = sched.alpha_bar(t);
  return torch::tensor(ab, torch::kDouble);
}

void check_step(int64_t t, const VarianceSchedule& sched) {
  if (t < 1 || t > sched.steps()) {
    throw ConfigError("diffusion step " + std::to_string(t) + " outside 1.." + std::to_string(sched.steps()));
  }
}

std::string kind_name(PredictorKind k) { return k == PredictorKind::unet ? "unet" : "tiny"; }

}  // namespace

torch::Tensor forward_noise(const torch::Tensor& x, int64_t t, const torch::Tensor& eps,
                            const VarianceSchedule& sched) {
  check_step(t, sched);
  if (x.sizes() != eps.sizes()) throw ConfigError("forward_noise: image and noise shapes differ");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor forward_noise(const torch::Tensor& x, const torch::Tensor& t, const torch::Tensor& eps,
                            const VarianceSchedule& sched) {
  if (x.sizes() != eps.sizes()) throw ConfigError("forward_noise: image and noise shapes differ");
  auto ab = alpha_bar_table(sched).index_select(0, t - 1).to(x.dtype());
  std::vector<int64_t> shape(static_cast<size_t>(x.dim()), 1);
  shape[0] = x.size(0);
  ab = ab.view(shape);
  return ab.sqrt() * x + (1.0 - ab).sqrt() * eps;
}

std::shared_ptr<NoisePredictorNet> build_predictor(const PredictorSpec& spec) {
  if (spec.kind == PredictorKind::unet) {
    return std::make_shared<UNet>(UNetOptions{spec.side, spec.base_width, true, spec.max_steps});
  }
  return std::make_shared<TinyPredictor>(spec.hidden, spec.max_steps);
}

std::map<std::string, std::string> describe(const PredictorSpec& spec, const VarianceSchedule& sched,
                                            double beta_start, double beta_end) {
  auto precise = [](double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  return {{"arch", kind_name(spec.kind)},
          {"side", std::to_string(spec.side)},
          {"base_width", std::to_string(spec.base_width)},
          {"hidden", std::to_string(spec.hidden)},
          {"max_steps", std::to_string(spec.max_steps)},
          {"schedule_steps", std::to_string(sched.steps())},
          {"beta_start", precise(beta_start)},
          {"beta_end", precise(beta_end)}};
}

NoisePredictor restore_predictor(const ModelCheckpoint& ckpt) {
  PredictorSpec spec;
  const auto& arch = ckpt.meta("arch");
  if (arch != "unet" && arch != "tiny") throw ConfigError("checkpoint is not a noise predictor: " + arch);
  spec.kind = arch == "unet" ? PredictorKind::unet : PredictorKind::tiny;
  spec.side = ckpt.meta_int("side");
  spec.base_width = ckpt.meta_int("base_width");
  spec.hidden = ckpt.meta_int("hidden");
  spec.max_steps = ckpt.meta_int("max_steps");
  NoisePredictor p;
  p.net = build_predictor(spec);
  ckpt.load_into(*p.net);
  p.net->eval();
  p.schedule = build_schedule(ckpt.meta_int("schedule_steps"), ckpt.meta_double("beta_start"),
                              ckpt.meta_double("beta_end"));
  p.checkpoint = ckpt;
  return p;
}

TrainedPredictor train_diffusion(const FaceDataset& pool, const VarianceSchedule& sched,
                                 const DiffusionTrainConfig& cfg, uint64_t seed) {
  if (pool.empty()) throw ConfigError("diffusion training pool is empty");
  if (pool.height() != cfg.predictor.side) throw ConfigError("pool resolution does not match predictor side");
  torch::manual_seed(seed);
  auto net = build_predictor(cfg.predictor);
  auto gen = at::detail::createCPUGenerator(seed ^ 0xD1FFu);
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.lr));

  TrainedPredictor out;
  net->train();
  for (int64_t it = 0; it < cfg.iterations; ++it) {
    const double progress = static_cast<double>(it) / static_cast<double>(std::max<int64_t>(1, cfg.iterations));
    const double lr = cfg.lr * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

    auto idx = torch::randint(0, pool.size(), {cfg.batch_size}, gen, torch::kInt64);
    auto x0 = pool.images.index_select(0, idx);
    auto t = torch::randint(1, sched.steps() + 1, {cfg.batch_size}, gen, torch::kInt64);
    auto eps = torch::randn(x0.sizes(), gen, torch::kFloat32);
    auto loss = torch::mse_loss(net->forward(forward_noise(x0, t, eps, sched), t), eps);
    const double value = loss.item<double>();
    if (!std::isfinite(value)) {
      throw NumericalError("diffusion training diverged at iteration " + std::to_string(it));
    }
    opt.zero_grad();
    loss.backward();
    opt.step();
    out.loss_trace.push_back(value);
  }
  net->eval();
  auto meta = describe(cfg.predictor, sched, cfg.beta_start, cfg.beta_end);
  meta["seed"] = std::to_string(seed);
  meta["iterations"] = std::to_string(cfg.iterations);
  out.predictor.net = net;
  out.predictor.schedule = sched;
  out.predictor.checkpoint = ModelCheckpoint::from_module(*net, meta);
  return out;
}

double probe_noise_mse(NoisePredictorNet& net, const VarianceSchedule& sched, const torch::Tensor& images,
                       uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = at::detail::createCPUGenerator(seed);
  auto t = torch::randint(1, sched.steps() + 1, {images.size(0)}, gen, torch::kInt64);
  auto eps = torch::randn(images.sizes(), gen, images.scalar_type());
  return torch::mse_loss(net.forward(forward_noise(images, t, eps, sched), t), eps).item<double>();
}

torch::Tensor denoise_step(const torch::Tensor& x_t, int64_t t, const torch::Tensor& z,
                           NoisePredictorNet& net, const VarianceSchedule& sched) {
  check_step(t, sched);
  const double alpha = sched.alpha(t);
  const double eps_coef = (1.0 - alpha) / std::sqrt(1.0 - sched.alpha_bar(t));
  auto steps = torch::full({x_t.size(0)}, t, torch::kInt64);
  auto eps = net.forward(x_t, steps);
  return (x_t - eps_coef * eps) / std::sqrt(alpha) + sched.sigma(t) * z;
}

NoisePath NoisePath::clone() const {
  NoisePath p;
  p.x_T = x_T.clone();
  for (const auto& zt : z) p.z.push_back(zt.clone());
  p.seed = seed;
  return p;
}

NoisePath make_noise_path(uint64_t seed, int64_t side, int64_t steps, bool zero_final_step, torch::Dtype dtype) {
  auto gen = at::detail::createCPUGenerator(seed);
  NoisePath p;
  p.seed = seed;
  p.x_T = torch::randn({1, 1, side, side}, gen, dtype);
  p.z.resize(static_cast<size_t>(steps));
  // Draw from t = T downwards, matching the order the sampler consumes them.
  for (int64_t t = steps; t >= 1; --t) {
    auto zt = torch::randn({1, 1, side, side}, gen, dtype);
    p.z[static_cast<size_t>(t - 1)] = (t == 1 && zero_final_step) ? torch::zeros_like(zt) : zt;
  }
  return p;
}

NoisePath with_fresh_injections(const NoisePath& path, uint64_t seed, bool zero_final_step) {
  NoisePath fresh = make_noise_path(seed, path.x_T.size(-1), path.steps(), zero_final_step,
                                    path.x_T.scalar_type());
  fresh.x_T = path.x_T.clone();
  return fresh;
}

torch::Tensor run_steps(const torch::Tensor& x, const NoisePath& path, int64_t from, int64_t to,
                        NoisePredictorNet& net, const VarianceSchedule& sched) {
  torch::Tensor cur = x;
  for (int64_t t = from; t > to; --t) cur = denoise_step(cur, t, path.z_at(t), net, sched);
  return cur;
}

torch::Tensor sample(NoisePredictorNet& net, const VarianceSchedule& sched, const NoisePath& path) {
  if (path.steps() != sched.steps()) {
    throw ConfigError("noise path has " + std::to_string(path.steps()) + " steps, schedule has " +
                      std::to_string(sched.steps()));
  }
  torch::NoGradGuard no_grad;
  auto x = run_steps(path.x_T, path, sched.steps(), 0, net, sched);
  if (!torch::isfinite(x).all().item<bool>()) throw NumericalError("sampler produced non-finite values");
  return x;
}

}  // namespace classrecon
