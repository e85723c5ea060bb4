#include "classrecon/path_attack.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "classrecon/descent.hpp"
#include "classrecon/errors.hpp"
#include "classrecon/eval.hpp"

namespace classrecon {
namespace {

struct LossAtImage {
  torch::Tensor loss;
  double confidence;
};

LossAtImage classify(ImageNet& classifier, const torch::Tensor& image, int64_t target) {
  auto logits = classifier.forward(image);
  auto loss = cross_entropy(logits, target);
  const double conf = torch::softmax(logits.detach().to(torch::kDouble), 1)[0][target].item<double>();
  return {loss, conf};
}

// Path whose x_T (and optionally z's) are fresh autograd leaves.
NoisePath leaf_path(const NoisePath& path, bool with_z) {
  NoisePath p;
  p.seed = path.seed;
  p.x_T = path.x_T.detach().clone().requires_grad_(true);
  for (const auto& z : path.z) {
    auto c = z.detach().clone();
    p.z.push_back(with_z ? c.requires_grad_(true) : c);
  }
  return p;
}

PathGradient full_graph_gradient(ImageNet& classifier, NoisePredictorNet& predictor, const VarianceSchedule& sched,
                                 const NoisePath& path, int64_t target, bool with_z) {
  NoisePath p = leaf_path(path, with_z);
  auto image = run_steps(p.x_T, p, sched.steps(), 0, predictor, sched);
  auto [loss, conf] = classify(classifier, image, target);

  std::vector<torch::Tensor> inputs{p.x_T};
  if (with_z) inputs.insert(inputs.end(), p.z.begin(), p.z.end());
  // allow_unused: z_1 may be multiplied by sigma but is always used; keep
  // the flag so a zero-weight head still yields defined (zero) gradients.
  auto grads = torch::autograd::grad({loss}, inputs, {}, false, false, true);

  PathGradient out;
  out.loss = loss.item<double>();
  out.confidence = conf;
  out.image = image.detach();
  out.grad_x_T = grads[0].defined() ? grads[0] : torch::zeros_like(p.x_T);
  if (with_z) {
    for (size_t i = 1; i < grads.size(); ++i) {
      out.grad_z.push_back(grads[i].defined() ? grads[i] : torch::zeros_like(p.z[i - 1]));
    }
  }
  return out;
}

PathGradient checkpointed_gradient(ImageNet& classifier, NoisePredictorNet& predictor,
                                   const VarianceSchedule& sched, const NoisePath& path, int64_t target,
                                   int64_t segment, bool with_z) {
  const int64_t T = sched.steps();
  // Segment boundaries t_0 = T > t_1 > ... > t_k = 0 and the states there.
  std::vector<int64_t> bounds;
  std::vector<torch::Tensor> states;
  {
    torch::NoGradGuard no_grad;
    torch::Tensor x = path.x_T.detach();
    for (int64_t hi = T; hi > 0; hi -= segment) {
      const int64_t lo = std::max<int64_t>(0, hi - segment);
      bounds.push_back(hi);
      states.push_back(x);
      x = run_steps(x, path, hi, lo, predictor, sched);
    }
    bounds.push_back(0);
    states.push_back(x);
  }

  auto image = states.back().clone().requires_grad_(true);
  auto [loss, conf] = classify(classifier, image, target);
  torch::Tensor upstream = torch::autograd::grad({loss}, {image}, {}, false, false, true)[0];
  if (!upstream.defined()) upstream = torch::zeros_like(image);

  PathGradient out;
  out.loss = loss.item<double>();
  out.confidence = conf;
  out.image = image.detach();
  if (with_z) out.grad_z.resize(path.z.size());

  for (size_t s = bounds.size() - 1; s-- > 0;) {
    const int64_t hi = bounds[s];
    const int64_t lo = bounds[s + 1];
    auto start = states[s].detach().clone().requires_grad_(true);
    NoisePath local;
    std::vector<torch::Tensor> inputs{start};
    local.z.resize(path.z.size());
    for (int64_t t = lo + 1; t <= hi; ++t) {
      auto z = path.z_at(t).detach();
      if (with_z) {
        z = z.clone().requires_grad_(true);
        inputs.push_back(z);
      }
      local.z[static_cast<size_t>(t - 1)] = z;
    }
    auto end = run_steps(start, local, hi, lo, predictor, sched);
    auto grads = torch::autograd::grad({end}, inputs, {upstream}, false, false, true);
    upstream = grads[0].defined() ? grads[0] : torch::zeros_like(start);
    if (with_z) {
      for (int64_t t = lo + 1; t <= hi; ++t) {
        auto& g = grads[static_cast<size_t>(t - lo)];
        out.grad_z[static_cast<size_t>(t - 1)] = g.defined() ? g : torch::zeros_like(start);
      }
    }
  }
  out.grad_x_T = upstream;
  return out;
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

GradientMode GradientMode::parse(const std::string& text) {
  if (text == "full" || text == "full_graph") return full_graph();
  const std::string prefix = "checkpointed:";
  if (text.rfind(prefix, 0) == 0) {
    int64_t seg = 0;
    try {
      seg = std::stoll(text.substr(prefix.size()));
    } catch (const std::exception&) {
      seg = 0;
    }
    if (seg < 1) throw ConfigError("segment length must be a positive integer: " + text);
    return checkpointed(seg);
  }
  if (text == "checkpointed") return checkpointed(25);
  throw ConfigError("gradient mode must be 'full' or 'checkpointed:<n>', got '" + text + "'");
}

std::string GradientMode::str() const {
  return kind == Kind::full_graph ? "full" : "checkpointed:" + std::to_string(segment_length);
}

PathGradient gradient_of_path_loss(ImageNet& classifier, NoisePredictorNet& predictor,
                                   const VarianceSchedule& sched, const NoisePath& path, int64_t target,
                                   const GradientMode& mode, bool with_z) {
  if (path.steps() != sched.steps()) throw ConfigError("noise path length does not match the schedule");
  if (mode.kind == GradientMode::Kind::checkpointed && mode.segment_length < 1) {
    throw ConfigError("checkpoint segment length must be >= 1");
  }
  FrozenParameters frozen_classifier(classifier);
  FrozenParameters frozen_predictor(predictor);
  torch::AutoGradMode enable(true);
  if (mode.kind == GradientMode::Kind::full_graph) {
    return full_graph_gradient(classifier, predictor, sched, path, target, with_z);
  }
  return checkpointed_gradient(classifier, predictor, sched, path, target, mode.segment_length, with_z);
}

AttackResult attack(const LoadedClassifier& classifier, const NoisePredictor& predictor, const NoisePath& path,
                    const PathAttackConfig& cfg, NoisePath* final_path) {
  const auto& sched = predictor.schedule;
  ImageNet& clf = *classifier.net;
  NoisePredictorNet& net = *predictor.net;
  clf.eval();
  net.eval();

  // Optimization variable: x_T alone, or x_T stacked on top of z_T..z_1.
  auto pack = [&](const NoisePath& p) {
    if (!cfg.optimize_z) return p.x_T.detach().clone();
    std::vector<torch::Tensor> rows{p.x_T};
    rows.insert(rows.end(), p.z.begin(), p.z.end());
    return torch::cat(rows, 0);
  };
  auto unpack = [&](const torch::Tensor& v) {
    NoisePath p;
    p.seed = path.seed;
    if (!cfg.optimize_z) {
      p.x_T = v;
      p.z = path.z;
    } else {
      p.x_T = v.slice(0, 0, 1);
      for (int64_t t = 1; t <= path.steps(); ++t) p.z.push_back(v.slice(0, t, t + 1));
    }
    return p;
  };

  torch::Tensor last_image;
  Objective objective = [&](const torch::Tensor& v) {
    auto g = gradient_of_path_loss(clf, net, sched, unpack(v), cfg.target, cfg.mode, cfg.optimize_z);
    Evaluation e;
    e.loss = g.loss;
    e.confidence = g.confidence;
    if (cfg.optimize_z) {
      std::vector<torch::Tensor> rows{g.grad_x_T};
      rows.insert(rows.end(), g.grad_z.begin(), g.grad_z.end());
      e.grad = torch::cat(rows, 0);
    } else {
      e.grad = g.grad_x_T;
    }
    return e;
  };

  DescentOptions opts;
  opts.step = cfg.lr;
  opts.max_iters = cfg.max_iters;
  opts.stop_loss = cfg.stop_loss;
  opts.backtracking = cfg.backtracking;
  opts.max_grad_norm = cfg.grad_clip;
  opts.step_growth = cfg.step_growth;
  opts.plateau_window = cfg.plateau_window;
  opts.plateau_tol = cfg.plateau_tol;
  auto outcome = gradient_descent(pack(path), objective, opts);

  NoisePath optimized = unpack(outcome.point);
  AttackResult r;
  r.method = AttackMethod::diffusion;
  r.target = cfg.target;
  r.loss_trace = outcome.loss_trace;
  r.confidence_trace = outcome.confidence_trace;
  r.iterations_run = outcome.iterations;
  r.attacked_checksum = classifier.checksum;
  r.numerical_failure = outcome.reason == StopReason::non_finite;
  r.seeds["path"] = path.seed;
  r.info["stop_reason"] = to_string(outcome.reason);
  r.info["lr"] = format_double(cfg.lr);
  r.info["grad_clip"] = format_double(cfg.grad_clip);
  r.info["step_growth"] = format_double(cfg.step_growth);
  r.info["grad_mode"] = cfg.mode.str();
  r.info["evaluations"] = std::to_string(outcome.evaluations);
  r.info["optimize_z"] = cfg.optimize_z ? "1" : "0";
  try {
    r.image = sample(net, sched, optimized).squeeze(0);
    torch::NoGradGuard no_grad;
    r.attacked_confidence = predict_probs(clf, r.image)[0][cfg.target].item<double>();
  } catch (const NumericalError&) {
    r.numerical_failure = true;
    r.image = torch::full({1, path.x_T.size(-2), path.x_T.size(-1)}, std::nan(""));
    r.attacked_confidence = 0.0;
  }
  if (final_path) *final_path = optimized.clone();
  return r;
}

int64_t iterations_to_plateau(const std::vector<double>& trace) {
  if (trace.empty()) return 0;
  const double first = trace.front();
  const double last = trace.back();
  const double drop = first - last;
  if (!(drop > 0.0)) return 0;
  for (size_t k = 0; k < trace.size(); ++k) {
    if (trace[k] - last <= 0.05 * drop) return static_cast<int64_t>(k);
  }
  return static_cast<int64_t>(trace.size() - 1);
}

std::string image_checksum(const torch::Tensor& image) {
  auto t = image.detach().to(torch::kFloat32).contiguous();
  return sha256_hex(std::string(reinterpret_cast<const char*>(t.data_ptr<float>()),
                                static_cast<size_t>(t.numel()) * sizeof(float)));
}

LrStudyReport lr_study(const LoadedClassifier& classifier, const NoisePredictor& predictor, const NoisePath& path,
                       const PathAttackConfig& base, std::span<const double> lrs) {
  LrStudyReport report;
  report.target = base.target;
  report.path_seed = path.seed;
  for (double lr : lrs) {
    PathAttackConfig cfg = base;
    cfg.lr = lr;
    AttackResult r = attack(classifier, predictor, path, cfg);
    LrStudyRow row;
    row.lr = lr;
    row.loss_trace = r.loss_trace;
    row.iterations_run = r.iterations_run;
    row.initial_loss = r.loss_trace.front();
    row.final_loss = r.loss_trace.back();
    row.finite = !r.numerical_failure;
    row.stop_reason = r.info["stop_reason"];
    row.converged = row.finite && row.stop_reason != "max_iters";
    row.iterations_to_plateau = iterations_to_plateau(r.loss_trace);
    row.image = r.image;
    row.image_checksum = image_checksum(r.image);
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_lr_study(const LrStudyReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "lr_study.csv");
  csv << "lr,converged,finite,iterations_run,iterations_to_plateau,initial_loss,final_loss,stop_reason,"
         "image_sha256\n";
  csv << std::setprecision(10);
  std::vector<torch::Tensor> tiles;
  std::vector<std::string> labels;
  for (const auto& row : report.rows) {
    csv << row.lr << ',' << row.converged << ',' << row.finite << ',' << row.iterations_run << ','
        << row.iterations_to_plateau << ',' << row.initial_loss << ',' << row.final_loss << ','
        << row.stop_reason << ',' << row.image_checksum << '\n';
    if (row.finite) {
      tiles.push_back(row.image);
      std::ostringstream label;
      label << "LR " << row.lr;
      labels.push_back(label.str());
    }
  }
  if (!tiles.empty()) export_grid(tiles, labels, static_cast<int64_t>(tiles.size()), dir / "lr_grid.pgm");
}

}  // namespace classrecon
