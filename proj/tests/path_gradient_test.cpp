#include <gtest/gtest.h>

#include <cmath>

#include "classrecon/path_attack.hpp"
#include "support.hpp"

using namespace classrecon;

namespace {

// 8x8 images, T = 4, two-layer predictor, everything in float64.
struct TinyWorld {
  std::shared_ptr<Cnn2Net> clf;
  std::shared_ptr<TinyPredictor> pred;
  VarianceSchedule sched = build_schedule(4, 1e-4, 0.02);
  NoisePath path;
  int64_t target = 3;

  explicit TinyWorld(uint64_t seed = 0) {
    torch::manual_seed(seed);
    clf = std::make_shared<Cnn2Net>(8, 40);
    pred = std::make_shared<TinyPredictor>(4, 4);
    clf->to(torch::kDouble);
    pred->to(torch::kDouble);
    clf->eval();
    pred->eval();
    path = make_noise_path(seed + 100, 8, 4, false, torch::kDouble);
  }

  double loss_at(const NoisePath& p) {
    torch::NoGradGuard no_grad;
    return cross_entropy(clf->forward(sample(*pred, sched, p)), target).item<double>();
  }

  NoisePredictor predictor() const {
    return {pred, sched, ModelCheckpoint::from_module(*pred)};
  }
  LoadedClassifier classifier() const {
    return {clf, ModelCheckpoint::from_module(*clf).checksum()};
  }
};

// Central differences, one coordinate at a time.
torch::Tensor fd_gradient(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                          double h = 1e-6) {
  auto g = torch::zeros_like(x);
  auto flat = x.flatten();
  auto gflat = g.view(-1);
  for (int64_t i = 0; i < flat.numel(); ++i) {
    auto plus = flat.clone(), minus = flat.clone();
    plus[i] += h;
    minus[i] -= h;
    gflat[i] = (f(plus.view(x.sizes())) - f(minus.view(x.sizes()))) / (2 * h);
  }
  return g;
}

double rel_err(const torch::Tensor& a, const torch::Tensor& b) {
  return ((a - b).norm() / b.norm()).item<double>();
}

}  // namespace

TEST(PathGradient, MatchesFiniteDifferencesInXT) {
  for (uint64_t seed : {0u, 1u, 2u}) {
    TinyWorld w(seed);
    const auto g = gradient_of_path_loss(*w.clf, *w.pred, w.sched, w.path, w.target, GradientMode::full_graph());
    auto f = [&](const torch::Tensor& x) {
      NoisePath p = w.path.clone();
      p.x_T = x;
      return w.loss_at(p);
    };
    const auto fd = fd_gradient(f, w.path.x_T);
    EXPECT_LE(rel_err(g.grad_x_T, fd), 1e-4) << "seed " << seed;
    EXPECT_NEAR(g.loss, w.loss_at(w.path), 1e-12);
  }
}

TEST(PathGradient, CheckpointedMatchesFiniteDifferences) {
  TinyWorld w(4);
  const auto g = gradient_of_path_loss(*w.clf, *w.pred, w.sched, w.path, w.target, GradientMode::checkpointed(2));
  auto f = [&](const torch::Tensor& x) {
    NoisePath p = w.path.clone();
    p.x_T = x;
    return w.loss_at(p);
  };
  EXPECT_LE(rel_err(g.grad_x_T, fd_gradient(f, w.path.x_T)), 1e-4);
}

TEST(PathGradient, InjectionGradientsMatchFiniteDifferences) {
  TinyWorld w(5);
  const auto g =
      gradient_of_path_loss(*w.clf, *w.pred, w.sched, w.path, w.target, GradientMode::checkpointed(3), true);
  ASSERT_EQ(static_cast<int64_t>(g.grad_z.size()), 4);
  for (int64_t t = 1; t <= 4; ++t) {
    auto f = [&](const torch::Tensor& z) {
      NoisePath p = w.path.clone();
      p.z[static_cast<size_t>(t - 1)] = z;
      return w.loss_at(p);
    };
    EXPECT_LE(rel_err(g.grad_z[static_cast<size_t>(t - 1)], fd_gradient(f, w.path.z_at(t))), 1e-4) << "t=" << t;
  }
}

TEST(PathGradient, CheckpointedAgreesWithFullGraph) {
  TinyWorld w(6);
  const auto full = gradient_of_path_loss(*w.clf, *w.pred, w.sched, w.path, w.target, GradientMode::full_graph(), true);
  for (int64_t seg : {1, 2, 3, 4, 9}) {
    const auto ck =
        gradient_of_path_loss(*w.clf, *w.pred, w.sched, w.path, w.target, GradientMode::checkpointed(seg), true);
    EXPECT_LE(rel_err(ck.grad_x_T, full.grad_x_T), 1e-6) << "segment " << seg;
    EXPECT_LE((ck.grad_x_T - full.grad_x_T).abs().max().item<double>(), 1e-6);
    for (size_t i = 0; i < full.grad_z.size(); ++i) EXPECT_LE(rel_err(ck.grad_z[i], full.grad_z[i]), 1e-6);
    EXPECT_DOUBLE_EQ(ck.loss, full.loss);
  }
}

TEST(PathGradient, ZeroHeadGivesZeroGradient) {
  TinyWorld w(7);
  {
    torch::NoGradGuard no_grad;
    w.clf->head->weight.zero_();
    w.clf->head->bias.zero_();
  }
  const auto g = gradient_of_path_loss(*w.clf, *w.pred, w.sched, w.path, w.target, GradientMode::checkpointed(2));
  EXPECT_EQ(g.grad_x_T.abs().max().item<double>(), 0.0);
  EXPECT_NEAR(g.loss, std::log(40.0), 1e-12);
}

TEST(PathGradient, RejectsBadSegment) {
  TinyWorld w;
  EXPECT_ANY_THROW(gradient_of_path_loss(*w.clf, *w.pred, w.sched, w.path, w.target, GradientMode::checkpointed(0)));
  EXPECT_ANY_THROW(GradientMode::parse("checkpointed:x"));
  EXPECT_EQ(GradientMode::parse("checkpointed:25").segment_length, 25);
  EXPECT_EQ(GradientMode::parse("full").kind, GradientMode::Kind::full_graph);
  EXPECT_EQ(GradientMode::parse(GradientMode::checkpointed(7).str()).segment_length, 7);
}

TEST(PathAttack, ZeroIterationsReturnsPlainSample) {
  TinyWorld w(8);
  PathAttackConfig cfg;
  cfg.target = w.target;
  cfg.max_iters = 0;
  const auto r = attack(w.classifier(), w.predictor(), w.path, cfg);
  EXPECT_TRUE(torch::equal(r.image, sample(*w.pred, w.sched, w.path).squeeze(0)));
  EXPECT_EQ(r.iterations_run, 0);
  ASSERT_EQ(r.loss_trace.size(), 1u);
}

TEST(PathAttack, FrozenWorldAndOnlyXTMoves) {
  TinyWorld w(9);
  const auto clf_before = ModelCheckpoint::from_module(*w.clf);
  const auto pred_before = ModelCheckpoint::from_module(*w.pred);
  const NoisePath original = w.path.clone();
  PathAttackConfig cfg;
  cfg.target = w.target;
  cfg.max_iters = 10;
  cfg.lr = 5.0;
  NoisePath optimized;
  const auto r = attack(w.classifier(), w.predictor(), w.path, cfg, &optimized);

  EXPECT_EQ(ModelCheckpoint::from_module(*w.clf), clf_before);
  EXPECT_EQ(ModelCheckpoint::from_module(*w.pred), pred_before);
  EXPECT_TRUE(torch::equal(w.path.x_T, original.x_T));
  for (int64_t t = 1; t <= 4; ++t) {
    EXPECT_TRUE(torch::equal(optimized.z_at(t), original.z_at(t)));
    EXPECT_TRUE(torch::equal(w.path.z_at(t), original.z_at(t)));
  }
  EXPECT_FALSE(torch::equal(optimized.x_T, original.x_T));
  for (const auto& p : w.clf->parameters()) EXPECT_TRUE(p.requires_grad());

  ASSERT_GE(r.loss_trace.size(), 2u);
  for (size_t i = 1; i < r.loss_trace.size(); ++i) EXPECT_LE(r.loss_trace[i], r.loss_trace[i - 1]);
  EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());
  for (double c : r.confidence_trace) {
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(PathAttack, WithoutSafeguardFinalNotAboveInitial) {
  TinyWorld w(10);
  PathAttackConfig cfg;
  cfg.target = w.target;
  cfg.max_iters = 8;
  cfg.lr = 0.5;
  cfg.backtracking = false;
  const auto r = attack(w.classifier(), w.predictor(), w.path, cfg);
  EXPECT_LE(r.loss_trace.back(), r.loss_trace.front());
}

TEST(PathAttack, Deterministic) {
  TinyWorld w(11);
  PathAttackConfig cfg;
  cfg.target = w.target;
  cfg.max_iters = 6;
  const auto a = attack(w.classifier(), w.predictor(), w.path, cfg);
  const auto b = attack(w.classifier(), w.predictor(), w.path, cfg);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_TRUE(torch::equal(a.image, b.image));
}

TEST(PathAttack, OptimizeZMovesInjections) {
  TinyWorld w(12);
  PathAttackConfig cfg;
  cfg.target = w.target;
  cfg.max_iters = 5;
  cfg.optimize_z = true;
  NoisePath optimized;
  const auto r = attack(w.classifier(), w.predictor(), w.path, cfg, &optimized);
  EXPECT_FALSE(torch::equal(optimized.z_at(3), w.path.z_at(3)));
  EXPECT_LE(r.loss_trace.back(), r.loss_trace.front());
}

TEST(LrStudy, ZeroRateMakesNoProgress) {
  TinyWorld w(13);
  PathAttackConfig cfg;
  cfg.target = w.target;
  cfg.max_iters = 5;
  const double lrs[] = {0.0, 1.0, 10.0};
  const auto report = lr_study(w.classifier(), w.predictor(), w.path, cfg, lrs);
  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_EQ(report.rows[0].final_loss, report.rows[0].initial_loss);
  EXPECT_EQ(report.rows[0].iterations_run, 0);
  for (const auto& row : report.rows) {
    EXPECT_TRUE(row.finite);
    EXPECT_EQ(row.initial_loss, report.rows[0].initial_loss);
  }
  EXPECT_NE(report.rows[1].image_checksum, report.rows[2].image_checksum);

  classrecon::testing::ScratchDir dir("lr");
  write_lr_study(report, dir.path());
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "lr_study.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "lr_grid.pgm"));
}

TEST(LrStudy, PlateauIndex) {
  EXPECT_EQ(iterations_to_plateau({10, 5, 2, 1.1, 1.0, 1.0}), 3);
  EXPECT_EQ(iterations_to_plateau({3, 3, 3}), 0);
  EXPECT_EQ(iterations_to_plateau({4, 1}), 1);
}
