#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "classrecon/errors.hpp"
#include "classrecon/eval.hpp"
#include "support.hpp"

using namespace classrecon;
using classrecon::testing::FixedLogits;
using classrecon::testing::ScratchDir;

namespace {

ReportInput input(AttackMethod m, int64_t target, double attacked, const std::string& path) {
  ReportInput in;
  in.result.method = m;
  in.result.target = target;
  in.result.image = torch::zeros({1, 8, 8});
  in.result.attacked_confidence = attacked;
  in.result.attacked_checksum = "attacked";
  in.result.seeds["master"] = 3;
  in.artifact_path = path;
  return in;
}

LoadedClassifier uniform_eval() { return {std::make_shared<FixedLogits>(torch::zeros({40})), "eval"}; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Report, EmptyInput) {
  const auto report = build_report({}, uniform_eval());
  EXPECT_TRUE(report.cells.empty());
  EXPECT_EQ(report.csv(), "target_id,method,attacked_confidence,transfer_confidence,artifact_path,seed\n");
  EXPECT_NE(report.table().find("target"), std::string::npos);
}

TEST(Report, SingleCellWithUniformEvaluator) {
  const std::vector<ReportInput> in{input(AttackMethod::diffusion, 7, 0.9, "results/diffusion/person8")};
  const auto report = build_report(in, uniform_eval());
  ASSERT_EQ(report.cells.size(), 1u);
  EXPECT_NEAR(report.cells[0].transfer_confidence, 0.025, 1e-7);
  EXPECT_EQ(report.cells[0].seed, 3u);
  const auto csv = report.csv();
  EXPECT_NE(csv.find("\n8,diffusion,0.9,0.025"), std::string::npos) << csv;
  EXPECT_NE(report.table().find("person 8"), std::string::npos);
}

TEST(Report, OrderingAndMissingCells) {
  const std::vector<ReportInput> in{input(AttackMethod::diffusion, 2, 0.1, "a"), input(AttackMethod::gan, 5, 0.2, "b"),
                                    input(AttackMethod::gan, 2, 0.3, "c")};
  const auto report = build_report(in, uniform_eval());
  ASSERT_EQ(report.cells.size(), 3u);
  EXPECT_EQ(report.cells[0].artifact_path, "c");  // target 2, gan before diffusion
  EXPECT_EQ(report.cells[1].artifact_path, "a");
  EXPECT_EQ(report.cells[2].artifact_path, "b");
  EXPECT_EQ(report.targets(), (std::vector<int64_t>{2, 5}));
  EXPECT_EQ(report.find(5, AttackMethod::diffusion), nullptr);
  EXPECT_NE(report.table().find('-'), std::string::npos);
}

TEST(Report, DuplicateCellReplacedWithWarning) {
  const std::vector<ReportInput> in{input(AttackMethod::vae, 1, 0.1, "first"), input(AttackMethod::vae, 1, 0.2, "second")};
  const auto report = build_report(in, uniform_eval());
  ASSERT_EQ(report.cells.size(), 1u);
  EXPECT_EQ(report.cells[0].artifact_path, "second");
  ASSERT_EQ(report.warnings.size(), 1u);
  EXPECT_NE(report.warnings[0].find("duplicate"), std::string::npos);
}

TEST(Report, EvaluatorMustDifferFromAttackedClassifier) {
  auto in = input(AttackMethod::gan, 0, 0.5, "x");
  in.result.attacked_checksum = "eval";
  const std::vector<ReportInput> v{in};
  EXPECT_THROW(build_report(v, uniform_eval()), ConfigError);
}

TEST(Report, NonFiniteImageScoresZero) {
  auto in = input(AttackMethod::gan, 0, 0.5, "x");
  in.result.image = torch::full({1, 8, 8}, std::nanf(""));
  const std::vector<ReportInput> v{in};
  EXPECT_EQ(build_report(v, uniform_eval()).cells[0].transfer_confidence, 0.0);
}

TEST(Report, WrittenFilesAreDeterministic) {
  const std::vector<ReportInput> in{input(AttackMethod::diffusion, 7, 0.123456789012, "p"),
                                    input(AttackMethod::gan, 6, 1e-30, "q")};
  ScratchDir a("report_a"), b("report_b");
  write_report(build_report(in, uniform_eval()), a.path());
  write_report(build_report(in, uniform_eval()), b.path());
  EXPECT_EQ(slurp(a.path() / "table.csv"), slurp(b.path() / "table.csv"));
  EXPECT_EQ(slurp(a.path() / "table.txt"), slurp(b.path() / "table.txt"));
  EXPECT_FALSE(slurp(a.path() / "table.csv").empty());
}

TEST(TransferConfidence, UniformAndRange) {
  auto eval = uniform_eval();
  EXPECT_NEAR(transfer_confidence(*eval.net, torch::zeros({1, 8, 8}), 39), 0.025, 1e-7);
  EXPECT_THROW(transfer_confidence(*eval.net, torch::zeros({1, 8, 8}), 40), ConfigError);
}

TEST(Grid, SingleTileAndErrors) {
  ScratchDir dir("grid");
  const std::vector<torch::Tensor> one{torch::zeros({1, 8, 8})};
  const std::vector<std::string> label{"P1"};
  export_grid(one, label, 1, dir.path() / "g.pgm");
  const auto img = read_pgm(dir.path() / "g.pgm");
  EXPECT_GE(img.width, 8);
  EXPECT_GT(img.height, 8);

  const std::vector<torch::Tensor> none;
  const std::vector<std::string> no_labels;
  EXPECT_THROW(export_grid(none, no_labels, 1, dir.path() / "x.pgm"), ConfigError);
  const std::vector<torch::Tensor> mixed{torch::zeros({1, 8, 8}), torch::zeros({1, 16, 16})};
  const std::vector<std::string> two{"a", "b"};
  EXPECT_THROW(export_grid(mixed, two, 2, dir.path() / "x.pgm"), ConfigError);
}

TEST(Grid, TextIsDrawnInsideCanvas) {
  GrayImage canvas;
  canvas.width = 10;
  canvas.height = 6;
  canvas.pixels.assign(60, 0);
  draw_text(canvas, 0, 0, "1", 255);
  int lit = 0;
  for (auto p : canvas.pixels) lit += p == 255;
  EXPECT_EQ(lit, 8);  // glyph "1": 1 + 2 + 1 + 1 + 3
  draw_text(canvas, 8, 4, "888", 255);  // clipped, no crash
}
