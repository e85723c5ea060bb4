#include "classrecon/eval.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "classrecon/errors.hpp"

namespace classrecon {
namespace {

constexpr AttackMethod kMethodOrder[] = {AttackMethod::gan, AttackMethod::vae, AttackMethod::diffusion,
                                         AttackMethod::pixel};

int method_rank(AttackMethod m) {
  for (int i = 0; i < 4; ++i) {
    if (kMethodOrder[i] == m) return i;
  }
  return 4;
}

// 3x5 glyphs, one row per entry, bit 2 = leftmost column.
const std::map<char, std::array<uint8_t, 5>>& font() {
  static const std::map<char, std::array<uint8_t, 5>> glyphs = {
      {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 3, 1, 7}},
      {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 2, 2}},
      {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 7}}, {'A', {2, 5, 7, 5, 5}}, {'B', {6, 5, 6, 5, 6}},
      {'C', {7, 4, 4, 4, 7}}, {'D', {6, 5, 5, 5, 6}}, {'E', {7, 4, 6, 4, 7}}, {'F', {7, 4, 6, 4, 4}},
      {'G', {7, 4, 5, 5, 7}}, {'H', {5, 5, 7, 5, 5}}, {'I', {7, 2, 2, 2, 7}}, {'J', {1, 1, 1, 5, 7}},
      {'K', {5, 5, 6, 5, 5}}, {'L', {4, 4, 4, 4, 7}}, {'M', {5, 7, 7, 5, 5}}, {'N', {6, 5, 5, 5, 5}},
      {'O', {7, 5, 5, 5, 7}}, {'P', {7, 5, 7, 4, 4}}, {'Q', {7, 5, 5, 7, 1}}, {'R', {6, 5, 6, 5, 5}},
      {'S', {7, 4, 7, 1, 7}}, {'T', {7, 2, 2, 2, 2}}, {'U', {5, 5, 5, 5, 7}}, {'V', {5, 5, 5, 5, 2}},
      {'W', {5, 5, 7, 7, 5}}, {'X', {5, 5, 2, 5, 5}}, {'Y', {5, 5, 2, 2, 2}}, {'Z', {7, 1, 2, 4, 7}},
      {'.', {0, 0, 0, 0, 2}}, {'-', {0, 0, 7, 0, 0}}, {'+', {0, 2, 7, 2, 0}}, {':', {0, 2, 0, 2, 0}},
      {'=', {0, 7, 0, 7, 0}}, {'_', {0, 0, 0, 0, 7}}, {' ', {0, 0, 0, 0, 0}},
  };
  return glyphs;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(9) << v;
  return s.str();
}

std::string fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

}  // namespace

double transfer_confidence(ImageNet& eval_net, const torch::Tensor& image, int64_t target) {
  auto probs = predict_probs(eval_net, image);
  if (target < 0 || target >= probs.size(1)) throw ConfigError("target class out of range");
  return probs[0][target].item<double>();
}

const ReportCell* EvaluationReport::find(int64_t target, AttackMethod method) const {
  for (const auto& c : cells) {
    if (c.target == target && c.method == method) return &c;
  }
  return nullptr;
}

std::vector<int64_t> EvaluationReport::targets() const {
  std::vector<int64_t> out;
  for (const auto& c : cells) {
    if (std::find(out.begin(), out.end(), c.target) == out.end()) out.push_back(c.target);
  }
  return out;
}

std::vector<AttackMethod> EvaluationReport::methods() const {
  std::vector<AttackMethod> out;
  for (AttackMethod m : kMethodOrder) {
    if (std::any_of(cells.begin(), cells.end(), [&](const ReportCell& c) { return c.method == m; })) {
      out.push_back(m);
    }
  }
  return out;
}

std::string EvaluationReport::csv() const {
  std::ostringstream out;
  out << "target_id,method,attacked_confidence,transfer_confidence,artifact_path,seed\n";
  for (const auto& c : cells) {
    out << c.target + 1 << ',' << to_string(c.method) << ',' << fmt(c.attacked_confidence) << ','
        << fmt(c.transfer_confidence) << ',' << c.artifact_path << ',' << c.seed << '\n';
  }
  return out.str();
}

std::string EvaluationReport::table() const {
  std::ostringstream out;
  const auto ts = targets();
  const auto ms = methods();
  out << "Confidence of being predicted as the attack target (evaluation classifier)\n";
  out << std::left << std::setw(12) << "target";
  for (AttackMethod m : ms) out << std::setw(12) << to_string(m);
  out << '\n';
  for (int64_t t : ts) {
    out << std::setw(12) << ("person " + std::to_string(t + 1));
    for (AttackMethod m : ms) {
      const ReportCell* c = find(t, m);
      out << std::setw(12) << (c ? fixed4(c->transfer_confidence) : std::string("-"));
    }
    out << '\n';
  }
  for (AttackMethod m : ms) {
    const ReportCell* best = nullptr;
    for (const auto& c : cells) {
      if (c.method == m && (!best || c.transfer_confidence > best->transfer_confidence)) best = &c;
    }
    out << "best " << to_string(m) << ": person " << best->target + 1 << " (" << fixed4(best->transfer_confidence)
        << ")\n";
  }
  return out.str();
}

EvaluationReport build_report(std::span<const ReportInput> results, const LoadedClassifier& eval) {
  EvaluationReport report;
  report.eval_checksum = eval.checksum;
  for (const auto& in : results) {
    const AttackResult& r = in.result;
    if (r.attacked_checksum == eval.checksum) {
      throw ConfigError("evaluation classifier is the attacked classifier (checksum " + eval.checksum + ")");
    }
    ReportCell cell;
    cell.target = r.target;
    cell.method = r.method;
    cell.attacked_confidence = r.attacked_confidence;
    cell.artifact_path = in.artifact_path;
    if (auto it = r.seeds.find("master"); it != r.seeds.end()) {
      cell.seed = it->second;
    } else if (!r.seeds.empty()) {
      cell.seed = r.seeds.begin()->second;
    }
    if (torch::isfinite(r.image).all().item<bool>()) {
      torch::NoGradGuard no_grad;
      auto logits = eval.net->forward(r.image.unsqueeze(0));
      cell.transfer_confidence = torch::softmax(logits, 1)[0][r.target].item<double>();
      cell.transfer_logit = logits[0][r.target].item<double>();
    }
    auto dup = std::find_if(report.cells.begin(), report.cells.end(), [&](const ReportCell& c) {
      return c.target == cell.target && c.method == cell.method;
    });
    if (dup != report.cells.end()) {
      report.warnings.push_back("duplicate cell for person " + std::to_string(cell.target + 1) + " / " +
                                to_string(cell.method) + ": keeping " + cell.artifact_path);
      *dup = cell;
    } else {
      report.cells.push_back(cell);
    }
  }
  // Group by target (first-appearance order), then by the fixed method order.
  std::vector<int64_t> order;
  for (const auto& c : report.cells) {
    if (std::find(order.begin(), order.end(), c.target) == order.end()) order.push_back(c.target);
  }
  std::stable_sort(report.cells.begin(), report.cells.end(), [&](const ReportCell& a, const ReportCell& b) {
    const auto ra = std::find(order.begin(), order.end(), a.target) - order.begin();
    const auto rb = std::find(order.begin(), order.end(), b.target) - order.begin();
    if (ra != rb) return ra < rb;
    return method_rank(a.method) < method_rank(b.method);
  });
  return report;
}

void write_report(const EvaluationReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "table.csv") << report.csv();
  std::ofstream txt(dir / "table.txt");
  txt << report.table();
  txt << "evaluation_checksum " << report.eval_checksum << '\n';
  for (const auto& w : report.warnings) txt << "warning: " << w << '\n';
}

void draw_text(GrayImage& canvas, int64_t x, int64_t y, const std::string& text, uint8_t ink) {
  const auto& glyphs = font();
  for (char raw : text) {
    const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
    auto it = glyphs.find(ch);
    const auto& rows = it != glyphs.end() ? it->second : glyphs.at('-');
    for (int64_t r = 0; r < 5; ++r) {
      for (int64_t c = 0; c < 3; ++c) {
        if (!(rows[static_cast<size_t>(r)] & (4 >> c))) continue;
        const int64_t px = x + c, py = y + r;
        if (px >= 0 && py >= 0 && px < canvas.width && py < canvas.height) {
          canvas.pixels[static_cast<size_t>(py * canvas.width + px)] = ink;
        }
      }
    }
    x += 4;
  }
}

void export_grid(std::span<const torch::Tensor> images, std::span<const std::string> labels, int64_t columns,
                 const std::filesystem::path& path) {
  if (images.empty()) throw ConfigError("export_grid needs at least one image");
  if (columns < 1) throw ConfigError("export_grid needs at least one column");
  const GrayImage first = to_gray(images[0]);
  const int64_t h = first.height, w = first.width;
  constexpr int64_t kStrip = 7;
  constexpr int64_t kGap = 1;
  const auto n = static_cast<int64_t>(images.size());
  const int64_t cols = std::min(columns, n);
  const int64_t rows = (n + cols - 1) / cols;
  GrayImage canvas;
  canvas.width = cols * (w + kGap) + kGap;
  canvas.height = rows * (h + kStrip + kGap) + kGap;
  canvas.pixels.assign(static_cast<size_t>(canvas.width * canvas.height), 255);

  for (int64_t i = 0; i < n; ++i) {
    const GrayImage tile = to_gray(images[static_cast<size_t>(i)]);
    if (tile.height != h || tile.width != w) throw ConfigError("export_grid: images differ in size");
    const int64_t x0 = kGap + (i % cols) * (w + kGap);
    const int64_t y0 = kGap + (i / cols) * (h + kStrip + kGap);
    if (static_cast<size_t>(i) < labels.size()) draw_text(canvas, x0 + 1, y0 + 1, labels[static_cast<size_t>(i)], 0);
    for (int64_t y = 0; y < h; ++y) {
      std::copy_n(tile.pixels.begin() + y * w, w,
                  canvas.pixels.begin() + (y0 + kStrip + y) * canvas.width + x0);
    }
  }
  write_pgm(path, canvas);
}

}  // namespace classrecon
