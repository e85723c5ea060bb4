#include "classrecon/data.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "classrecon/errors.hpp"
#include "classrecon/image_io.hpp"

namespace fs = std::filesystem;

namespace classrecon {
namespace {

// Parses the integer suffix of names like "class_12" or "img_3.pgm".
std::optional<int64_t> numeric_suffix(const std::string& stem, const std::string& prefix) {
  if (stem.rfind(prefix, 0) != 0 || stem.size() == prefix.size()) return std::nullopt;
  const std::string digits = stem.substr(prefix.size());
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(c); })) {
    return std::nullopt;
  }
  return std::stoll(digits);
}

void validate_counts(const std::map<int64_t, int64_t>& per_class, const std::string& where) {
  std::ostringstream report;
  bool bad = false;
  if (static_cast<int64_t>(per_class.size()) != kCanonicalClasses) {
    report << "found " << per_class.size() << " classes (expected " << kCanonicalClasses << ")";
    bad = true;
  }
  for (int64_t k = 0; k < kCanonicalClasses; ++k) {
    auto it = per_class.find(k);
    const int64_t count = it == per_class.end() ? 0 : it->second;
    if (count != kImagesPerClass) {
      report << (bad ? "; " : "") << "class " << k << " has " << count << " images (expected "
             << kImagesPerClass << ")";
      bad = true;
    }
  }
  for (const auto& [k, count] : per_class) {
    if (k < 0 || k >= kCanonicalClasses) {
      report << (bad ? "; " : "") << "unexpected class id " << k << " (" << count << " images)";
      bad = true;
    }
  }
  if (bad) throw DatasetError(where + ": " + report.str());
}

FaceDataset load_directory(const fs::path& root) {
  std::map<int64_t, std::map<int64_t, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    auto cls = numeric_suffix(entry.path().filename().string(), "class_");
    if (!cls) continue;
    auto& slot = files[*cls];
    for (const auto& img : fs::directory_iterator(entry.path())) {
      if (img.path().extension() != ".pgm") continue;
      auto idx = numeric_suffix(img.path().stem().string(), "img_");
      if (idx) slot[*idx] = img.path();
    }
  }
  std::map<int64_t, int64_t> counts;
  for (const auto& [k, imgs] : files) counts[k] = static_cast<int64_t>(imgs.size());
  validate_counts(counts, root.string());

  FaceDataset ds;
  ds.num_classes = kCanonicalClasses;
  std::vector<torch::Tensor> images;
  for (const auto& [k, imgs] : files) {
    for (const auto& [i, path] : imgs) {
      GrayImage g = read_pgm(path);
      if (g.width != kCanonicalSide || g.height != kCanonicalSide) {
        throw DatasetError(path.string() + ": image is " + std::to_string(g.width) + "x" +
                           std::to_string(g.height) + ", expected 64x64");
      }
      images.push_back(from_gray(g));
      ds.labels.push_back(k);
    }
  }
  ds.images = torch::stack(images);
  return ds;
}

FaceDataset load_packed(const fs::path& file) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  const fs::path sidecar = file.string() + ".labels";
  if (!fs::exists(sidecar)) throw DatasetError("missing label sidecar " + sidecar.string());
  const auto pixel_bytes = fs::file_size(file);
  const auto expected = static_cast<uintmax_t>(kCanonicalClasses * kImagesPerClass *
                                               kCanonicalSide * kCanonicalSide * sizeof(float));
  if (pixel_bytes != expected) {
    throw DatasetError(file.string() + ": " + std::to_string(pixel_bytes) +
                       " bytes, expected 400x64x64 float32 (" + std::to_string(expected) + ")");
  }
  const int64_t n = kCanonicalClasses * kImagesPerClass;
  if (fs::file_size(sidecar) != static_cast<uintmax_t>(n * sizeof(int32_t))) {
    throw DatasetError(sidecar.string() + ": expected 400 int32 labels");
  }
  auto raw = read_f32(file, {n, 1, kCanonicalSide, kCanonicalSide});
  if (raw.min().item<float>() < 0.0f || raw.max().item<float>() > 1.0f) {
    throw DatasetError(file.string() + ": pixel values outside [0, 1]");
  }
  std::vector<int32_t> labels(static_cast<size_t>(n));
  std::ifstream in(sidecar, std::ios::binary);
  in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(n * sizeof(int32_t)));

  std::map<int64_t, int64_t> counts;
  for (int32_t l : labels) ++counts[l];
  validate_counts(counts, file.string());

  // Stable sort by class keeps the within-class file order as image index.
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int64_t a, int64_t b) { return labels[a] < labels[b]; });

  FaceDataset ds;
  ds.num_classes = kCanonicalClasses;
  ds.images = (raw.index_select(0, torch::tensor(order)) * 2.0f - 1.0f).contiguous();
  for (int64_t i : order) ds.labels.push_back(labels[static_cast<size_t>(i)]);
  return ds;
}

}  // namespace

torch::Tensor FaceDataset::label_tensor() const { return torch::tensor(labels, torch::kInt64); }

std::vector<int64_t> AttackScenario::train_flat() const {
  std::vector<int64_t> out;
  for (const auto& c : train_index) out.insert(out.end(), c.begin(), c.end());
  return out;
}

std::vector<int64_t> AttackScenario::val_flat() const {
  std::vector<int64_t> out;
  for (const auto& c : val_index) out.insert(out.end(), c.begin(), c.end());
  return out;
}

FaceDataset load_dataset(const fs::path& path) {
  if (!fs::exists(path)) throw DatasetError("dataset path does not exist: " + path.string());
  return fs::is_directory(path) ? load_directory(path) : load_packed(path);
}

void save_dataset_pgm(const FaceDataset& ds, const fs::path& dir) {
  std::map<int64_t, int64_t> next;
  for (int64_t i = 0; i < ds.size(); ++i) {
    const int64_t k = ds.labels[static_cast<size_t>(i)];
    const fs::path file =
        dir / ("class_" + std::to_string(k)) / ("img_" + std::to_string(next[k]++) + ".pgm");
    write_pgm(file, to_gray(ds.images[i]));
  }
}

void save_dataset_packed(const FaceDataset& ds, const fs::path& file) {
  write_f32(file, (ds.images + 1.0f) * 0.5f);
  std::ofstream out(file.string() + ".labels", std::ios::binary);
  for (int64_t l : ds.labels) {
    const auto v = static_cast<int32_t>(l);
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
}

AttackScenario make_scenario(const FaceDataset& ds, uint64_t seed) {
  AttackScenario s;
  s.seed = seed;
  s.train_index.resize(static_cast<size_t>(ds.num_classes));
  s.val_index.resize(static_cast<size_t>(ds.num_classes));
  std::mt19937_64 rng(seed);
  for (int64_t k = 0; k < ds.num_classes; ++k) {
    auto idx = indices_of_class(ds, k);
    // Fisher-Yates on raw engine output so the split does not depend on the
    // standard library's distribution implementation.
    for (size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[rng() % i]);
    }
    const auto n_train = std::min<size_t>(static_cast<size_t>(kTrainPerClass), idx.size());
    s.train_index[k].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val_index[k].assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(s.train_index[k].begin(), s.train_index[k].end());
    std::sort(s.val_index[k].begin(), s.val_index[k].end());
    (k < ds.num_classes / 2 ? s.target_classes : s.visible_classes).push_back(k);
  }
  return s;
}

FaceDataset visible_pool(const FaceDataset& ds, const AttackScenario& scenario) {
  std::vector<int64_t> idx;
  for (int64_t k : scenario.visible_classes) {
    auto c = indices_of_class(ds, k);
    idx.insert(idx.end(), c.begin(), c.end());
  }
  return subset(ds, idx);
}

FaceDataset subset(const FaceDataset& ds, std::span<const int64_t> indices) {
  FaceDataset out;
  out.num_classes = ds.num_classes;
  if (indices.empty()) {
    out.images = torch::empty({0, 1, ds.height(), ds.width()}, torch::kFloat32);
    return out;
  }
  std::vector<int64_t> idx(indices.begin(), indices.end());
  out.images = ds.images.index_select(0, torch::tensor(idx)).contiguous();
  for (int64_t i : idx) out.labels.push_back(ds.labels.at(static_cast<size_t>(i)));
  return out;
}

FaceDataset downsample(const FaceDataset& ds, int64_t side) {
  if (side == ds.height() && side == ds.width()) return ds;
  if (side <= 0 || ds.height() % side != 0 || ds.width() % side != 0) {
    throw ConfigError("image_size " + std::to_string(side) + " must divide " +
                      std::to_string(ds.height()));
  }
  FaceDataset out = ds;
  if (ds.size() > 0) {
    out.images = torch::avg_pool2d(ds.images, {ds.height() / side, ds.width() / side}).contiguous();
  } else {
    out.images = torch::empty({0, 1, side, side});
  }
  return out;
}

std::vector<int64_t> indices_of_class(const FaceDataset& ds, int64_t cls) {
  std::vector<int64_t> out;
  for (int64_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[static_cast<size_t>(i)] == cls) out.push_back(i);
  }
  return out;
}

void save_scenario(const AttackScenario& s, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  out << "seed " << s.seed << "\n";
  auto list = [&](const char* key, const std::vector<int64_t>& v) {
    out << key;
    for (int64_t x : v) out << ' ' << x;
    out << "\n";
  };
  list("targets", s.target_classes);
  list("visible", s.visible_classes);
  for (size_t k = 0; k < s.train_index.size(); ++k) {
    out << "class " << k;
    for (int64_t x : s.train_index[k]) out << ' ' << x;
    out << " |";
    for (int64_t x : s.val_index[k]) out << ' ' << x;
    out << "\n";
  }
}

AttackScenario load_scenario(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw PrerequisiteError("missing scenario file " + file.string());
  AttackScenario s;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    auto read_list = [&]() {
      std::vector<int64_t> v;
      std::string tok;
      while (ls >> tok && tok != "|") v.push_back(std::stoll(tok));
      return v;
    };
    if (key == "seed") {
      ls >> s.seed;
    } else if (key == "targets") {
      s.target_classes = read_list();
    } else if (key == "visible") {
      s.visible_classes = read_list();
    } else if (key == "class") {
      int64_t k = 0;
      ls >> k;
      s.train_index.push_back(read_list());
      s.val_index.push_back(read_list());
    }
  }
  return s;
}

}  // namespace classrecon
