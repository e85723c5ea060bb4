#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "classrecon/data.hpp"
#include "classrecon/errors.hpp"
#include "classrecon/image_io.hpp"
#include "classrecon/synthetic_faces.hpp"
#include "support.hpp"

using namespace classrecon;
using classrecon::testing::ScratchDir;
namespace fs = std::filesystem;

namespace {

const FaceDataset& faces() {
  static const FaceDataset ds = make_synthetic_faces();
  return ds;
}

}  // namespace

TEST(Pixels, NormalizeRoundTripWithinOneUlp) {
  for (int k = 0; k <= 255; ++k) {
    const float unit = static_cast<float>(k) / 255.0f;
    const float back = denormalize_pixel(normalize_pixel(unit));
    EXPECT_LE(std::abs(back - unit), std::nextafter(unit, 2.0f) - unit) << k;
  }
  EXPECT_EQ(normalize_pixel(0.0f), -1.0f);
  EXPECT_EQ(normalize_pixel(1.0f), 1.0f);
}

TEST(Dataset, CanonicalShapeAndRange) {
  const auto& ds = faces();
  EXPECT_EQ(ds.size(), 400);
  EXPECT_EQ(ds.num_classes, 40);
  EXPECT_EQ(ds.height(), 64);
  EXPECT_EQ(ds.width(), 64);
  for (int64_t k = 0; k < 40; ++k) EXPECT_EQ(indices_of_class(ds, k).size(), 10u);
  EXPECT_GE(ds.images.min().item<float>(), -1.0f);
  EXPECT_LE(ds.images.max().item<float>(), 1.0f);
  // ordered by (class, image)
  EXPECT_TRUE(std::is_sorted(ds.labels.begin(), ds.labels.end()));
}

TEST(Dataset, DirectoryLayoutRoundTrip) {
  ScratchDir dir("faces_dir");
  save_dataset_pgm(faces(), dir.path());
  EXPECT_TRUE(fs::exists(dir.path() / "class_0" / "img_0.pgm"));
  const auto back = load_dataset(dir.path());
  EXPECT_EQ(back.labels, faces().labels);
  EXPECT_TRUE(torch::equal(back.images, faces().images));
}

TEST(Dataset, PackedLayoutRoundTrip) {
  ScratchDir dir("faces_packed");
  const auto file = dir.path() / "faces.f32";
  save_dataset_packed(faces(), file);
  EXPECT_EQ(fs::file_size(file), 400u * 64 * 64 * 4);
  EXPECT_EQ(fs::file_size(file.string() + ".labels"), 400u * 4);
  const auto back = load_dataset(file);
  EXPECT_EQ(back.labels, faces().labels);
  EXPECT_TRUE(torch::equal(back.images, faces().images));
}

TEST(Dataset, MissingFileNamesDeficientClass) {
  ScratchDir dir("faces_missing");
  save_dataset_pgm(faces(), dir.path());
  fs::remove(dir.path() / "class_7" / "img_3.pgm");
  try {
    load_dataset(dir.path());
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("class 7 has 9 images"), std::string::npos) << e.what();
  }
}

TEST(Dataset, RejectsBadInputs) {
  EXPECT_THROW(load_dataset("/nonexistent/faces"), DatasetError);

  ScratchDir dir("faces_bad");
  save_dataset_pgm(faces(), dir.path());
  write_pgm(dir.path() / "class_2" / "img_0.pgm", GrayImage{32, 32, std::vector<uint8_t>(32 * 32, 0)});
  EXPECT_THROW(load_dataset(dir.path()), DatasetError);

  ScratchDir packed("faces_bad_packed");
  const auto file = packed.path() / "faces.f32";
  save_dataset_packed(faces(), file);
  fs::remove(file.string() + ".labels");
  EXPECT_THROW(load_dataset(file), DatasetError);

  { std::ofstream(file, std::ios::binary | std::ios::trunc) << "short"; }
  EXPECT_THROW(load_dataset(file), DatasetError);

  ScratchDir extra("faces_extra");
  save_dataset_pgm(faces(), extra.path());
  fs::create_directories(extra.path() / "class_40");
  fs::copy_file(extra.path() / "class_0" / "img_0.pgm", extra.path() / "class_40" / "img_0.pgm");
  EXPECT_THROW(load_dataset(extra.path()), DatasetError);
}

TEST(Scenario, SplitPropertyAcrossSeeds) {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const auto sc = make_scenario(faces(), seed);
    ASSERT_EQ(sc.train_index.size(), 40u);
    for (int64_t k = 0; k < 40; ++k) {
      const auto& tr = sc.train_index[static_cast<size_t>(k)];
      const auto& va = sc.val_index[static_cast<size_t>(k)];
      EXPECT_EQ(tr.size(), 7u);
      EXPECT_EQ(va.size(), 3u);
      std::set<int64_t> all(tr.begin(), tr.end());
      all.insert(va.begin(), va.end());
      EXPECT_EQ(all.size(), 10u);
      const auto cls = indices_of_class(faces(), k);
      EXPECT_EQ(all, std::set<int64_t>(cls.begin(), cls.end()));
    }
    EXPECT_EQ(sc.train_flat().size(), 280u);
    EXPECT_EQ(sc.val_flat().size(), 120u);
  }
}

TEST(Scenario, TargetsAndVisibleClasses) {
  const auto sc = make_scenario(faces(), 3);
  std::vector<int64_t> first(20), second(20);
  for (int64_t i = 0; i < 20; ++i) {
    first[static_cast<size_t>(i)] = i;
    second[static_cast<size_t>(i)] = i + 20;
  }
  EXPECT_EQ(sc.target_classes, first);
  EXPECT_EQ(sc.visible_classes, second);

  const auto pool = visible_pool(faces(), sc);
  EXPECT_EQ(pool.size(), 200);
  EXPECT_EQ(std::set<int64_t>(pool.labels.begin(), pool.labels.end()).size(), 20u);
  for (int64_t l : pool.labels) EXPECT_GE(l, 20);
}

TEST(Scenario, EmptyVisibleSetGivesEmptyPool) {
  auto sc = make_scenario(faces(), 3);
  sc.visible_classes.clear();
  EXPECT_TRUE(visible_pool(faces(), sc).empty());
}

TEST(Scenario, DeterministicAndSeedSensitive) {
  const auto a = make_scenario(faces(), 17);
  const auto b = make_scenario(faces(), 17);
  EXPECT_EQ(a.train_index, b.train_index);
  EXPECT_EQ(a.val_index, b.val_index);
  EXPECT_NE(make_scenario(faces(), 18).train_index, a.train_index);
}

TEST(Scenario, FileRoundTrip) {
  ScratchDir dir("scenario");
  const auto a = make_scenario(faces(), 21);
  save_scenario(a, dir.path() / "s.txt");
  const auto b = load_scenario(dir.path() / "s.txt");
  EXPECT_EQ(a.train_index, b.train_index);
  EXPECT_EQ(a.val_index, b.val_index);
  EXPECT_EQ(a.target_classes, b.target_classes);
  EXPECT_EQ(a.visible_classes, b.visible_classes);
  EXPECT_EQ(a.seed, b.seed);
}

TEST(Dataset, DownsampleAveragesBlocks) {
  const auto small = downsample(faces(), 32);
  EXPECT_EQ(small.height(), 32);
  const auto block = faces().images[5][0].slice(0, 0, 2).slice(1, 0, 2).mean().item<float>();
  EXPECT_NEAR(small.images[5][0][0][0].item<float>(), block, 1e-6);
  EXPECT_THROW(downsample(faces(), 48), ConfigError);
}

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticFaceOptions a;
  a.classes = 3;
  auto b = a;
  EXPECT_TRUE(torch::equal(make_synthetic_faces(a).images, make_synthetic_faces(b).images));
  b.seed = a.seed + 1;
  EXPECT_FALSE(torch::equal(make_synthetic_faces(a).images, make_synthetic_faces(b).images));
}
