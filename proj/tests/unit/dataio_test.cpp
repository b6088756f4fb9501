#include <algorithm>
#include <fstream>
#include <filesystem>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "fogsight/dataio.hpp"
#include "fogsight/error.hpp"

using namespace fogsight;
using namespace fogsight::data;
namespace fs = std::filesystem;

namespace {

// The published Cityscapes labelId -> trainId assignments for the 19 classes.
const std::map<int, int> kPublishedTrainIds{
    {7, 0},   {8, 1},   {11, 2},  {12, 3},  {13, 4},  {17, 5},  {19, 6},
    {20, 7},  {21, 8},  {22, 9},  {23, 10}, {24, 11}, {25, 12}, {26, 13},
    {27, 14}, {28, 15}, {31, 16}, {32, 17}, {33, 18}};

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_rgb(const fs::path& p, std::size_t w, std::size_t h, std::uint16_t value) {
  fs::create_directories(p.parent_path());
  write_png(p, RawImage{static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(h), 3, 8,
                        std::vector<std::uint16_t>(w * h * 3, value)});
}

void write_gray(const fs::path& p, std::size_t w, std::size_t h, std::vector<std::uint16_t> v,
                unsigned depth = 8) {
  fs::create_directories(p.parent_path());
  write_png(p, RawImage{static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(h), 1, depth,
                        std::move(v)});
}

SceneSample synthetic_sample(const std::string& id, std::size_t w, std::size_t h, Rng& rng,
                             bool with_depth = true) {
  SceneSample s;
  s.id = id;
  s.rgb = imaging::PlanarImage(w, h, 3, imaging::ColorSpace::rgb);
  for (auto& p : s.rgb.planes) {
    for (auto& v : p) v = rng.uniform();
  }
  if (with_depth) {
    imaging::DepthMap d;
    d.width = w;
    d.height = h;
    for (std::size_t i = 0; i < w * h; ++i) d.meters.push_back(rng.uniform(1, 400));
    s.depth = d;
  }
  LabelMap l(w, h);
  for (auto& id8 : l.ids) id8 = rng.bernoulli(0.1) ? kIgnore : static_cast<std::uint8_t>(rng.below(19));
  s.label = l;
  return s;
}

}  // namespace

TEST(Labels, ClassNamesInEvaluationOrder) {
  const auto& names = class_names();
  EXPECT_STREQ(names[0], "road");
  EXPECT_STREQ(names[1], "sidewalk");
  EXPECT_STREQ(names[2], "building");
  EXPECT_STREQ(names[6], "traffic light");
  EXPECT_STREQ(names[18], "bicycle");
}

TEST(Labels, ShippedTableMatchesPublishedMapping) {
  const auto table = LabelTable::load(LabelTable::default_path());
  EXPECT_EQ(table.version(), 1);
  for (int raw = 0; raw < 256; ++raw) {
    const auto it = kPublishedTrainIds.find(raw);
    const int expected = it == kPublishedTrainIds.end() ? 255 : it->second;
    EXPECT_EQ(table(static_cast<std::uint8_t>(raw)), expected) << "raw id " << raw;
  }
}

TEST(Labels, RemapExamples) {
  const auto table = LabelTable::load(LabelTable::default_path());
  LabelMap raw(3, 1, 0, LabelSpace::raw);
  raw.ids = {7, 0, 26};
  const auto out = remap_labels(raw, table);
  EXPECT_EQ(out.ids, (std::vector<std::uint8_t>{0, 255, 13}));
  EXPECT_EQ(out.space, LabelSpace::train);

  LabelMap ids(4, 1, 0, LabelSpace::raw);
  ids.ids = {0, 5, 18, 255};
  EXPECT_EQ(remap_labels(ids, LabelTable::identity()).ids, ids.ids);
}

TEST(Labels, RemapTwiceEqualsRemapOnce) {
  const auto table = LabelTable::load(LabelTable::default_path());
  Rng rng(1);
  LabelMap raw(16, 16, 0, LabelSpace::raw);
  for (auto& v : raw.ids) v = static_cast<std::uint8_t>(rng.below(40));
  const auto once = remap_labels(raw, table);
  EXPECT_EQ(remap_labels(once, table).ids, once.ids);
  for (auto v : once.ids) EXPECT_TRUE(v < 19 || v == kIgnore);
}

TEST(Labels, MalformedTableIsConfigError) {
  TempDir dir("fogsight_table_test");
  std::ofstream(dir.path() / "t.txt") << "7 40 road\n";
  EXPECT_THROW(LabelTable::load(dir.path() / "t.txt"), ConfigError);
}

TEST(ClassStatsTest, HandCount) {
  LabelMap m(2, 2);
  m.ids = {0, 0, 1, 255};
  const std::vector<LabelMap> maps{m};
  const auto st = compute_class_stats(maps, 19);
  EXPECT_EQ(st.counts[0], 2u);
  EXPECT_EQ(st.counts[1], 1u);
  EXPECT_EQ(st.total, 3u);
  EXPECT_DOUBLE_EQ(st.probabilities()[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(st.probabilities()[1], 1.0 / 3.0);
}

TEST(ClassStatsTest, AllIgnoreIsFlagged) {
  const std::vector<LabelMap> maps{LabelMap(3, 3)};
  const auto st = compute_class_stats(maps, 19);
  EXPECT_TRUE(st.empty());
  EXPECT_EQ(st.total, 0u);
}

TEST(ClassStatsTest, UniformMap) {
  LabelMap m(19, 2);
  for (std::size_t i = 0; i < m.ids.size(); ++i) m.ids[i] = static_cast<std::uint8_t>(i % 19);
  const std::vector<LabelMap> maps{m};
  for (double p : compute_class_stats(maps, 19).probabilities()) EXPECT_DOUBLE_EQ(p, 1.0 / 19.0);
}

TEST(ClassStatsTest, ProbabilitiesSumToOne) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LabelMap> maps;
    for (int k = 0; k < 3; ++k) {
      LabelMap m(7, 5);
      for (auto& v : m.ids) v = rng.bernoulli(0.2) ? kIgnore : static_cast<std::uint8_t>(rng.below(19));
      maps.push_back(m);
    }
    const auto st = compute_class_stats(maps, 19);
    double s = 0;
    for (double p : st.probabilities()) s += p;
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(ClassStatsTest, OutOfRangeIdIsRejected) {
  LabelMap m(1, 1, 25);
  const std::vector<LabelMap> maps{m};
  EXPECT_THROW(compute_class_stats(maps, 19), ParameterError);
}

TEST(Flip, ForcedFlipMirrorsEveryRaster) {
  SceneSample s;
  s.rgb = imaging::PlanarImage(2, 2, 3, imaging::ColorSpace::rgb);
  for (auto& p : s.rgb.planes) p = {1, 2, 3, 4};
  imaging::DepthMap d;
  d.width = d.height = 2;
  d.meters = {1, 2, 3, 4};
  s.depth = d;
  LabelMap l(2, 2);
  l.ids = {1, 2, 3, 4};
  s.label = l;
  const auto f = hflip(s);
  for (const auto& p : f.rgb.planes) EXPECT_EQ(p, (std::vector<double>{2, 1, 4, 3}));
  EXPECT_EQ(f.depth->meters, (std::vector<double>{2, 1, 4, 3}));
  EXPECT_EQ(f.label->ids, (std::vector<std::uint8_t>{2, 1, 4, 3}));
  const auto back = hflip(f);
  EXPECT_EQ(back.rgb.planes, s.rgb.planes);
  EXPECT_EQ(back.label->ids, s.label->ids);
}

TEST(Flip, PixelCorrespondenceHoldsAcrossRasters) {
  Rng rng(3);
  const auto s = synthetic_sample("a", 7, 4, rng);
  const auto f = hflip(s);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 7; ++x) {
      const std::size_t src = y * 7 + x, dst = y * 7 + (6 - x);
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(f.rgb.planes[c][dst], s.rgb.planes[c][src]);
      EXPECT_EQ(f.depth->meters[dst], s.depth->meters[src]);
      EXPECT_EQ(f.label->ids[dst], s.label->ids[src]);
    }
  }
}

TEST(Flip, SeededDecisionsRepeatAndAreBalanced) {
  Rng rng(4);
  const auto s = synthetic_sample("a", 3, 2, rng);
  const auto decisions = [&](std::uint64_t seed) {
    Rng r(seed);
    std::vector<bool> out;
    for (int i = 0; i < 400; ++i) out.push_back(augment_hflip(s, r).rgb.planes != s.rgb.planes);
    return out;
  };
  const auto a = decisions(11), b = decisions(11);
  EXPECT_EQ(a, b);
  const auto flips = std::count(a.begin(), a.end(), true);
  EXPECT_GT(flips, 150);
  EXPECT_LT(flips, 250);
}

TEST(Scan, FlatLayoutPairsByStem) {
  TempDir dir("fogsight_scan_flat");
  for (const char* stem : {"c", "a", "b"}) {
    write_rgb(dir.path() / "img" / (std::string(stem) + ".png"), 4, 2, 100);
    write_gray(dir.path() / "depth" / (std::string(stem) + ".png"), 4, 2,
               std::vector<std::uint16_t>(8, 512), 16);
    write_gray(dir.path() / "label" / (std::string(stem) + ".png"), 4, 2, std::vector<std::uint16_t>(8, 1));
  }
  const auto found = scan_dataset(dir.path(), Layout::flat, true);
  ASSERT_EQ(found.size(), 3u);
  EXPECT_EQ(found[0].id, "a");
  EXPECT_EQ(found[1].id, "b");
  EXPECT_EQ(found[2].id, "c");
  for (const auto& d : found) {
    EXPECT_TRUE(d.depth.has_value());
    EXPECT_TRUE(d.label.has_value());
  }
  const auto sample = load_sample(found[0], {imaging::DepthDecode::meters16, {}, nullptr});
  EXPECT_EQ(sample.depth->meters[0], 2.0);
  EXPECT_EQ(sample.label->ids[0], 1);
}

TEST(Scan, EmptyDirectoryGivesNoSamples) {
  TempDir dir("fogsight_scan_empty");
  EXPECT_TRUE(scan_dataset(dir.path(), Layout::flat, true).empty());
  EXPECT_TRUE(scan_dataset(dir.path(), Layout::cityscapes, false).empty());
}

TEST(Scan, MissingLabel) {
  TempDir dir("fogsight_scan_missing");
  write_rgb(dir.path() / "img" / "lonely.png", 2, 2, 0);
  const auto found = scan_dataset(dir.path(), Layout::flat, false);
  ASSERT_EQ(found.size(), 1u);
  EXPECT_FALSE(found[0].label.has_value());
  try {
    scan_dataset(dir.path(), Layout::flat, true);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
  }
}

TEST(Scan, CityscapesLayoutRemapsRawLabels) {
  TempDir dir("fogsight_scan_cs");
  const fs::path root = dir.path();
  write_rgb(root / "leftImg8bit/val/zurich/zurich_000001_000019_leftImg8bit.png", 2, 1, 50);
  write_gray(root / "gtFine/val/zurich/zurich_000001_000019_gtFine_labelIds.png", 2, 1, {7, 0});
  write_gray(root / "disparity/val/zurich/zurich_000001_000019_disparity.png", 2, 1, {256, 0}, 16);
  const auto found = scan_dataset(root, Layout::cityscapes, true);
  ASSERT_EQ(found.size(), 1u);
  EXPECT_EQ(found[0].id, "val/zurich/zurich_000001_000019");
  EXPECT_EQ(found[0].label_space, LabelSpace::raw);
  const auto table = LabelTable::load(LabelTable::default_path());
  const auto s = load_sample(found[0], {imaging::DepthDecode::disparity256, {}, &table});
  EXPECT_EQ(s.label->ids, (std::vector<std::uint8_t>{0, 255}));
  EXPECT_TRUE(s.depth->is_valid(0));
  EXPECT_FALSE(s.depth->is_valid(1));
  EXPECT_THROW(load_sample(found[0], {}), ConfigError);
}

TEST(Resize, SameSizeIsIdentityAndNearestKeepsLabelSet) {
  Rng rng(5);
  const auto s = synthetic_sample("a", 16, 8, rng);
  EXPECT_EQ(resize_bilinear(s.rgb, 16, 8).planes, s.rgb.planes);
  const auto small = resize_nearest(*s.label, 5, 3);
  std::set<std::uint8_t> original(s.label->ids.begin(), s.label->ids.end());
  for (auto v : small.ids) EXPECT_TRUE(original.count(v));
  imaging::PlanarImage flat(9, 7, 3, imaging::ColorSpace::rgb, 0.25);
  for (const auto& p : resize_bilinear(flat, 4, 13).planes) {
    for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
  }
}

TEST(Batch, ShapesForDepthAndLuminance) {
  Rng rng(6);
  std::vector<SceneSample> samples{synthetic_sample("a", 96, 48, rng), synthetic_sample("b", 96, 48, rng)};
  BatchOptions opt;
  opt.width = 128;
  opt.height = 64;
  const auto batch = make_batch<float>(std::span<const SceneSample>(samples), opt, nullptr);
  EXPECT_EQ(batch.input.shape(), (ad::Shape{2, 3, 64, 128}));
  EXPECT_EQ(batch.aux.shape(), (ad::Shape{2, 2, 64, 128}));
  EXPECT_EQ(batch.labels.n, 2u);
  EXPECT_EQ(batch.labels.height, 64u);
  EXPECT_EQ(batch.labels.width, 128u);
  EXPECT_EQ(batch.labels.ids.size(), 2u * 64 * 128);

  opt.aux = AuxMode::l;
  EXPECT_EQ(make_batch<float>(std::span<const SceneSample>(samples), opt, nullptr).aux.shape(),
            (ad::Shape{2, 1, 64, 128}));
  opt.aux = AuxMode::none;
  EXPECT_FALSE(make_batch<float>(std::span<const SceneSample>(samples), opt, nullptr).aux.defined());
}

TEST(Batch, DepthThenLuminanceOrder) {
  Rng rng(7);
  auto s = synthetic_sample("a", 4, 4, rng);
  BatchOptions opt;
  opt.width = opt.height = 4;
  opt.depth_max_m = 300;
  const auto p = prepare_sample(s, opt);
  ASSERT_EQ(p.aux.size(), 2u);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_DOUBLE_EQ(p.aux[0][i], std::min(s.depth->meters[i], 300.0) / 300.0);
  }
  EXPECT_EQ(p.aux[1], imaging::luminance(s.rgb).planes[0]);
}

TEST(Batch, InvariantModeReplicatesThePlane) {
  Rng rng(8);
  const auto s = synthetic_sample("a", 8, 8, rng);
  BatchOptions opt;
  opt.input = InputMode::iit;
  opt.width = opt.height = 8;
  const auto p = prepare_sample(s, opt);
  const auto inv = imaging::illumination_invariant(s.rgb, opt.alpha);
  ASSERT_EQ(p.input.size(), 3u);
  for (const auto& plane : p.input) EXPECT_EQ(plane, inv.planes[0]);
}

TEST(Batch, DepthModeWithoutDepthNamesTheSample) {
  Rng rng(9);
  std::vector<SceneSample> samples{synthetic_sample("no_depth_here", 8, 8, rng, false)};
  BatchOptions opt;
  opt.width = opt.height = 8;
  try {
    make_batch<float>(std::span<const SceneSample>(samples), opt, nullptr);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("no_depth_here"), std::string::npos);
  }
  opt.input = InputMode::gcs;
  opt.aux = AuxMode::none;
  EXPECT_THROW(make_batch<float>(std::span<const SceneSample>(samples), opt, nullptr), ConfigError);
}

TEST(Batch, NormalisedPlanesAreStandardised) {
  Rng rng(10);
  std::vector<PreparedSample> prepared;
  BatchOptions opt;
  opt.width = 16;
  opt.height = 8;
  for (int i = 0; i < 4; ++i) prepared.push_back(prepare_sample(synthetic_sample("s", 16, 8, rng), opt));
  const auto stats = compute_norm_stats(prepared);
  const auto batch = make_batch<double>(std::span<const PreparedSample>(prepared), &stats);
  const std::size_t plane = 128;
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = batch.input.data()[(b * 3 + c) * plane + i];
        s += v;
        ss += v * v;
      }
    }
    EXPECT_NEAR(s / 512, 0.0, 1e-12);
    EXPECT_NEAR(ss / 512, 1.0, 1e-9);
  }
  // Deterministic for the same inputs.
  const auto again = make_batch<double>(std::span<const PreparedSample>(prepared), &stats);
  EXPECT_TRUE(std::equal(batch.input.data().begin(), batch.input.data().end(), again.input.data().begin()));
}

TEST(Batch, NormStatsCacheIsReused) {
  TempDir dir("fogsight_norm_cache");
  NormStats st;
  st.samples = 3;
  st.input_mean = {0.1, 0.2, 1.0 / 3.0};
  st.input_std = {1, 2, 3};
  st.aux_mean = {0.5};
  st.aux_std = {0.25};
  int calls = 0;
  const auto compute = [&] {
    ++calls;
    return st;
  };
  const auto cache = dir.path() / "norm.txt";
  const auto a = cached_norm_stats(cache, "rgb-l-64x128", compute);
  const auto b = cached_norm_stats(cache, "rgb-l-64x128", compute);
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(b.input_mean, st.input_mean);
  EXPECT_EQ(b.aux_std, st.aux_std);
  cached_norm_stats(cache, "iit-l-64x128", compute);
  EXPECT_EQ(calls, 2);
  (void)a;
}
