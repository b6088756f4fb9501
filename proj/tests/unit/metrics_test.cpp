#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "fogsight/metrics.hpp"

using namespace fogsight;
using namespace fogsight::metrics;
using data::LabelMap;

namespace {

LabelMap map2x2(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
  LabelMap m(2, 2, 0, data::LabelSpace::train);
  m.ids = {a, b, c, d};
  return m;
}

struct OracleScores {
  double global, class_avg, miou;
};

// Scores straight from the pixel lists: per class, count true positives,
// false positives and false negatives by walking every pixel.
OracleScores pixel_oracle(const std::vector<std::uint8_t>& gt, const std::vector<std::uint8_t>& pred,
                          std::size_t k) {
  std::size_t scored = 0, correct = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == 255) continue;
    ++scored;
    correct += gt[i] == pred[i];
  }
  double recall_sum = 0, iou_sum = 0;
  std::size_t recall_n = 0, iou_n = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == 255) continue;
      if (gt[i] == c && pred[i] == c) ++tp;
      else if (gt[i] == c) ++fn;
      else if (pred[i] == c) ++fp;
    }
    if (tp + fn > 0) {
      recall_sum += static_cast<double>(tp) / static_cast<double>(tp + fn);
      ++recall_n;
    }
    if (tp + fp + fn > 0) {
      iou_sum += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
      ++iou_n;
    }
  }
  return {static_cast<double>(correct) / scored, recall_sum / recall_n, iou_sum / iou_n};
}

}  // namespace

TEST(Confusion, HandCountedTwoByTwo) {
  ConfusionMatrix cm(2);
  cm.accumulate(map2x2(0, 0, 1, 1), map2x2(0, 1, 1, 1));
  EXPECT_EQ(cm.at(0, 0), 1u);
  EXPECT_EQ(cm.at(0, 1), 1u);
  EXPECT_EQ(cm.at(1, 0), 0u);
  EXPECT_EQ(cm.at(1, 1), 2u);
  const auto r = report(cm);
  EXPECT_DOUBLE_EQ(r.global_acc, 0.75);
  EXPECT_DOUBLE_EQ(*r.per_class[0].iou, 0.5);
  EXPECT_DOUBLE_EQ(*r.per_class[1].iou, 2.0 / 3.0);
  EXPECT_NEAR(r.mean_iou, 0.5833, 1e-4);
  EXPECT_NEAR(r.mean_iou, (0.5 + 2.0 / 3.0) / 2, 1e-15);
  EXPECT_DOUBLE_EQ(r.class_avg_acc, 0.75);
  EXPECT_EQ(format_percent(*r.per_class[1].iou), "66.7");
  EXPECT_EQ(format_percent(0.5833), "58.3");
}

TEST(Confusion, IgnoreSkipped) {
  ConfusionMatrix cm(3);
  cm.accumulate(map2x2(255, 255, 255, 255), map2x2(0, 1, 2, 0));
  EXPECT_EQ(cm.total(), 0u);
  EXPECT_THROW(report(cm), StateError);
}

TEST(Confusion, Errors) {
  ConfusionMatrix cm(2);
  LabelMap wide(3, 1, 0);
  EXPECT_THROW(cm.accumulate(map2x2(0, 0, 0, 0), wide), DimensionError);
  EXPECT_THROW(cm.accumulate(map2x2(0, 0, 0, 0), map2x2(0, 255, 0, 0)), ParameterError);
  EXPECT_THROW(cm.accumulate(map2x2(0, 3, 0, 0), map2x2(0, 0, 0, 0)), ParameterError);
  EXPECT_EQ(cm.total(), 0u);
  ConfusionMatrix other(3);
  EXPECT_THROW(cm += other, DimensionError);
}

TEST(Confusion, AccumulationIsAdditive) {
  Rng rng(4);
  std::vector<std::uint8_t> gt(72), pred(72);
  for (auto& g : gt) g = rng.bernoulli(0.1) ? 255 : static_cast<std::uint8_t>(rng.below(4));
  for (auto& p : pred) p = static_cast<std::uint8_t>(rng.below(4));
  ConfusionMatrix whole(4), streamed(4), a(4), b(4);
  whole.accumulate(gt, pred);
  streamed.accumulate(std::span(gt).first(30), std::span(pred).first(30));
  streamed.accumulate(std::span(gt).subspan(30), std::span(pred).subspan(30));
  EXPECT_EQ(whole, streamed);
  a.accumulate(std::span(gt).first(50), std::span(pred).first(50));
  b.accumulate(std::span(gt).subspan(50), std::span(pred).subspan(50));
  a += b;
  EXPECT_EQ(whole, a);
  const auto r1 = report(whole), r2 = report(a);
  EXPECT_EQ(r1.mean_iou, r2.mean_iou);
  EXPECT_EQ(r1.class_avg_acc, r2.class_avg_acc);
  EXPECT_EQ(r1.global_acc, r2.global_acc);
}

TEST(Report, PerfectPrediction) {
  ConfusionMatrix cm(4);
  auto m = map2x2(0, 1, 3, 3);
  cm.accumulate(m, m);
  const auto r = report(cm);
  EXPECT_EQ(r.global_acc, 1.0);
  EXPECT_EQ(r.class_avg_acc, 1.0);
  EXPECT_EQ(r.mean_iou, 1.0);
  EXPECT_FALSE(r.per_class[2].iou.has_value());
}

TEST(Report, ConstantPredictor) {
  // gt uniform over two classes, prediction always class 0.
  ConfusionMatrix cm(2);
  cm.accumulate(map2x2(0, 1, 0, 1), map2x2(0, 0, 0, 0));
  const auto r = report(cm);
  EXPECT_DOUBLE_EQ(r.global_acc, 0.5);
  EXPECT_DOUBLE_EQ(r.class_avg_acc, 0.5);
  EXPECT_DOUBLE_EQ(r.mean_iou, 0.25);
}

TEST(Report, AbsentPolicy) {
  ConfusionMatrix cm(3);
  cm.accumulate(map2x2(0, 0, 1, 1), map2x2(0, 1, 1, 1));
  const auto excl = report(cm, AbsentPolicy::exclude);
  const auto zero = report(cm, AbsentPolicy::zero);
  EXPECT_NEAR(excl.mean_iou, (0.5 + 2.0 / 3.0) / 2, 1e-15);
  EXPECT_NEAR(zero.mean_iou, (0.5 + 2.0 / 3.0) / 3, 1e-15);
  EXPECT_NEAR(zero.class_avg_acc, 1.5 / 3, 1e-15);
  EXPECT_EQ(parse_absent_policy("zero"), AbsentPolicy::zero);
  EXPECT_THROW(parse_absent_policy("skip"), ConfigError);
}

TEST(Report, MatchesPixelOracleOnRandomMaps) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> gt(36), pred(36);
    for (auto& g : gt) g = rng.bernoulli(0.15) ? 255 : static_cast<std::uint8_t>(rng.below(4));
    for (auto& p : pred) p = static_cast<std::uint8_t>(rng.below(4));
    if (std::all_of(gt.begin(), gt.end(), [](auto g) { return g == 255; })) gt[0] = 0;
    ConfusionMatrix cm(4);
    cm.accumulate(gt, pred);
    const auto r = report(cm);
    const auto o = pixel_oracle(gt, pred, 4);
    EXPECT_EQ(r.global_acc, o.global);
    EXPECT_EQ(r.class_avg_acc, o.class_avg);
    EXPECT_EQ(r.mean_iou, o.miou);
  }
}

TEST(Report, BoundsAndOrdering) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint8_t> gt(64), pred(64);
    for (auto& g : gt) g = static_cast<std::uint8_t>(rng.below(5));
    for (auto& p : pred) p = static_cast<std::uint8_t>(rng.below(5));
    ConfusionMatrix cm(5);
    cm.accumulate(gt, pred);
    const auto r = report(cm);
    EXPECT_GE(r.global_acc, 0.0);
    EXPECT_LE(r.global_acc, 1.0);
    for (std::size_t c = 0; c < 5; ++c) {
      const auto& s = r.per_class[c];
      if (!s.iou) continue;
      EXPECT_GE(*s.iou, 0.0);
      EXPECT_LE(*s.iou, 1.0);
      if (s.recall) {
        EXPECT_LE(*s.iou, *s.recall);
      }
      const auto predicted = cm.col_sum(c);
      if (predicted > 0) {
        EXPECT_LE(*s.iou, static_cast<double>(s.intersection) / predicted);
      }
    }
  }
}

TEST(Report, ClassPermutationInvariance) {
  Rng rng(11);
  std::vector<std::uint8_t> gt(36), pred(36);
  for (auto& g : gt) g = rng.bernoulli(0.1) ? 255 : static_cast<std::uint8_t>(rng.below(4));
  for (auto& p : pred) p = static_cast<std::uint8_t>(rng.below(4));
  const std::uint8_t perm[4] = {2, 0, 3, 1};
  auto permuted = [&](std::vector<std::uint8_t> v) {
    for (auto& x : v) if (x != 255) x = perm[x];
    return v;
  };
  ConfusionMatrix a(4), b(4);
  a.accumulate(gt, pred);
  b.accumulate(permuted(gt), permuted(pred));
  const auto ra = report(a), rb = report(b);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(ra.per_class[c].iou, rb.per_class[perm[c]].iou);
  EXPECT_EQ(ra.global_acc, rb.global_acc);
  EXPECT_NEAR(ra.class_avg_acc, rb.class_avg_acc, 1e-15);
  EXPECT_NEAR(ra.mean_iou, rb.mean_iou, 1e-15);
}

TEST(Table, RoundingAndMarkers) {
  EXPECT_EQ(format_percent(7, 12), "58.3");
  EXPECT_EQ(format_percent(1, 2000), "0.1");  // 0.05 % rounds half up
  EXPECT_EQ(format_percent(1, 2001), "0.0");
  EXPECT_EQ(format_percent(1, 1), "100.0");
  EXPECT_EQ(format_percent(0, 0), kUndefinedMarker);
  EXPECT_EQ(std::string(kUndefinedMarker), "\xE2\x80\x94");
}

TEST(Table, NineteenClassOrder) {
  ConfusionMatrix cm(19);
  std::vector<std::uint8_t> gt, pred;
  for (std::uint8_t c = 0; c < 19; ++c) {
    if (c == 5) continue;  // leave one class undefined
    for (int i = 0; i <= c; ++i) {
      gt.push_back(c);
      pred.push_back(i == 0 && c > 0 ? 0 : c);
    }
  }
  cm.accumulate(gt, pred);
  const auto rows = per_class_table(report(cm));
  ASSERT_EQ(rows.size(), 19u);
  const char* expected[] = {"road", "sidewalk", "building", "wall", "fence", "pole", "traffic light",
                            "traffic sign", "vegetation", "terrain", "sky", "person", "rider", "car",
                            "truck", "bus", "train", "motorcycle", "bicycle"};
  for (std::size_t c = 0; c < 19; ++c) EXPECT_EQ(rows[c].name, expected[c]);
  EXPECT_EQ(rows[5].iou, kUndefinedMarker);
  EXPECT_EQ(rows[1].iou, "50.0");
  EXPECT_EQ(rows[2].iou, "66.7");
}

TEST(Format, TextAndCsv) {
  ConfusionMatrix cm(2);
  cm.accumulate(map2x2(0, 0, 1, 1), map2x2(0, 1, 1, 1));
  const auto r = report(cm);
  const auto csv = format_csv(r);
  EXPECT_EQ(csv.rfind("metric,value\nglobal_acc,0.75\n", 0), 0u);
  EXPECT_NE(csv.find("iou.class1,0.66666666666666663"), std::string::npos);
  const auto text = format_text(r);
  EXPECT_NE(text.find("mean_iou       0.5833"), std::string::npos);
  EXPECT_NE(text.find("class1  66.7"), std::string::npos);
}
