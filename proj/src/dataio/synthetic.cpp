#include <algorithm>
#include <cmath>

#include "fogsight/dataio.hpp"

namespace fogsight::data {

namespace {

constexpr std::uint8_t kRoad = 0, kBuilding = 2, kSky = 10, kPerson = 11, kCar = 13;

struct Paint {
  std::uint8_t label;
  double r, g, b;
};

constexpr Paint kPaints[] = {
    {kRoad, 0.35, 0.35, 0.38},   {kSky, 0.55, 0.70, 0.95},    {kBuilding, 0.60, 0.45, 0.30},
    {kCar, 0.85, 0.15, 0.15},    {kPerson, 0.20, 0.75, 0.25},
};

const Paint& paint(std::uint8_t label) {
  for (const auto& p : kPaints) {
    if (p.label == label) return p;
  }
  return kPaints[0];
}

}  // namespace

std::vector<SceneSample> synthetic_scenes(std::size_t count, std::size_t width, std::size_t height,
                                          std::uint64_t seed) {
  std::vector<SceneSample> out;
  for (std::size_t s = 0; s < count; ++s) {
    Rng rng = Rng::derive(seed, s);
    SceneSample sample;
    sample.id = "synthetic_" + std::to_string(s);
    LabelMap labels(width, height, kRoad);
    imaging::DepthMap depth;
    depth.width = width;
    depth.height = height;
    depth.meters.assign(width * height, 0.0);

    const std::size_t horizon = height * (35 + rng.below(30)) / 100;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const bool sky = y < horizon;
        labels.at(x, y) = sky ? kSky : kRoad;
        depth.meters[y * width + x] =
            sky ? 300.0 : 5.0 + 250.0 * static_cast<double>(height - y) / (height - horizon + 1);
      }
    }
    const std::size_t objects = 2 + rng.below(3);
    for (std::size_t o = 0; o < objects; ++o) {
      const std::uint8_t cls = o == 0 ? kBuilding : (rng.bernoulli(0.5) ? kCar : kPerson);
      const double cx = rng.uniform(0.1, 0.9) * width;
      const double cy = cls == kBuilding ? rng.uniform(0.2, 0.5) * height : rng.uniform(0.5, 0.85) * height;
      const double rx = (cls == kBuilding ? rng.uniform(0.12, 0.25) : rng.uniform(0.06, 0.12)) * width;
      const double ry = (cls == kPerson ? 2.2 : cls == kBuilding ? 1.2 : 0.8) * rx * height / width * 2.0;
      const double d = cls == kBuilding ? rng.uniform(60, 150) : rng.uniform(8, 40);
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
          const bool inside = cls == kBuilding ? (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0)
                                               : dx * dx + dy * dy <= 1.0;
          if (inside) {
            labels.at(x, y) = cls;
            depth.meters[y * width + x] = d;
          }
        }
      }
    }

    sample.rgb = imaging::PlanarImage(width, height, 3, imaging::ColorSpace::rgb);
    const double gain = rng.uniform(0.7, 1.1);
    for (std::size_t i = 0; i < width * height; ++i) {
      const auto& p = paint(labels.ids[i]);
      const double rgb[3] = {p.r, p.g, p.b};
      for (std::size_t c = 0; c < 3; ++c) {
        sample.rgb.planes[c][i] = std::clamp(gain * rgb[c] + rng.uniform(-0.06, 0.06), 0.0, 1.0);
      }
    }
    sample.depth = std::move(depth);
    sample.label = std::move(labels);
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace fogsight::data
