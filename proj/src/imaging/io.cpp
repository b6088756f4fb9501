#include <algorithm>
#include <cmath>

#include "fogsight/error.hpp"
#include "fogsight/imaging.hpp"

namespace fogsight::imaging {

PlanarImage to_planar(const RawImage& raw) {
  const std::size_t colour = raw.channels >= 3 ? 3 : 1;
  PlanarImage out(raw.width, raw.height, colour, colour == 3 ? ColorSpace::rgb : ColorSpace::gray);
  const double mx = raw.max_value();
  for (std::size_t y = 0; y < raw.height; ++y) {
    for (std::size_t x = 0; x < raw.width; ++x) {
      for (std::size_t c = 0; c < colour; ++c) out.at(c, x, y) = raw.at(x, y, c) / mx;
    }
  }
  return out;
}

RawImage to_raw(const PlanarImage& image, unsigned bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw ParameterError("bit depth must be 8 or 16");
  if (image.channels() != 1 && image.channels() != 3) {
    throw DimensionError("only 1- or 3-plane images can be written as PNG");
  }
  RawImage raw;
  raw.width = static_cast<std::uint32_t>(image.width);
  raw.height = static_cast<std::uint32_t>(image.height);
  raw.channels = static_cast<std::uint32_t>(image.channels());
  raw.bit_depth = bit_depth;
  raw.samples.resize(image.pixels() * raw.channels);
  const double mx = raw.max_value();
  for (std::size_t i = 0; i < image.pixels(); ++i) {
    for (std::size_t c = 0; c < raw.channels; ++c) {
      const double v = std::clamp(image.planes[c][i], 0.0, 1.0);
      raw.samples[i * raw.channels + c] = static_cast<std::uint16_t>(std::lround(v * mx));
    }
  }
  return raw;
}

PlanarImage load_png(const std::filesystem::path& path) { return to_planar(read_png(path)); }

void save_png(const std::filesystem::path& path, const PlanarImage& image, unsigned bit_depth) {
  write_png(path, to_raw(image, bit_depth));
}

DepthDecode parse_depth_decode(const std::string& name) {
  if (name == "disparity256") return DepthDecode::disparity256;
  if (name == "meters16") return DepthDecode::meters16;
  throw ConfigError("depth.decode must be disparity256 or meters16, got '" + name + "'");
}

DepthMap decode_depth(const RawImage& raw, DepthDecode mode, const StereoCamera& camera) {
  if (raw.channels != 1) throw DimensionError("depth PNG must have a single channel");
  DepthMap out;
  out.width = raw.width;
  out.height = raw.height;
  out.meters.assign(raw.samples.size(), 0.0);
  out.valid.assign(raw.samples.size(), 0);
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    const std::uint16_t v = raw.samples[i];
    if (v == 0) continue;
    const double stored = v / 256.0;
    out.meters[i] = mode == DepthDecode::disparity256 ? camera.baseline_m * camera.focal_px / stored
                                                      : stored;
    out.valid[i] = 1;
  }
  return out;
}

}  // namespace fogsight::imaging
