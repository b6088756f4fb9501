#include <algorithm>
#include <cmath>

#include "fogsight/dataio.hpp"
#include "fogsight/error.hpp"

namespace fogsight::data {

namespace fs = std::filesystem;

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<fs::path> png_files(const fs::path& dir, bool recursive) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  const auto take = [&](const fs::directory_entry& e) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  };
  if (recursive) {
    for (const auto& e : fs::recursive_directory_iterator(dir)) take(e);
  } else {
    for (const auto& e : fs::directory_iterator(dir)) take(e);
  }
  return out;
}

std::optional<fs::path> if_exists(const fs::path& p) {
  if (fs::is_regular_file(p)) return p;
  return std::nullopt;
}

}  // namespace

Layout parse_layout(const std::string& name) {
  if (name == "cityscapes") return Layout::cityscapes;
  if (name == "flat") return Layout::flat;
  throw ConfigError("data.layout must be cityscapes or flat, got '" + name + "'");
}

std::vector<SampleDescriptor> scan_dataset(const fs::path& root, Layout layout, bool require_labels) {
  if (!fs::is_directory(root)) throw ConfigError("dataset root " + root.string() + " is not a directory");
  std::vector<SampleDescriptor> out;
  if (layout == Layout::flat) {
    for (const auto& img : png_files(root / "img", false)) {
      SampleDescriptor d;
      d.id = img.stem().string();
      d.image = img;
      d.depth = if_exists(root / "depth" / (d.id + ".png"));
      d.label = if_exists(root / "label" / (d.id + ".png"));
      d.label_space = LabelSpace::train;
      out.push_back(std::move(d));
    }
  } else {
    const std::string suffix = "_leftImg8bit.png";
    const fs::path images = root / "leftImg8bit";
    for (const auto& img : png_files(images, true)) {
      const std::string rel = fs::relative(img, images).generic_string();
      if (!ends_with(rel, suffix)) continue;
      SampleDescriptor d;
      d.id = rel.substr(0, rel.size() - suffix.size());
      d.image = img;
      d.depth = if_exists(root / "disparity" / (d.id + "_disparity.png"));
      d.label = if_exists(root / "gtFine" / (d.id + "_gtFine_labelIds.png"));
      d.label_space = LabelSpace::raw;
      out.push_back(std::move(d));
    }
  }
  std::sort(out.begin(), out.end(),
            [](const SampleDescriptor& a, const SampleDescriptor& b) { return a.id < b.id; });
  if (require_labels) {
    for (const auto& d : out) {
      if (!d.label) throw ConfigError("sample '" + d.id + "' has no label file");
    }
  }
  return out;
}

SceneSample load_sample(const SampleDescriptor& desc, const LoadOptions& options) {
  SceneSample s;
  s.id = desc.id;
  s.rgb = imaging::load_png(desc.image);
  if (s.rgb.channels() == 1) {
    s.rgb.planes.resize(3, s.rgb.planes[0]);
    s.rgb.space = imaging::ColorSpace::rgb;
  }
  if (desc.depth) {
    s.depth = imaging::decode_depth(read_png(*desc.depth), options.depth_decode, options.camera);
    if (s.depth->width != s.rgb.width || s.depth->height != s.rgb.height) {
      throw DimensionError("sample '" + desc.id + "': depth size differs from image");
    }
  }
  if (desc.label) {
    LabelMap labels = label_from_png(read_png(*desc.label), desc.label_space);
    if (labels.width != s.rgb.width || labels.height != s.rgb.height) {
      throw DimensionError("sample '" + desc.id + "': label size differs from image");
    }
    if (labels.space == LabelSpace::raw) {
      if (options.table == nullptr) throw ConfigError("raw label ids need a label table");
      labels = remap_labels(labels, *options.table);
    }
    s.label = std::move(labels);
  }
  return s;
}

namespace {

template <typename V>
void mirror_rows(std::vector<V>& values, std::size_t width, std::size_t height) {
  for (std::size_t y = 0; y < height; ++y) {
    std::reverse(values.begin() + y * width, values.begin() + (y + 1) * width);
  }
}

}  // namespace

SceneSample hflip(const SceneSample& sample) {
  SceneSample out = sample;
  for (auto& p : out.rgb.planes) mirror_rows(p, out.rgb.width, out.rgb.height);
  if (out.depth) {
    mirror_rows(out.depth->meters, out.depth->width, out.depth->height);
    if (!out.depth->valid.empty()) mirror_rows(out.depth->valid, out.depth->width, out.depth->height);
  }
  if (out.label) mirror_rows(out.label->ids, out.label->width, out.label->height);
  return out;
}

SceneSample augment_hflip(const SceneSample& sample, Rng& rng) {
  return rng.bernoulli(0.5) ? hflip(sample) : sample;
}

imaging::PlanarImage resize_bilinear(const imaging::PlanarImage& img, std::size_t width,
                                     std::size_t height) {
  if (img.width == width && img.height == height) return img;
  imaging::PlanarImage out(width, height, img.channels(), img.space);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (std::size_t c = 0; c < img.channels(); ++c) {
        const double top = img.at(c, x0, y0) + wx * (img.at(c, x1, y0) - img.at(c, x0, y0));
        const double bottom = img.at(c, x0, y1) + wx * (img.at(c, x1, y1) - img.at(c, x0, y1));
        out.at(c, x, y) = top + wy * (bottom - top);
      }
    }
  }
  return out;
}

namespace {

std::size_t nearest_index(std::size_t dst, std::size_t dst_extent, std::size_t src_extent) {
  const std::size_t i = (2 * dst + 1) * src_extent / (2 * dst_extent);
  return std::min(i, src_extent - 1);
}

}  // namespace

imaging::DepthMap resize_nearest(const imaging::DepthMap& depth, std::size_t width, std::size_t height) {
  if (depth.width == width && depth.height == height) return depth;
  imaging::DepthMap out;
  out.width = width;
  out.height = height;
  out.meters.resize(width * height);
  if (!depth.valid.empty()) out.valid.resize(width * height);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = nearest_index(y, height, depth.height);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t src = sy * depth.width + nearest_index(x, width, depth.width);
      out.meters[y * width + x] = depth.meters[src];
      if (!depth.valid.empty()) out.valid[y * width + x] = depth.valid[src];
    }
  }
  return out;
}

LabelMap resize_nearest(const LabelMap& labels, std::size_t width, std::size_t height) {
  if (labels.width == width && labels.height == height) return labels;
  LabelMap out(width, height, kIgnore, labels.space);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = nearest_index(y, height, labels.height);
    for (std::size_t x = 0; x < width; ++x) {
      out.at(x, y) = labels.at(nearest_index(x, width, labels.width), sy);
    }
  }
  return out;
}

}  // namespace fogsight::data
