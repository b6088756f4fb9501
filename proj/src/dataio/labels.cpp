#include <fstream>
#include <sstream>

#include "fogsight/dataio.hpp"
#include "fogsight/error.hpp"

#ifndef FOGSIGHT_DATA_DIR
#define FOGSIGHT_DATA_DIR "data"
#endif

namespace fogsight::data {

const std::array<const char*, kNumClasses>& class_names() {
  static const std::array<const char*, kNumClasses> names{
      "road",   "sidewalk", "building", "wall",  "fence", "pole",  "traffic light",
      "traffic sign", "vegetation", "terrain", "sky", "person", "rider", "car",
      "truck",  "bus",      "train",    "motorcycle", "bicycle"};
  return names;
}

LabelMap::LabelMap(std::size_t w, std::size_t h, std::uint8_t fill, LabelSpace s)
    : width(w), height(h), ids(w * h, fill), space(s) {
  if (w == 0 || h == 0) throw DimensionError("label map dimensions must be positive");
}

LabelMap label_from_png(const RawImage& raw, LabelSpace space) {
  if (raw.channels != 1 || raw.bit_depth != 8) {
    throw DimensionError("label PNG must be 8-bit single channel");
  }
  LabelMap out(raw.width, raw.height, kIgnore, space);
  for (std::size_t i = 0; i < out.ids.size(); ++i) {
    out.ids[i] = static_cast<std::uint8_t>(raw.samples[i]);
  }
  return out;
}

RawImage label_to_png(const LabelMap& labels) {
  RawImage raw;
  raw.width = static_cast<std::uint32_t>(labels.width);
  raw.height = static_cast<std::uint32_t>(labels.height);
  raw.channels = 1;
  raw.bit_depth = 8;
  raw.samples.assign(labels.ids.begin(), labels.ids.end());
  return raw;
}

LabelTable LabelTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label table " + path.string());
  LabelTable table;
  table.to_train_.fill(kIgnore);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string first;
    if (!(fields >> first)) continue;
    if (first == "version") {
      if (!(fields >> table.version_)) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": bad version line");
      }
      continue;
    }
    int raw_id = 0, train_id = 0;
    try {
      raw_id = std::stoi(first);
    } catch (const std::exception&) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected a label id");
    }
    if (!(fields >> train_id) || raw_id < 0 || raw_id > 255 ||
        !(train_id == kIgnore || (train_id >= 0 && train_id < static_cast<int>(kNumClasses)))) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": invalid mapping");
    }
    table.to_train_[raw_id] = static_cast<std::uint8_t>(train_id);
  }
  return table;
}

LabelTable LabelTable::identity(std::size_t classes) {
  LabelTable table;
  table.to_train_.fill(kIgnore);
  for (std::size_t i = 0; i < classes && i < kIgnore; ++i) {
    table.to_train_[i] = static_cast<std::uint8_t>(i);
  }
  return table;
}

std::filesystem::path LabelTable::default_path() {
  return std::filesystem::path(FOGSIGHT_DATA_DIR) / "cityscapes_trainid.txt";
}

LabelMap remap_labels(const LabelMap& raw, const LabelTable& table) {
  if (raw.space == LabelSpace::train) return raw;
  LabelMap out = raw;
  out.space = LabelSpace::train;
  for (auto& id : out.ids) id = table(id);
  return out;
}

std::vector<double> ClassStats::probabilities() const {
  std::vector<double> p(counts.size(), 0.0);
  if (total == 0) return p;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    p[c] = static_cast<double>(counts[c]) / static_cast<double>(total);
  }
  return p;
}

void ClassStats::add(const LabelMap& labels) {
  for (const auto id : labels.ids) {
    if (id == kIgnore) continue;
    if (id >= counts.size()) {
      throw ParameterError("label id " + std::to_string(id) + " outside the " +
                           std::to_string(counts.size()) + " classes");
    }
    ++counts[id];
    ++total;
  }
}

ClassStats compute_class_stats(std::span<const LabelMap> labels, std::size_t classes) {
  if (classes == 0) throw ParameterError("class count must be at least 1");
  ClassStats stats;
  stats.counts.assign(classes, 0);
  for (const auto& map : labels) stats.add(map);
  return stats;
}

}  // namespace fogsight::data
