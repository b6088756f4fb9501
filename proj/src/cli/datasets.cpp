#include <algorithm>

#include "fogsight/app.hpp"

namespace fogsight::app {

namespace {

// Fixed generator seeds: the synthetic corpus is part of the data, not of
// the run, so changing run.seed must not change it.
constexpr std::uint64_t kSyntheticTrainSeed = 1;
constexpr std::uint64_t kSyntheticEvalSeed = 2;
constexpr std::uint64_t kSyntheticTargetSeed = 3;

data::SceneSample resized(data::SceneSample s, std::size_t w, std::size_t h) {
  if (s.rgb.width == w && s.rgb.height == h) return s;
  s.rgb = data::resize_bilinear(s.rgb, w, h);
  if (s.depth) s.depth = data::resize_nearest(*s.depth, w, h);
  if (s.label) s.label = data::resize_nearest(*s.label, w, h);
  return s;
}

std::vector<data::SceneSample> from_disk(const RunConfig& cfg, const fs::path& root, bool require_labels) {
  const auto layout = data::parse_layout(cfg.get("data.layout"));
  const auto [w, h] = parse_size(cfg.get("data.size"));
  const auto table_path = cfg.get("data.label_table").empty() ? data::LabelTable::default_path()
                                                              : fs::path(cfg.get("data.label_table"));
  const auto table = data::LabelTable::load(table_path);
  data::LoadOptions opts;
  opts.depth_decode = imaging::parse_depth_decode(cfg.get("data.depth_decode"));
  opts.table = &table;
  std::vector<data::SceneSample> out;
  for (const auto& desc : data::scan_dataset(root, layout, require_labels)) {
    out.push_back(resized(data::load_sample(desc, opts), w, h));
  }
  if (out.empty()) throw ConfigError("no samples found under " + root.string());
  return out;
}

std::vector<data::SceneSample> synthetic(const RunConfig& cfg, std::size_t count, std::uint64_t seed,
                                         bool fog) {
  const auto [w, h] = parse_size(cfg.get("data.size"));
  auto scenes = data::synthetic_scenes(count, w, h, seed);
  const double beta = cfg.get_double("data.synthetic_beta");
  if (fog && beta > 0) {
    for (auto& s : scenes) s.rgb = imaging::simulate_fog(s.rgb, *s.depth, {beta, 0.8});
  }
  return scenes;
}

std::string synthetic_key(const RunConfig& cfg, const char* role, std::size_t count) {
  return std::string("synthetic-") + role + ":" + std::to_string(count) + ":beta=" + cfg.get("data.synthetic_beta") +
         ":" + cfg.get("data.size");
}

std::string disk_key(const RunConfig& cfg, const fs::path& root) {
  return "root:" + fs::weakly_canonical(root).string() + ":" + cfg.get("data.layout") + ":" + cfg.get("data.size") +
         ":" + cfg.get("data.depth_decode");
}

}  // namespace

SceneSet load_train_set(const RunConfig& cfg) {
  if (const auto n = cfg.get_size("data.synthetic"); n > 0) {
    return {synthetic(cfg, n, kSyntheticTrainSeed, true), synthetic_key(cfg, "train", n)};
  }
  const auto& root = cfg.get("data.root");
  if (root.empty()) throw ConfigError("set data.root or data.synthetic");
  return {from_disk(cfg, root, true), disk_key(cfg, root)};
}

SceneSet load_eval_set(const RunConfig& cfg) {
  if (const auto& root = cfg.get("data.eval_root"); !root.empty()) {
    return {from_disk(cfg, root, true), disk_key(cfg, root)};
  }
  if (const auto n = cfg.get_size("data.synthetic_eval"); n > 0) {
    return {synthetic(cfg, n, kSyntheticEvalSeed, true), synthetic_key(cfg, "eval", n)};
  }
  return load_train_set(cfg);
}

SceneSet load_target_set(const RunConfig& cfg) {
  if (const auto& root = cfg.get("joint.target_root"); !root.empty()) {
    return {from_disk(cfg, root, false), disk_key(cfg, root)};
  }
  if (const auto n = cfg.get_size("data.synthetic"); n > 0) {
    const auto count = std::max<std::size_t>(n, 16);
    return {synthetic(cfg, count, kSyntheticTargetSeed, false), synthetic_key(cfg, "target", count)};
  }
  throw ConfigError("joint training needs joint.target_root (clear-weather images) or data.synthetic");
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace fogsight::app
