#pragma once

// Dataset scanning, label handling and batch assembly.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fogsight/imaging.hpp"
#include "fogsight/rng.hpp"
#include "fogsight/tensor.hpp"

namespace fogsight::data {

inline constexpr std::uint8_t kIgnore = 255;
inline constexpr std::size_t kNumClasses = 19;

// Evaluation classes in trainId order.
const std::array<const char*, kNumClasses>& class_names();

// Raw dataset ids or compact training ids.
enum class LabelSpace { raw, train };

struct LabelMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> ids;
  LabelSpace space = LabelSpace::train;

  LabelMap() = default;
  LabelMap(std::size_t w, std::size_t h, std::uint8_t fill = kIgnore,
           LabelSpace s = LabelSpace::train);

  std::uint8_t& at(std::size_t x, std::size_t y) { return ids[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return ids[y * width + x]; }
};

LabelMap label_from_png(const RawImage& raw, LabelSpace space);
RawImage label_to_png(const LabelMap& labels);

// Raw id -> train id, every id not listed maps to kIgnore.
class LabelTable {
 public:
  // Text file: '#' comments, an optional "version N" line, then
  // "labelId trainId [name...]" rows.
  static LabelTable load(const std::filesystem::path& path);
  static LabelTable identity(std::size_t classes = kNumClasses);
  // The table shipped in the data directory.
  static std::filesystem::path default_path();

  std::uint8_t operator()(std::uint8_t raw) const { return to_train_[raw]; }
  int version() const { return version_; }

 private:
  std::array<std::uint8_t, 256> to_train_{};
  int version_ = 0;
};

// Maps a raw-space map through the table. A map already in train space is
// returned unchanged, which makes repeated remapping idempotent.
LabelMap remap_labels(const LabelMap& raw, const LabelTable& table);

struct ClassStats {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  // True when no non-ignore pixel was counted; probabilities are then undefined.
  bool empty() const { return total == 0; }
  std::vector<double> probabilities() const;
  void add(const LabelMap& labels);
};

ClassStats compute_class_stats(std::span<const LabelMap> labels, std::size_t classes = kNumClasses);

// ---- datasets ----

enum class Layout { cityscapes, flat };
Layout parse_layout(const std::string& name);

struct SampleDescriptor {
  std::string id;  // shared stem, relative to the layout root
  std::filesystem::path image;
  std::optional<std::filesystem::path> depth;
  std::optional<std::filesystem::path> label;
  LabelSpace label_space = LabelSpace::train;
};

// flat:       img/<stem>.png, depth/<stem>.png, label/<stem>.png (train ids)
// cityscapes: leftImg8bit/<split>/<city>/<name>_leftImg8bit.png with
//             gtFine/..._gtFine_labelIds.png (raw ids) and disparity/..._disparity.png
// Sorted by id. With `require_labels`, a missing label is a ConfigError
// naming the stem.
std::vector<SampleDescriptor> scan_dataset(const std::filesystem::path& root, Layout layout,
                                           bool require_labels);

struct SceneSample {
  std::string id;
  imaging::PlanarImage rgb;
  std::optional<imaging::DepthMap> depth;
  std::optional<LabelMap> label;
};

struct LoadOptions {
  imaging::DepthDecode depth_decode = imaging::DepthDecode::disparity256;
  imaging::StereoCamera camera;
  const LabelTable* table = nullptr;  // required for raw-id labels
};

SceneSample load_sample(const SampleDescriptor& desc, const LoadOptions& options);

// Mirrors every raster about the vertical axis.
SceneSample hflip(const SceneSample& sample);
// Flips with probability 0.5.
SceneSample augment_hflip(const SceneSample& sample, Rng& rng);

// ---- resizing ----

imaging::PlanarImage resize_bilinear(const imaging::PlanarImage& img, std::size_t width,
                                     std::size_t height);
imaging::DepthMap resize_nearest(const imaging::DepthMap& depth, std::size_t width, std::size_t height);
LabelMap resize_nearest(const LabelMap& labels, std::size_t width, std::size_t height);

// ---- batches ----

enum class InputMode { rgb, iit, iab, ihs, gcs };
enum class AuxMode { dl, l, none };
InputMode parse_input_mode(const std::string& name);
AuxMode parse_aux_mode(const std::string& name);
const char* to_string(InputMode mode);
const char* to_string(AuxMode mode);
std::size_t aux_channels(AuxMode mode);

// Per-plane mean and standard deviation of the network inputs.
struct NormStats {
  std::vector<double> input_mean, input_std;
  std::vector<double> aux_mean, aux_std;
  std::size_t samples = 0;

  std::string to_text() const;
  static NormStats from_text(const std::string& text);
};

struct BatchOptions {
  InputMode input = InputMode::rgb;
  AuxMode aux = AuxMode::dl;
  std::size_t width = 128;
  std::size_t height = 64;
  double alpha = imaging::kDefaultAlpha;
  imaging::LuminanceWeights luminance = imaging::LuminanceWeights::printed;
  double depth_max_m = 300.0;
  // Applied to the resized rgb image in gcs mode.
  std::function<imaging::PlanarImage(const imaging::PlanarImage&)> translate;
};

// Network-ready planes of one sample before normalisation.
struct PreparedSample {
  std::string id;
  std::vector<std::vector<double>> input;  // 3 planes
  std::vector<std::vector<double>> aux;    // 2 (depth, luminance), 1 or 0 planes
  LabelMap label;                          // all kIgnore when unlabeled
  bool labeled = false;
};

PreparedSample prepare_sample(const SceneSample& sample, const BatchOptions& options);

NormStats compute_norm_stats(std::span<const PreparedSample> samples);

// Computes statistics once and stores them in `cache`; later calls read
// the file back if it was produced for the same key.
NormStats cached_norm_stats(const std::filesystem::path& cache, const std::string& key,
                            const std::function<NormStats()>& compute);

struct LabelTensor {
  std::size_t n = 0, height = 0, width = 0;
  std::vector<std::uint8_t> ids;
};

template <typename T>
struct Batch {
  ad::Tensor<T> input;  // [N,3,H,W]
  ad::Tensor<T> aux;    // [N,2|1,H,W] or undefined
  LabelTensor labels;   // [N,H,W]
  std::vector<std::string> ids;
};

// Stacks prepared samples, normalising each plane with `norm` when given.
template <typename T>
Batch<T> make_batch(std::span<const PreparedSample> samples, const NormStats* norm);

template <typename T>
Batch<T> make_batch(std::span<const SceneSample> samples, const BatchOptions& options,
                    const NormStats* norm);

}  // namespace fogsight::data

namespace fogsight::data {

// Procedural street-like scenes: sky over road, plus rectangles (building),
// discs (car) and ellipses (person) with class-specific colours, per-pixel
// noise and a depth map that is nearer for objects and lower rows.
std::vector<SceneSample> synthetic_scenes(std::size_t count, std::size_t width, std::size_t height,
                                          std::uint64_t seed);

}  // namespace fogsight::data
