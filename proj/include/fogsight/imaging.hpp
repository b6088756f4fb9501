#pragma once

// Per-image colour transforms and fog synthesis. Images are planar,
// channels-first, double precision.

#include <cstddef>
#include <string>
#include <vector>

#include "fogsight/png.hpp"

namespace fogsight::imaging {

enum class ColorSpace { rgb, lab, hsv, gray, invariant, iab, ihs };

const char* to_string(ColorSpace space);

struct PlanarImage {
  std::size_t width = 0;
  std::size_t height = 0;
  ColorSpace space = ColorSpace::rgb;
  std::vector<std::vector<double>> planes;

  PlanarImage() = default;
  PlanarImage(std::size_t w, std::size_t h, std::size_t channels, ColorSpace cs, double fill = 0.0);

  std::size_t channels() const { return planes.size(); }
  std::size_t pixels() const { return width * height; }
  double& at(std::size_t c, std::size_t x, std::size_t y) { return planes[c][y * width + x]; }
  double at(std::size_t c, std::size_t x, std::size_t y) const { return planes[c][y * width + x]; }
};

// Depth in metres. `valid` is empty when every pixel is valid.
struct DepthMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> meters;
  std::vector<unsigned char> valid;

  bool is_valid(std::size_t i) const { return valid.empty() || valid[i] != 0; }
  // Largest valid depth; 0 when nothing is valid.
  double max_valid() const;
};

struct FogParams {
  double beta = 0.01;  // attenuation per metre
  double atmospheric_light = 0.8;
};

// Channels are clamped to this floor before taking logs.
inline constexpr double kLogFloor = 1.0 / 255.0;
inline constexpr double kDefaultAlpha = 0.48;

// 0.5 + ln(G) - alpha ln(B) - (1 - alpha) ln(R), evaluated as
// 0.5 + ln(G/R) - alpha ln(B/R) so that a power-of-two rescaling of all
// channels leaves the result bit-identical.
PlanarImage illumination_invariant(const PlanarImage& rgb, double alpha = kDefaultAlpha);

// `printed` uses 0.299 / 0.587 / 0.144; `standard` uses 0.114 for blue.
enum class LuminanceWeights { printed, standard };
PlanarImage luminance(const PlanarImage& rgb, LuminanceWeights weights = LuminanceWeights::printed);

// sRGB (D65) to CIELAB, planes stored as L/100, (a+128)/255, (b+128)/255.
PlanarImage rgb_to_lab(const PlanarImage& rgb);
// Hue as a fraction of a turn in [0, 1).
PlanarImage rgb_to_hsv(const PlanarImage& rgb);

PlanarImage compose_iab(const PlanarImage& rgb, double alpha = kDefaultAlpha);
PlanarImage compose_ihs(const PlanarImage& rgb, double alpha = kDefaultAlpha);

// Exponential transmittance haze model, t = exp(-beta d):
// out = t in + (1 - t) A. Masked depth pixels use the largest valid depth.
PlanarImage simulate_fog(const PlanarImage& rgb, const DepthMap& depth, const FogParams& params);

// ---- file conversion ----

// Drops alpha; 1-channel images become gray, 3-channel rgb.
PlanarImage to_planar(const RawImage& raw);
// Values are clamped to [0, 1] and rounded to the nearest code.
RawImage to_raw(const PlanarImage& image, unsigned bit_depth = 8);

PlanarImage load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const PlanarImage& image, unsigned bit_depth = 8);

enum class DepthDecode { disparity256, meters16 };
DepthDecode parse_depth_decode(const std::string& name);

struct StereoCamera {
  double baseline_m = 0.209313;
  double focal_px = 2262.52;
};

// disparity256: d = value / 256 px, depth = baseline * focal / d, value 0 invalid.
// meters16:     depth = value / 256 m, value 0 invalid.
DepthMap decode_depth(const RawImage& raw, DepthDecode mode, const StereoCamera& camera = {});

}  // namespace fogsight::imaging
