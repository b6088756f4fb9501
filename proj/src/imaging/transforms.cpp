#include <algorithm>
#include <cmath>

#include "fogsight/error.hpp"
#include "fogsight/imaging.hpp"

namespace fogsight::imaging {
namespace {

void require_rgb(const PlanarImage& img, const char* op) {
  if (img.space != ColorSpace::rgb || img.channels() != 3) {
    throw ParameterError(std::string(op) + ": expected a 3-plane rgb image, got " +
                         to_string(img.space));
  }
  for (const auto& p : img.planes) {
    if (p.size() != img.pixels()) throw DimensionError(std::string(op) + ": plane size mismatch");
  }
}

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace

const char* to_string(ColorSpace space) {
  switch (space) {
    case ColorSpace::rgb: return "rgb";
    case ColorSpace::lab: return "lab";
    case ColorSpace::hsv: return "hsv";
    case ColorSpace::gray: return "gray";
    case ColorSpace::invariant: return "invariant";
    case ColorSpace::iab: return "iab";
    case ColorSpace::ihs: return "ihs";
  }
  return "?";
}

PlanarImage::PlanarImage(std::size_t w, std::size_t h, std::size_t channels, ColorSpace cs,
                         double fill)
    : width(w), height(h), space(cs), planes(channels, std::vector<double>(w * h, fill)) {
  if (w == 0 || h == 0) throw DimensionError("image dimensions must be positive");
}

double DepthMap::max_valid() const {
  double best = 0.0;
  for (std::size_t i = 0; i < meters.size(); ++i) {
    if (is_valid(i)) best = std::max(best, meters[i]);
  }
  return best;
}

PlanarImage illumination_invariant(const PlanarImage& rgb, double alpha) {
  require_rgb(rgb, "illumination_invariant");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
  PlanarImage out(rgb.width, rgb.height, 1, ColorSpace::invariant);
  const auto& r = rgb.planes[0];
  const auto& g = rgb.planes[1];
  const auto& b = rgb.planes[2];
  for (std::size_t i = 0; i < rgb.pixels(); ++i) {
    const double rr = std::max(r[i], kLogFloor);
    const double gg = std::max(g[i], kLogFloor);
    const double bb = std::max(b[i], kLogFloor);
    out.planes[0][i] = 0.5 + std::log(gg / rr) - alpha * std::log(bb / rr);
  }
  return out;
}

PlanarImage luminance(const PlanarImage& rgb, LuminanceWeights weights) {
  require_rgb(rgb, "luminance");
  const double wb = weights == LuminanceWeights::printed ? 0.144 : 0.114;
  PlanarImage out(rgb.width, rgb.height, 1, ColorSpace::gray);
  for (std::size_t i = 0; i < rgb.pixels(); ++i) {
    out.planes[0][i] = 0.299 * rgb.planes[0][i] + 0.587 * rgb.planes[1][i] + wb * rgb.planes[2][i];
  }
  return out;
}

PlanarImage rgb_to_lab(const PlanarImage& rgb) {
  require_rgb(rgb, "rgb_to_lab");
  constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;
  PlanarImage out(rgb.width, rgb.height, 3, ColorSpace::lab);
  for (std::size_t i = 0; i < rgb.pixels(); ++i) {
    const double r = srgb_to_linear(rgb.planes[0][i]);
    const double g = srgb_to_linear(rgb.planes[1][i]);
    const double b = srgb_to_linear(rgb.planes[2][i]);
    const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    const double fx = lab_f(x / xn), fy = lab_f(y / yn), fz = lab_f(z / zn);
    out.planes[0][i] = (116.0 * fy - 16.0) / 100.0;
    out.planes[1][i] = (500.0 * (fx - fy) + 128.0) / 255.0;
    out.planes[2][i] = (200.0 * (fy - fz) + 128.0) / 255.0;
  }
  return out;
}

PlanarImage rgb_to_hsv(const PlanarImage& rgb) {
  require_rgb(rgb, "rgb_to_hsv");
  PlanarImage out(rgb.width, rgb.height, 3, ColorSpace::hsv);
  for (std::size_t i = 0; i < rgb.pixels(); ++i) {
    const double r = rgb.planes[0][i], g = rgb.planes[1][i], b = rgb.planes[2][i];
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double chroma = mx - mn;
    double h = 0.0;
    if (chroma > 0.0) {
      if (mx == r) {
        h = (g - b) / chroma;
        if (h < 0.0) h += 6.0;
      } else if (mx == g) {
        h = (b - r) / chroma + 2.0;
      } else {
        h = (r - g) / chroma + 4.0;
      }
      h /= 6.0;
      if (h >= 1.0) h = 0.0;
    }
    out.planes[0][i] = h;
    out.planes[1][i] = mx > 0.0 ? chroma / mx : 0.0;
    out.planes[2][i] = mx;
  }
  return out;
}

namespace {

PlanarImage compose(const PlanarImage& rgb, double alpha, const PlanarImage& other, ColorSpace cs) {
  PlanarImage out = illumination_invariant(rgb, alpha);
  out.space = cs;
  out.planes.push_back(other.planes[cs == ColorSpace::iab ? 1 : 0]);
  out.planes.push_back(other.planes[cs == ColorSpace::iab ? 2 : 1]);
  return out;
}

}  // namespace

PlanarImage compose_iab(const PlanarImage& rgb, double alpha) {
  return compose(rgb, alpha, rgb_to_lab(rgb), ColorSpace::iab);
}

PlanarImage compose_ihs(const PlanarImage& rgb, double alpha) {
  return compose(rgb, alpha, rgb_to_hsv(rgb), ColorSpace::ihs);
}

PlanarImage simulate_fog(const PlanarImage& rgb, const DepthMap& depth, const FogParams& params) {
  if (rgb.width != depth.width || rgb.height != depth.height ||
      depth.meters.size() != rgb.pixels()) {
    throw DimensionError("simulate_fog: depth " + std::to_string(depth.width) + "x" +
                         std::to_string(depth.height) + " does not match image " +
                         std::to_string(rgb.width) + "x" + std::to_string(rgb.height));
  }
  if (!(params.beta >= 0.0)) throw ParameterError("simulate_fog: beta must be >= 0");
  const double a = params.atmospheric_light;
  if (!(a >= 0.0 && a <= 1.0)) throw ParameterError("simulate_fog: atmospheric light must lie in [0, 1]");
  const double far = depth.max_valid();
  PlanarImage out = rgb;
  for (std::size_t i = 0; i < rgb.pixels(); ++i) {
    double d = depth.is_valid(i) ? depth.meters[i] : far;
    if (!depth.is_valid(i) && far == 0.0) d = INFINITY;
    const double t = std::exp(-params.beta * d);
    if (t >= 1.0) continue;
    for (auto& plane : out.planes) plane[i] = a + t * (plane[i] - a);
  }
  return out;
}

}  // namespace fogsight::imaging
