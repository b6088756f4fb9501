#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "fogsight/app.hpp"
#include "fogsight/png.hpp"

namespace fogsight::app {

namespace {

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : "-"; }

double parse_num(const std::string& s, std::size_t line) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw IoError("trace line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

constexpr const char* kHeader = "step\tseg_loss\tadv_loss\tdisc_loss\ttotal_loss\tlr";

}  // namespace

std::string format_trace(const std::vector<TraceRow>& rows) {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "\t" + num(r.seg_loss) + "\t" + opt(r.adv_loss) + "\t" + opt(r.disc_loss) +
           "\t" + num(r.total_loss) + "\t" + num(r.lr) + "\n";
  }
  return out;
}

std::vector<TraceRow> parse_trace(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<TraceRow> rows;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (number == 1) {
      if (line != kHeader) throw IoError("trace: unexpected header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream fields(line);
    std::string item;
    while (std::getline(fields, item, '\t')) f.push_back(item);
    if (f.size() != 6) throw IoError("trace line " + std::to_string(number) + ": expected 6 fields");
    TraceRow r;
    r.step = static_cast<std::size_t>(parse_num(f[0], number));
    r.seg_loss = parse_num(f[1], number);
    if (f[2] != "-") r.adv_loss = parse_num(f[2], number);
    if (f[3] != "-") r.disc_loss = parse_num(f[3], number);
    r.total_loss = parse_num(f[4], number);
    r.lr = parse_num(f[5], number);
    if (!rows.empty() && r.step <= rows.back().step) {
      throw IoError("trace line " + std::to_string(number) + ": step numbers must increase");
    }
    rows.push_back(r);
  }
  return rows;
}

void plot_trace(const std::vector<TraceRow>& rows, const fs::path& png) {
  std::vector<Curve> curves{{{31, 119, 180}, {}}, {{214, 39, 40}, {}}, {{44, 160, 44}, {}}, {{0, 0, 0}, {}}};
  for (const auto& r : rows) {
    curves[0].points.emplace_back(r.step, r.seg_loss);
    if (r.adv_loss) curves[1].points.emplace_back(r.step, *r.adv_loss);
    if (r.disc_loss) curves[2].points.emplace_back(r.step, *r.disc_loss);
    if (r.adv_loss) curves[3].points.emplace_back(r.step, r.total_loss);
  }
  plot_curves(curves, png);
}

void plot_curves(const std::vector<Curve>& curves, const fs::path& png) {
  constexpr std::uint32_t W = 720, H = 400, left = 50, right = 20, top = 20, bottom = 40;
  RawImage img;
  img.width = W;
  img.height = H;
  img.channels = 3;
  img.samples.assign(W * H * 3, 255);
  auto put = [&](long x, long y, const std::array<std::uint16_t, 3>& c) {
    if (x < 0 || y < 0 || x >= long(W) || y >= long(H)) return;
    for (int k = 0; k < 3; ++k) img.samples[(y * W + x) * 3 + k] = c[k];
  };
  auto line = [&](long x0, long y0, long x1, long y1, const std::array<std::uint16_t, 3>& c) {
    const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    while (true) {
      put(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  };
  const std::array<std::uint16_t, 3> axis{0, 0, 0}, grid{225, 225, 225};
  double lo = INFINITY, hi = -INFINITY, s0 = INFINITY, s1 = -INFINITY;
  for (const auto& s : curves) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(y)) continue;
      lo = std::min(lo, y);
      hi = std::max(hi, y);
      s0 = std::min(s0, x);
      s1 = std::max(s1, x);
    }
  }
  if (!(lo <= hi)) lo = 0, hi = 1, s0 = 0, s1 = 1;
  if (hi - lo < 1e-12) hi = lo + 1;
  if (s1 - s0 < 1) s1 = s0 + 1;
  lo = std::min(lo, 0.0);
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return long(left + (x - s0) / (s1 - s0) * pw); };
  auto py = [&](double y) { return long(top + (1.0 - (y - lo) / (hi - lo)) * ph); };
  for (int g = 1; g < 5; ++g) {
    const long y = long(top + ph * g / 5);
    line(left, y, W - right, y, grid);
  }
  line(left, top, left, H - bottom, axis);
  line(left, H - bottom, W - right, H - bottom, axis);
  for (const auto& s : curves) {
    for (std::size_t i = 1; i < s.points.size(); ++i) {
      const auto [x0, y0] = s.points[i - 1];
      const auto [x1, y1] = s.points[i];
      if (std::isfinite(y0) && std::isfinite(y1)) line(px(x0), py(y0), px(x1), py(y1), s.color);
    }
    if (s.points.size() == 1 && std::isfinite(s.points[0].second)) put(px(s.points[0].first), py(s.points[0].second), s.color);
  }
  // Legend swatches in curve order.
  for (std::size_t k = 0; k < curves.size(); ++k) {
    if (curves[k].points.empty()) continue;
    for (long y = 0; y < 8; ++y) {
      for (long x = 0; x < 16; ++x) put(long(W - right - 100 + 24 * k + x), long(top + 6 + y), curves[k].color);
    }
  }
  write_png(png, img);
}

}  // namespace fogsight::app
