#pragma once

// PNG reading and writing on top of libpng. Decoding works on in-memory
// bytes so that malformed input can be reported with the offset at which
// the decoder gave up.

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fogsight {

// Interleaved samples exactly as stored: gray, gray+alpha, rgb or rgba,
// 8 or 16 bits. Palette and sub-byte images are expanded to 8 bits.
struct RawImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::uint32_t bit_depth = 8;
  std::vector<std::uint16_t> samples;

  std::uint16_t max_value() const { return bit_depth == 16 ? 65535 : 255; }
  std::uint16_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return samples[(y * width + x) * channels + c];
  }
};

RawImage decode_png(const std::vector<std::uint8_t>& bytes);
// Same input always yields the same bytes (fixed compression settings,
// no timestamp chunk).
std::vector<std::uint8_t> encode_png(const RawImage& image);

RawImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RawImage& image);

}  // namespace fogsight
