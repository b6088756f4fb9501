#include "fogsight/png.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>
#include <string>

#include "fogsight/checkpoint.hpp"
#include "fogsight/error.hpp"

namespace fogsight {
namespace {

struct ReadState {
  const std::vector<std::uint8_t>* bytes = nullptr;
  std::size_t offset = 0;
  std::string message;
};

struct WriteState {
  std::vector<std::uint8_t> out;
  std::string message;
};

void read_callback(png_structp png, png_bytep dst, png_size_t length) {
  auto* st = static_cast<ReadState*>(png_get_io_ptr(png));
  if (st->offset + length > st->bytes->size()) {
    st->offset = st->bytes->size();
    png_error(png, "unexpected end of file");
  }
  std::memcpy(dst, st->bytes->data() + st->offset, length);
  st->offset += length;
}

void read_error(png_structp png, png_const_charp msg) {
  auto* st = static_cast<ReadState*>(png_get_error_ptr(png));
  if (st->message.empty()) st->message = msg;
  png_longjmp(png, 1);
}

void write_callback(png_structp png, png_bytep src, png_size_t length) {
  auto* st = static_cast<WriteState*>(png_get_io_ptr(png));
  st->out.insert(st->out.end(), src, src + length);
}

void write_error(png_structp png, png_const_charp msg) {
  auto* st = static_cast<WriteState*>(png_get_error_ptr(png));
  st->message = msg;
  png_longjmp(png, 1);
}

void ignore_warning(png_structp, png_const_charp) {}

void flush_callback(png_structp) {}

}  // namespace

RawImage decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw IoError("not a PNG file (bad signature)", 0);
  }
  ReadState st;
  st.bytes = &bytes;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &st, read_error, ignore_warning);
  if (png == nullptr) throw IoError("libpng initialisation failed", 0);
  png_infop info = png_create_info_struct(png);
  RawImage image;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("malformed PNG: " + st.message, st.offset);
  }
  png_set_read_fn(png, &st, read_callback);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) png_set_interlace_handling(png);
  png_read_update_info(png, info);

  image.width = png_get_image_width(png, info);
  image.height = png_get_image_height(png, info);
  image.channels = png_get_channels(png, info);
  image.bit_depth = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  buffer.resize(row_bytes * image.height);
  rows.resize(image.height);
  for (std::size_t y = 0; y < image.height; ++y) rows[y] = buffer.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count = std::size_t(image.width) * image.height * image.channels;
  image.samples.resize(count);
  if (image.bit_depth == 16) {
    for (std::size_t i = 0; i < count; ++i) {
      image.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) image.samples[i] = buffer[i];
  }
  return image;
}

std::vector<std::uint8_t> encode_png(const RawImage& image) {
  int color = 0;
  switch (image.channels) {
    case 1: color = PNG_COLOR_TYPE_GRAY; break;
    case 2: color = PNG_COLOR_TYPE_GRAY_ALPHA; break;
    case 3: color = PNG_COLOR_TYPE_RGB; break;
    case 4: color = PNG_COLOR_TYPE_RGB_ALPHA; break;
    default: throw ParameterError("encode_png: unsupported channel count " + std::to_string(image.channels));
  }
  if (image.bit_depth != 8 && image.bit_depth != 16) {
    throw ParameterError("encode_png: bit depth must be 8 or 16");
  }
  if (image.width == 0 || image.height == 0 ||
      image.samples.size() != std::size_t(image.width) * image.height * image.channels) {
    throw DimensionError("encode_png: sample count does not match dimensions");
  }
  const std::size_t bytes_per_sample = image.bit_depth / 8;
  const std::size_t row_bytes = std::size_t(image.width) * image.channels * bytes_per_sample;
  std::vector<std::uint8_t> buffer(row_bytes * image.height);
  for (std::size_t i = 0; i < image.samples.size(); ++i) {
    if (bytes_per_sample == 2) {
      buffer[2 * i] = static_cast<std::uint8_t>(image.samples[i] >> 8);
      buffer[2 * i + 1] = static_cast<std::uint8_t>(image.samples[i] & 0xff);
    } else {
      if (image.samples[i] > 255) throw ParameterError("encode_png: 8-bit sample out of range");
      buffer[i] = static_cast<std::uint8_t>(image.samples[i]);
    }
  }
  std::vector<png_bytep> rows(image.height);
  for (std::size_t y = 0; y < image.height; ++y) rows[y] = buffer.data() + y * row_bytes;

  WriteState st;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &st, write_error, ignore_warning);
  if (png == nullptr) throw IoError("libpng initialisation failed", 0);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed: " + st.message, st.out.size());
  }
  png_set_write_fn(png, &st, write_callback, flush_callback);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, image.width, image.height, static_cast<int>(image.bit_depth), color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(st.out);
}

RawImage read_png(const std::filesystem::path& path) {
  return decode_png(read_file_bytes(path));
}

void write_png(const std::filesystem::path& path, const RawImage& image) {
  write_file_atomic(path, encode_png(image));
}

}  // namespace fogsight
