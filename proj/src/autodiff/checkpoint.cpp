#include "fogsight/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fogsight/error.hpp"

namespace fogsight {

namespace {

constexpr char kMagic[4] = {'F', 'O', 'G', 'W'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  float f32() {
    const std::uint32_t bits = u32("tensor value");
    return std::bit_cast<float>(bits);
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw IoError(std::string("checkpoint truncated while reading ") + what, pos_);
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    std::size_t count = 1;
    for (auto d : e.dims) count *= d;
    if (count != e.values.size() || e.dims.empty()) {
      throw DimensionError("checkpoint entry " + e.name + " has inconsistent dims");
    }
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) put_u32(out, d);
    for (float v : e.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.text(4, "magic") != std::string(kMagic, 4)) throw IoError("not a FOGW checkpoint", 0);
  const auto version_pos = r.pos();
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version), version_pos);
  }
  const auto count = r.u32("tensor count");
  std::vector<CheckpointEntry> entries;
  for (std::uint32_t t = 0; t < count; ++t) {
    CheckpointEntry e;
    const auto name_len = r.u32("name length");
    e.name = r.text(name_len, "name");
    const auto rank_pos = r.pos();
    const auto rank = r.u32("rank");
    if (rank == 0 || rank > 8) throw IoError("invalid rank for " + e.name, rank_pos);
    std::uint64_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      e.dims.push_back(r.u32("dimension"));
      n *= e.dims.back();
    }
    if (n * 4 > r.remaining()) {
      throw IoError("checkpoint truncated in values of " + e.name, r.pos());
    }
    e.values.resize(n);
    for (auto& v : e.values) v = r.f32();
    entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw IoError("trailing bytes after checkpoint", r.pos());
  return entries;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<CheckpointEntry>& entries) {
  write_file_atomic(path, encode_checkpoint(entries));
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace fogsight
