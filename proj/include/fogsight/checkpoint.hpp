#pragma once

// FOGW checkpoint files. Layout, all integers unsigned 32-bit little-endian:
//
//   "FOGW" | version | tensor count |
//   per tensor: name length | UTF-8 name | rank | dims... | float32 LE values
//
// Files are written to a temporary sibling and renamed into place.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fogsight {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries);
// Throws IoError carrying the byte offset of the first malformed field.
std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);

// Shared file helpers.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
// Write-then-rename; the destination is either the old or the new content.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace fogsight
