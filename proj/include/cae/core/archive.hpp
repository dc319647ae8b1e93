#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cae {

/// Named float32 tensor stored in an archive.
struct ArchiveEntry {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

/// Single-file container: a versioned key=value text manifest followed by
/// named tensors in declaration order, float32 little-endian.
///
/// Layout:
///   "CAEARCH1"                     8 bytes magic
///   u64 manifest_bytes, manifest   "key=value\n" lines
///   u64 entry_count
///   per entry: u64 name_len, name, u64 ndim, i64 dims[ndim], f32 data[prod(dims)]
/// All integers little-endian.
struct Archive {
  std::vector<std::pair<std::string, std::string>> manifest;
  std::vector<ArchiveEntry> entries;

  void set(const std::string& key, const std::string& value);
  /// Throws cae::Error when the key is absent.
  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const;
  const ArchiveEntry& entry(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

std::string encode_manifest(const std::vector<std::pair<std::string, std::string>>& kv);
std::vector<std::pair<std::string, std::string>> parse_manifest(const std::string& text);

/// FNV-1a 64-bit of the bytes, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace cae
