#include "cae/core/archive.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cae/core/types.hpp"

namespace cae {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'E', 'A', 'R', 'C', 'H', '1'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

template <typename T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error("archive truncated");
  return to_little(v);
}

std::string take_string(std::istream& in, std::uint64_t n) {
  if (n > (1ULL << 32)) throw Error("archive corrupt: oversized string");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw Error("archive truncated");
  return s;
}

}  // namespace

void Archive::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : manifest) {
    if (k == key) {
      v = value;
      return;
    }
  }
  manifest.emplace_back(key, value);
}

const std::string& Archive::get(const std::string& key) const {
  for (const auto& [k, v] : manifest) {
    if (k == key) return v;
  }
  throw Error("archive manifest lacks key '" + key + "'");
}

bool Archive::has(const std::string& key) const {
  for (const auto& [k, v] : manifest) {
    if (k == key) return true;
  }
  return false;
}

const ArchiveEntry& Archive::entry(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw Error("archive lacks entry '" + name + "'");
}

std::string encode_manifest(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw Error("manifest key/value contains a reserved character: '" + k + "'");
    }
    out += k + "=" + v + "\n";
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_manifest(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("manifest line without '=': " + line);
    kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return kv;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out.write(kMagic, sizeof(kMagic));
    const std::string manifest = encode_manifest(archive.manifest);
    put<std::uint64_t>(out, manifest.size());
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    put<std::uint64_t>(out, archive.entries.size());
    for (const auto& e : archive.entries) {
      std::int64_t count = 1;
      for (auto d : e.shape) count *= d;
      if (count != static_cast<std::int64_t>(e.data.size())) {
        throw Error("archive entry '" + e.name + "' shape does not match data length");
      }
      put<std::uint64_t>(out, e.name.size());
      out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
      put<std::uint64_t>(out, e.shape.size());
      for (auto d : e.shape) put<std::int64_t>(out, d);
      for (float v : e.data) put<float>(out, v);
    }
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open archive '" + path.string() + "'");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw Error("'" + path.string() + "' is not a CAE archive");
  }
  Archive a;
  a.manifest = parse_manifest(take_string(in, take<std::uint64_t>(in)));
  const auto n = take<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    ArchiveEntry e;
    e.name = take_string(in, take<std::uint64_t>(in));
    const auto ndim = take<std::uint64_t>(in);
    if (ndim > 8) throw Error("archive corrupt: entry '" + e.name + "' has too many dims");
    std::int64_t count = 1;
    for (std::uint64_t d = 0; d < ndim; ++d) {
      e.shape.push_back(take<std::int64_t>(in));
      if (e.shape.back() < 0) throw Error("archive corrupt: negative dim");
      count *= e.shape.back();
    }
    e.data.resize(static_cast<std::size_t>(count));
    for (auto& v : e.data) v = take<float>(in);
    a.entries.push_back(std::move(e));
  }
  return a;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cae
