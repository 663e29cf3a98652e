#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecnn/error.hpp"

namespace ecnn {

/// 64-bit FNV-1a, used for every artifact content hash.
class Fnv1a {
 public:
  void update(std::span<const unsigned char> bytes) noexcept {
    for (unsigned char b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view text) noexcept {
    update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
  }
  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

inline std::uint64_t hash_bytes(std::string_view bytes) {
  Fnv1a h;
  h.update(bytes);
  return h.digest();
}

inline std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  Fnv1a h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    h.update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(buf.data()), got));
  }
  return h.digest();
}

/// Hash over every regular file below `dir`: relative paths and contents, in sorted path order.
inline std::uint64_t hash_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  Fnv1a h;
  for (const auto& f : files) {
    h.update(std::filesystem::relative(f, dir).generic_string());
    const std::uint64_t content = hash_file(f);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(content >> (8 * i));
    h.update(bytes);
  }
  return h.digest();
}

}  // namespace ecnn
