#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "ecnn/error.hpp"

namespace ecnn::detail {

// Little-endian primitives shared by the binary file formats.

inline void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

template <class U>
void put_le(std::ostream& out, U v) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

inline void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
inline void put_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
inline void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw Error(ErrorCode::format, std::string("truncated file while reading ") + what);
}

template <class U>
U get_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(U)];
  read_exact(in, reinterpret_cast<char*>(bytes), sizeof(U), what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

inline std::uint8_t get_u8(std::istream& in, const char* what) { return get_le<std::uint8_t>(in, what); }
inline std::uint32_t get_u32(std::istream& in, const char* what) { return get_le<std::uint32_t>(in, what); }
inline std::uint64_t get_u64(std::istream& in, const char* what) { return get_le<std::uint64_t>(in, what); }
inline double get_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(get_le<std::uint64_t>(in, what));
}

inline std::string get_string(std::istream& in, const char* what, std::uint32_t max_len = 1u << 16) {
  const std::uint32_t n = get_u32(in, what);
  if (n > max_len) throw Error(ErrorCode::format, std::string("implausible string length in ") + what);
  std::string s(n, '\0');
  read_exact(in, s.data(), n, what);
  return s;
}

inline void expect_magic(std::istream& in, const char (&magic)[9], const char* what) {
  char got[8];
  read_exact(in, got, 8, what);
  if (std::memcmp(got, magic, 8) != 0) throw Error(ErrorCode::format, std::string("bad magic for ") + what);
}

}  // namespace ecnn::detail
