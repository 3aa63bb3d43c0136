#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "trep/errors.hpp"

namespace trep::binio {

// Little-endian primitives shared by every binary container in the library.

template <typename T>
void write(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read(std::istream& is) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw CorruptFile("unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, std::uint32_t max_len = 1u << 28) {
  const auto n = read<std::uint32_t>(is);
  if (n > max_len) throw CorruptFile("string length out of range");
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), n)) throw CorruptFile("unexpected end of file");
  return s;
}

inline void write_magic(std::ostream& os, const char (&magic)[5], std::uint8_t version) {
  os.write(magic, 4);
  write<std::uint8_t>(os, version);
}

/// Throws VersionMismatch on a foreign magic or unsupported version.
inline void expect_magic(std::istream& is, const char (&magic)[5], std::uint8_t version) {
  char got[4];
  if (!is.read(got, 4)) throw CorruptFile("file too short for header");
  if (std::memcmp(got, magic, 4) != 0) throw VersionMismatch(std::string("bad magic, expected ") + magic);
  const auto v = read<std::uint8_t>(is);
  if (v != version) throw VersionMismatch("unsupported format version " + std::to_string(v));
}

}  // namespace trep::binio
