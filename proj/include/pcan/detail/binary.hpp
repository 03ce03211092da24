#pragma once

// Little-endian primitive encoding shared by the .fmap / PCAP / bank / track formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "pcan/error.hpp"

namespace pcan::binary {

template <class U>
void put_le(std::ostream& os, U v) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class U>
U get_le(std::istream& is, const char* what) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  is.read(reinterpret_cast<char*>(buf), sizeof(U));
  require(is.gcount() == static_cast<std::streamsize>(sizeof(U)), Errc::truncated,
          std::string("truncated while reading ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline void put_f32(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
inline double get_f32(std::istream& is, const char* what) {
  return static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(is, what)));
}
inline void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& is, const char* what) { return std::bit_cast<double>(get_le<std::uint64_t>(is, what)); }
inline void put_i64(std::ostream& os, std::int64_t v) { put_le(os, static_cast<std::uint64_t>(v)); }
inline std::int64_t get_i64(std::istream& is, const char* what) {
  return static_cast<std::int64_t>(get_le<std::uint64_t>(is, what));
}

inline void put_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }
inline void expect_magic(std::istream& is, const char (&magic)[5], const char* format) {
  char buf[4] = {};
  is.read(buf, 4);
  require(is.gcount() == 4, Errc::truncated, std::string("truncated ") + format + " stream");
  require(std::memcmp(buf, magic, 4) == 0, Errc::bad_magic,
          std::string("not a ") + format + " stream (bad magic)");
}

}  // namespace pcan::binary
