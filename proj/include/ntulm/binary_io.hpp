#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

#include "ntulm/common.hpp"

namespace ntulm::bin {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline void put_f32(std::ostream& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(ErrorCode::FormatError, "unexpected end of binary stream");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline double get_f32(std::istream& in) { return static_cast<double>(std::bit_cast<float>(get_u32(in))); }

inline void put_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
  char b[4];
  if (!in.read(b, 4) || b[0] != magic[0] || b[1] != magic[1] || b[2] != magic[2] || b[3] != magic[3])
    throw Error(ErrorCode::FormatError, std::string("missing magic ") + magic);
}

}  // namespace ntulm::bin
