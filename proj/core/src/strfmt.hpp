// Shortest round-trip numeric formatting for byte-stable CSV output.
#pragma once

#include <charconv>
#include <cstdint>
#include <string>

namespace bvt::detail {

inline std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt_u64(std::uint64_t v) {
  char buf[24];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace bvt::detail
