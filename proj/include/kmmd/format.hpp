#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace kmmd {

/// Shortest decimal that round-trips; locale independent, so report files are
/// byte-stable.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace kmmd
