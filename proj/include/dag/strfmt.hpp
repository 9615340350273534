#pragma once

#include <charconv>
#include <string>

namespace dag {

// Shortest round-trip decimal form; the one float formatter used for config
// dumps, CSV and SVG so identical values always produce identical bytes.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace dag
