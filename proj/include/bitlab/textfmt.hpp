#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace bitlab {

// Shortest decimal form that round-trips the exact double. Used for every
// float written to CSV, SVG, and checkpoint files so reruns are byte-stable.
inline std::string fmt_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline bool parse_double(const std::string& text, double& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc{} && res.ptr == last;
}

}  // namespace bitlab
