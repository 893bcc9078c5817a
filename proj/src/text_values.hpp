// SPDX-License-Identifier: Apache-2.0
// Parsing of scalar values from key = value text.
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>

#include "dmesr/error.hpp"

namespace dmesr::text {

inline std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size() || value.empty()) {
    throw Error("setting '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size() || !std::isfinite(out)) {
    throw Error("setting '" + key + "': expected a number, got '" + value + "'");
  }
  return out;
}

inline bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error("setting '" + key + "': expected true or false, got '" + value + "'");
}

/// Shortest text that parses back to the same double.
inline std::string from_double(double v) {
  char buf[32];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::stod(buf) == v) break;
  }
  return buf;
}

inline std::string from_bool(bool v) { return v ? "true" : "false"; }

}  // namespace dmesr::text
