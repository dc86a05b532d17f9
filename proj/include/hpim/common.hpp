#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hpim {

// Error taxonomy maps 1:1 onto CLI exit codes.
struct ConfigError : std::runtime_error {  // exit 2
  using std::runtime_error::runtime_error;
};
struct CapacityError : std::runtime_error {  // exit 3
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {  // exit 4
  using std::runtime_error::runtime_error;
};

constexpr std::int64_t ceil_div(std::int64_t num, std::int64_t den) {
  return (num + den - 1) / den;
}

constexpr int floor_log2(std::int64_t v) {
  int r = -1;
  while (v > 0) {
    v >>= 1;
    ++r;
  }
  return r;
}

// Largest power of two <= v (v >= 1).
constexpr std::int64_t floor_pow2(std::int64_t v) {
  return std::int64_t{1} << floor_log2(v);
}

constexpr int ceil_log2(std::int64_t v) {
  int f = floor_log2(v);
  return (std::int64_t{1} << f) == v ? f : f + 1;
}

}  // namespace hpim
