#pragma once

#include <cstdint>
#include <vector>

#include "mpv/common.hpp"

namespace mpv {

/// Integer disparity per pixel with a validity mask.
struct DisparityMap {
  int width = 0;
  int height = 0;
  int d_max = 0;
  std::vector<int> u;
  std::vector<std::uint8_t> valid;

  DisparityMap() = default;
  DisparityMap(int w, int h, int dmax, int fill = 0, bool is_valid = true)
      : width(w),
        height(h),
        d_max(dmax),
        u(static_cast<std::size_t>(w) * h, fill),
        valid(static_cast<std::size_t>(w) * h, is_valid ? 1 : 0) {
    detail::require(w >= 1 && h >= 1, "DisparityMap: dimensions must be >= 1");
    detail::require(dmax >= 0, "DisparityMap: d_max must be >= 0");
  }

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  int at(int x, int y) const { return u[index(x, y)]; }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
  void set(int x, int y, int value, bool ok = true) {
    u[index(x, y)] = value;
    valid[index(x, y)] = ok ? 1 : 0;
  }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }

  bool operator==(const DisparityMap&) const = default;
};

}  // namespace mpv
