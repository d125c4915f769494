#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "mpv/image.hpp"

namespace mpv {

struct LbpParams {
  int p = 8;  ///< neighbours
  int r = 1;  ///< radius in pixels

  void validate() const {
    detail::require(p == 8 || p == 16, "LbpParams: p must be 8 or 16");
    detail::require(r >= 1, "LbpParams: r must be >= 1");
  }

  bool operator==(const LbpParams&) const = default;
};

namespace detail {

struct LbpTap {
  double dx, dy;
};

/// Neighbour offsets: starting east, counter-clockwise on screen (so the
/// second neighbour for p = 8 lies up and to the right).
inline std::vector<LbpTap> lbp_taps(const LbpParams& params) {
  std::vector<LbpTap> taps;
  for (int k = 0; k < params.p; ++k) {
    const double th = 2.0 * std::numbers::pi * k / params.p;
    double dx = params.r * std::cos(th);
    double dy = -params.r * std::sin(th);
    if (std::abs(dx - std::round(dx)) < 1e-9) dx = std::round(dx);
    if (std::abs(dy - std::round(dy)) < 1e-9) dy = std::round(dy);
    taps.push_back({dx, dy});
  }
  return taps;
}

/// Bilinear sample of I - centre at (x + dx, y + dy). Interpolating the
/// integer differences keeps the result exactly invariant to gray shifts.
inline double lbp_difference(const GrayImage& img, int x, int y, const LbpTap& t, int centre) {
  const double sx = x + t.dx, sy = y + t.dy;
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const double fx = sx - x0, fy = sy - y0;
  auto d = [&](int xx, int yy) { return static_cast<double>(int(img(xx, yy)) - centre); };
  if (fx == 0.0 && fy == 0.0) return d(x0, y0);
  const int x1 = fx == 0.0 ? x0 : x0 + 1;
  const int y1 = fy == 0.0 ? y0 : y0 + 1;
  const double top = (1.0 - fx) * d(x0, y0) + fx * d(x1, y0);
  const double bottom = (1.0 - fx) * d(x0, y1) + fx * d(x1, y1);
  return (1.0 - fy) * top + fy * bottom;
}

}  // namespace detail

/// Local binary pattern at (x, y): bit k is set when neighbour k is at least
/// as bright as the centre.
inline std::uint32_t lbp_code(const GrayImage& img, int x, int y, const LbpParams& params) {
  params.validate();
  if (x - params.r < 0 || y - params.r < 0 || x + params.r >= img.width() ||
      y + params.r >= img.height())
    throw InvalidArgument("lbp_code: neighbourhood leaves the image");
  const int c = img(x, y);
  std::uint32_t code = 0;
  const auto taps = detail::lbp_taps(params);
  for (int k = 0; k < params.p; ++k)
    if (detail::lbp_difference(img, x, y, taps[k], c) >= 0.0) code |= 1u << k;
  return code;
}

/// Fixed feature geometry: windows are resampled to 26x26 so the inner
/// 24x24 has a full radius-1 neighbourhood, split into 3x3 cells of 8x8.
inline constexpr int kFeatureWindow = 24;
inline constexpr int kFeatureCells = 3;
inline constexpr int kFeatureBins = 256;
inline constexpr int kFeatureCount = kFeatureCells * kFeatureCells * kFeatureBins;

using FeatureVector = std::vector<std::uint8_t>;

/// Box-averages a w x h region of `img` at (x0, y0) down (or nearest-samples
/// up) to size x size with integer rounding, so adding a constant to the
/// source adds the same constant to the result.
inline GrayImage resample_window(const GrayImage& img, int x0, int y0, int w, int h, int size) {
  detail::require(w >= 1 && h >= 1 && x0 >= 0 && y0 >= 0 && x0 + w <= img.width() &&
                      y0 + h <= img.height(),
                  "resample_window: region outside the image");
  GrayImage out(size, size);
  std::vector<int> cx0(size), cx1(size), colsum(w);
  for (int t = 0; t < size; ++t) {
    cx0[t] = t * w / size;
    cx1[t] = std::max(cx0[t] + 1, (t + 1) * w / size);
  }
  for (int ty = 0; ty < size; ++ty) {
    const int sy0 = ty * h / size;
    const int sy1 = std::max(sy0 + 1, (ty + 1) * h / size);
    std::fill(colsum.begin(), colsum.end(), 0);
    for (int yy = sy0; yy < sy1; ++yy) {
      const std::uint8_t* src = img.row(y0 + yy).data() + x0;
      for (int xx = 0; xx < w; ++xx) colsum[xx] += src[xx];
    }
    for (int tx = 0; tx < size; ++tx) {
      int sum = 0;
      for (int xx = cx0[tx]; xx < cx1[tx]; ++xx) sum += colsum[xx];
      const int n = (sy1 - sy0) * (cx1[tx] - cx0[tx]);
      out(tx, ty) = static_cast<std::uint8_t>((2 * sum + n) / (2 * n));
    }
  }
  return out;
}

namespace detail {

/// lbp_difference with the tap geometry resolved once.
struct ResolvedTap {
  int ox, oy;     // offset of the top-left sample
  int sx, sy;     // 1 when the tap interpolates along that axis
  double fx, fy;

  explicit ResolvedTap(const LbpTap& t) {
    ox = static_cast<int>(std::floor(t.dx));
    oy = static_cast<int>(std::floor(t.dy));
    fx = t.dx - ox;
    fy = t.dy - oy;
    sx = fx == 0.0 ? 0 : 1;
    sy = fy == 0.0 ? 0 : 1;
  }

  double diff(const std::uint8_t* p, int stride, int centre) const {
    const std::uint8_t* q = p + oy * stride + ox;
    const double d00 = int(q[0]) - centre;
    if (sx == 0 && sy == 0) return d00;
    const double d10 = int(q[sx]) - centre;
    const double d01 = int(q[sy * stride]) - centre;
    const double d11 = int(q[sy * stride + sx]) - centre;
    const double top = (1.0 - fx) * d00 + fx * d10;
    const double bottom = (1.0 - fx) * d01 + fx * d11;
    return (1.0 - fy) * top + fy * bottom;
  }
};

}  // namespace detail

/// LBP histograms (p = 8, r = 1) of a resampled 26x26 patch.
inline FeatureVector features_of_patch(const GrayImage& patch) {
  detail::require(patch.width() == kFeatureWindow + 2 && patch.height() == kFeatureWindow + 2,
                  "features_of_patch: patch must be 26x26");
  static const std::vector<detail::ResolvedTap> taps = [] {
    std::vector<detail::ResolvedTap> v;
    for (const auto& t : detail::lbp_taps(LbpParams{})) v.emplace_back(t);
    return v;
  }();
  FeatureVector f(kFeatureCount, 0);
  constexpr int cell = kFeatureWindow / kFeatureCells;
  const int stride = patch.width();
  const std::uint8_t* base = patch.pixels().data();
  for (int y = 0; y < kFeatureWindow; ++y) {
    for (int x = 0; x < kFeatureWindow; ++x) {
      const std::uint8_t* p = base + (y + 1) * stride + x + 1;
      const int c = *p;
      std::uint32_t code = 0;
      for (int k = 0; k < 8; ++k)
        if (taps[k].diff(p, stride, c) >= 0.0) code |= 1u << k;
      const int cidx = (y / cell) * kFeatureCells + x / cell;
      ++f[static_cast<std::size_t>(cidx) * kFeatureBins + code];
    }
  }
  return f;
}

/// Feature vector of a window region of `img`.
inline FeatureVector extract_features(const GrayImage& img, int x0, int y0, int w, int h) {
  if (w < kFeatureWindow || h < kFeatureWindow)
    throw InvalidArgument("extract_features: window smaller than 24x24");
  return features_of_patch(resample_window(img, x0, y0, w, h, kFeatureWindow + 2));
}

inline FeatureVector extract_features(const GrayImage& window) {
  return extract_features(window, 0, 0, window.width(), window.height());
}

}  // namespace mpv
