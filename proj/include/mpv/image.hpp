#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mpv/common.hpp"

namespace mpv {

/// Dynamic range of 8-bit intensities.
inline constexpr double kIntensityRange = 255.0;

/// Row-major 8-bit single-channel raster.
class GrayImage {
 public:
  GrayImage() = default;

  GrayImage(int width, int height, std::uint8_t fill = 0)
      : width_(width), height_(height) {
    detail::require(width >= 1 && height >= 1,
                    "GrayImage: dimensions must be >= 1, got " + std::to_string(width) + "x" +
                        std::to_string(height));
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  GrayImage(int width, int height, std::vector<std::uint8_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    detail::require(width >= 1 && height >= 1, "GrayImage: dimensions must be >= 1");
    detail::require(data_.size() == static_cast<std::size_t>(width) * height,
                    "GrayImage: data length does not match width*height");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  std::uint8_t operator()(int x, int y) const { return data_[index(x, y)]; }
  std::uint8_t& operator()(int x, int y) { return data_[index(x, y)]; }

  /// Pixel with coordinates clamped into the image (replicated border).
  std::uint8_t clamped(int x, int y) const {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return data_[index(x, y)];
  }

  std::span<const std::uint8_t> pixels() const { return data_; }
  std::span<std::uint8_t> pixels() { return data_; }
  std::span<const std::uint8_t> row(int y) const {
    return std::span<const std::uint8_t>(data_).subspan(static_cast<std::size_t>(y) * width_,
                                                        width_);
  }

  bool operator==(const GrayImage&) const = default;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Rectified left/right images of identical size.
struct StereoPair {
  GrayImage left;
  GrayImage right;

  StereoPair() = default;
  StereoPair(GrayImage l, GrayImage r) : left(std::move(l)), right(std::move(r)) {
    detail::require(left.width() == right.width() && left.height() == right.height(),
                    "StereoPair: left and right images differ in size");
  }

  int width() const { return left.width(); }
  int height() const { return left.height(); }
};

/// Per destination pixel, the fractional source coordinate to sample.
/// NaN in either coordinate marks the destination pixel as invalid.
struct RemapTable {
  int width = 0;
  int height = 0;
  std::vector<float> src_x;
  std::vector<float> src_y;

  RemapTable() = default;
  RemapTable(int w, int h)
      : width(w),
        height(h),
        src_x(static_cast<std::size_t>(w) * h, std::numeric_limits<float>::quiet_NaN()),
        src_y(static_cast<std::size_t>(w) * h, std::numeric_limits<float>::quiet_NaN()) {
    detail::require(w >= 1 && h >= 1, "RemapTable: dimensions must be >= 1");
  }

  static RemapTable identity(int w, int h) {
    RemapTable t(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) t.set(x, y, static_cast<float>(x), static_cast<float>(y));
    return t;
  }

  void set(int x, int y, float sx, float sy) {
    src_x[static_cast<std::size_t>(y) * width + x] = sx;
    src_y[static_cast<std::size_t>(y) * width + x] = sy;
  }
  std::pair<float, float> at(int x, int y) const {
    const auto i = static_cast<std::size_t>(y) * width + x;
    return {src_x[i], src_y[i]};
  }
  bool valid(int x, int y) const {
    auto [sx, sy] = at(x, y);
    return !std::isnan(sx) && !std::isnan(sy);
  }
};

/// Per-pixel non-negative gradient magnitude |G|.
struct GradientMap {
  int width = 0;
  int height = 0;
  std::vector<double> magnitude;

  double operator()(int x, int y) const {
    return magnitude[static_cast<std::size_t>(y) * width + x];
  }
};

/// Bilinear resampling of `img` through `table`. Output has the table's size;
/// invalid entries become 0. Coordinates must lie inside the source image.
inline GrayImage apply_remap(const GrayImage& img, const RemapTable& table) {
  detail::require(table.width >= 1 && table.height >= 1 &&
                      table.src_x.size() == static_cast<std::size_t>(table.width) * table.height &&
                      table.src_y.size() == table.src_x.size(),
                  "apply_remap: malformed remap table");
  GrayImage out(table.width, table.height, 0);
  const double max_x = img.width() - 1;
  const double max_y = img.height() - 1;
  for (int y = 0; y < table.height; ++y) {
    for (int x = 0; x < table.width; ++x) {
      if (!table.valid(x, y)) continue;
      auto [fx, fy] = table.at(x, y);
      const double sx = fx;
      const double sy = fy;
      if (sx < 0.0 || sy < 0.0 || sx > max_x || sy > max_y) {
        throw InvalidArgument("apply_remap: source coordinate (" + std::to_string(sx) + ", " +
                              std::to_string(sy) + ") for destination (" + std::to_string(x) +
                              ", " + std::to_string(y) + ") lies outside the " +
                              std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                              " source image");
      }
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const int y1 = std::min(y0 + 1, img.height() - 1);
      const double ax = sx - x0;
      const double ay = sy - y0;
      const double top = img(x0, y0) + ax * (img(x1, y0) - img(x0, y0));
      const double bottom = img(x0, y1) + ax * (img(x1, y1) - img(x0, y1));
      const double v = top + ay * (bottom - top);
      out(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return out;
}

/// Halves each axis (rounding up); every output pixel is the round-half-up
/// mean of its 2x2 source block, edge blocks averaging the pixels they have.
inline GrayImage downsample_half(const GrayImage& img) {
  detail::require(img.width() >= 2 && img.height() >= 2,
                  "downsample_half: image must be at least 2x2");
  const int w = (img.width() + 1) / 2;
  const int h = (img.height() + 1) / 2;
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int sum = 0;
      int n = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int sx = 2 * x + dx;
          const int sy = 2 * y + dy;
          if (sx < img.width() && sy < img.height()) {
            sum += img(sx, sy);
            ++n;
          }
        }
      }
      out(x, y) = static_cast<std::uint8_t>((2 * sum + n) / (2 * n));
    }
  }
  return out;
}

/// |G| = (|dI/dx| + |dI/dy|) / 2 with central differences (I(x+1)-I(x-1))/2
/// and replicated borders.
inline GradientMap gradient_magnitude(const GrayImage& img) {
  GradientMap g{img.width(), img.height(), {}};
  g.magnitude.resize(img.size());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double dx = (img.clamped(x + 1, y) - img.clamped(x - 1, y)) / 2.0;
      const double dy = (img.clamped(x, y + 1) - img.clamped(x, y - 1)) / 2.0;
      g.magnitude[static_cast<std::size_t>(y) * img.width() + x] =
          (std::abs(dx) + std::abs(dy)) / 2.0;
    }
  }
  return g;
}

}  // namespace mpv
