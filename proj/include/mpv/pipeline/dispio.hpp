#pragma once

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "mpv/disparity.hpp"
#include "mpv/image.hpp"
#include "mpv/imgio.hpp"
#include "mpv/recog/detect.hpp"

namespace mpv {

// PFM: "Pf", width height, scale (negative = little-endian), then float32
// rows bottom to top. Invalid pixels are stored as +inf.

inline void save_pfm(const DisparityMap& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "Pf\n" << d.width << ' ' << d.height << "\n-1.0\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(d.width) * 4);
  for (int y = d.height - 1; y >= 0; --y) {
    for (int x = 0; x < d.width; ++x) {
      const float v = d.is_valid(x, y) ? static_cast<float>(d.at(x, y))
                                       : std::numeric_limits<float>::infinity();
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) row[x * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

/// Reads a PFM disparity map. Values are rounded to integers; non-finite or
/// negative entries become invalid. `d_max` of the result is the largest
/// valid value.
inline DisparityMap load_pfm(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  const std::string magic = token();
  if (magic == "PF") throw UnsupportedFormat("'" + path.string() + "': colour PFM");
  if (magic != "Pf") throw FormatError("'" + path.string() + "': not a PFM file");
  int w = 0, h = 0;
  double scale = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    scale = std::stod(token());
  } catch (const std::exception&) {
    throw FormatError("'" + path.string() + "': bad PFM header");
  }
  ++pos;  // single whitespace before the raster
  if (w <= 0 || h <= 0 || scale == 0.0) throw FormatError("'" + path.string() + "': bad PFM header");
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() - std::min(pos, bytes.size()) != n * 4)
    throw FormatError("'" + path.string() + "': PFM raster has wrong length");
  const bool little = scale < 0;
  DisparityMap d(w, h, 0);
  int top = 0;
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x, pos += 4) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= std::uint32_t{bytes[pos + (little ? b : 3 - b)]} << (8 * b);
      const float v = std::bit_cast<float>(bits);
      const bool ok = std::isfinite(v) && v >= 0.0f;
      const int u = ok ? static_cast<int>(std::lround(v)) : 0;
      d.set(x, y, u, ok);
      if (ok) top = std::max(top, u);
    }
  }
  d.d_max = top;
  return d;
}

/// 8-bit view of a disparity map: value * 255 / d_max, invalid pixels 0.
inline GrayImage disparity_to_gray(const DisparityMap& d) {
  GrayImage img(d.width, d.height);
  const double s = d.d_max > 0 ? 255.0 / d.d_max : 0.0;
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x)
      img(x, y) = d.is_valid(x, y)
                      ? static_cast<std::uint8_t>(std::clamp(std::lround(d.at(x, y) * s), 0L, 255L))
                      : 0;
  return img;
}

/// Reads ground truth from .pfm, or from an 8-bit image whose value is the
/// disparity with 0 marking unknown pixels.
inline DisparityMap load_disparity(const std::filesystem::path& path) {
  if (detail::lower_extension(path) == ".pfm") return load_pfm(path);
  const GrayImage img = load_image(path);
  DisparityMap d(img.width(), img.height(), 0);
  int top = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      d.set(x, y, img(x, y), img(x, y) != 0);
      top = std::max<int>(top, img(x, y));
    }
  d.d_max = top;
  return d;
}

/// Draws a rectangle outline with a 1-pixel contrasting rim.
inline void draw_box(GrayImage& img, const Box& b, std::uint8_t value) {
  const std::uint8_t rim = value > 127 ? 0 : 255;
  auto put = [&](int x, int y, std::uint8_t v) {
    if (x >= 0 && y >= 0 && x < img.width() && y < img.height()) img(x, y) = v;
  };
  for (int k = 0; k < 2; ++k) {
    const std::uint8_t v = k == 0 ? value : rim;
    const int x0 = b.x + k, y0 = b.y + k, x1 = b.x + b.w - 1 - k, y1 = b.y + b.h - 1 - k;
    if (x1 < x0 || y1 < y0) break;
    for (int x = x0; x <= x1; ++x) {
      put(x, y0, v);
      put(x, y1, v);
    }
    for (int y = y0; y <= y1; ++y) {
      put(x0, y, v);
      put(x1, y, v);
    }
  }
}

}  // namespace mpv
