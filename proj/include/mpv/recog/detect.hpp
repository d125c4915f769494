#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "mpv/image.hpp"
#include "mpv/recog/cascade.hpp"
#include "mpv/roadobs.hpp"

namespace mpv {

struct DetectorConfig {
  int min_window = 30;
  int max_window = 90;
  double growth = 1.3;
  double stride_fraction = 0.1;  ///< step between windows as a fraction of their side
  int min_stride = 2;
  double merge_overlap = 0.5;    ///< intersection over the smaller box
  int min_neighbors = 1;         ///< accepted windows a merged group needs
  int threads = 1;

  void validate() const {
    detail::require(min_window >= kFeatureWindow, "DetectorConfig: min_window must be >= 24");
    detail::require(min_window <= max_window, "DetectorConfig: min_window must not exceed max_window");
    detail::require(growth > 1.0, "DetectorConfig: growth must be > 1");
    detail::require(stride_fraction > 0.0 && min_stride >= 1, "DetectorConfig: stride must be positive");
    detail::require(merge_overlap > 0.0 && merge_overlap <= 1.0,
                    "DetectorConfig: merge_overlap must be in (0, 1]");
    detail::require(min_neighbors >= 1, "DetectorConfig: min_neighbors must be >= 1");
  }
};

/// Square window sides: min * growth^k rounded, up to max.
inline std::vector<int> window_sizes(const DetectorConfig& cfg) {
  cfg.validate();
  std::vector<int> out;
  for (double s = cfg.min_window; std::lround(s) <= cfg.max_window; s *= cfg.growth) {
    const int side = static_cast<int>(std::lround(s));
    if (out.empty() || out.back() != side) out.push_back(side);
  }
  return out;
}

struct Box {
  int x = 0, y = 0, w = 0, h = 0;

  long area() const { return static_cast<long>(w) * h; }
  bool inside(const Box& o) const {
    return x >= o.x && y >= o.y && x + w <= o.x + o.w && y + h <= o.y + o.h;
  }
  bool operator==(const Box&) const = default;
};

inline double overlap_over_smaller(const Box& a, const Box& b) {
  const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const long small = std::min(a.area(), b.area());
  return small > 0 ? static_cast<double>(ix) * iy / static_cast<double>(small) : 0.0;
}

struct Detection {
  Box box;
  int windows = 0;  ///< accepted windows merged into this box

  bool operator==(const Detection&) const = default;
};

/// Groups boxes transitively by overlap and averages each group.
inline std::vector<Detection> merge_windows(const std::vector<Box>& boxes, double min_overlap,
                                            int min_neighbors = 1) {
  const std::size_t n = boxes.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (overlap_over_smaller(boxes[i], boxes[j]) >= min_overlap) {
        const std::size_t a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
  std::vector<Detection> out;
  for (std::size_t r = 0; r < n; ++r) {
    if (find(r) != r) continue;
    long sx = 0, sy = 0, sx1 = 0, sy1 = 0;
    int count = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (find(i) == r) {
        sx += boxes[i].x;
        sy += boxes[i].y;
        sx1 += boxes[i].x + boxes[i].w;
        sy1 += boxes[i].y + boxes[i].h;
        ++count;
      }
    if (count < min_neighbors) continue;
    // round the near corner up and the far corner down so the mean box stays
    // inside every region that contains all members
    const auto lo = [count](long s) { return static_cast<int>((s + count - 1) / count); };
    const auto hi = [count](long s) { return static_cast<int>(s / count); };
    Box b{lo(sx), lo(sy), 0, 0};
    b.w = std::max(1, hi(sx1) - b.x);
    b.h = std::max(1, hi(sy1) - b.y);
    out.push_back({b, count});
  }
  return out;
}

/// Slides square windows of every configured size across `roi` and merges
/// the windows the cascade accepts.
inline std::vector<Detection> detect_in_roi(const GrayImage& img, const Box& roi,
                                            const CascadeModel& model, const DetectorConfig& cfg) {
  cfg.validate();
  detail::require(roi.x >= 0 && roi.y >= 0 && roi.w >= 0 && roi.h >= 0 &&
                      roi.x + roi.w <= img.width() && roi.y + roi.h <= img.height(),
                  "detect_in_roi: roi outside the image");
  std::vector<Box> candidates;
  for (int side : window_sizes(cfg)) {
    if (side > roi.w || side > roi.h) break;
    const int step = std::max(cfg.min_stride, static_cast<int>(std::lround(side * cfg.stride_fraction)));
    for (int y = roi.y; y + side <= roi.y + roi.h; y += step)
      for (int x = roi.x; x + side <= roi.x + roi.w; x += step) candidates.push_back({x, y, side, side});
  }
  std::vector<char> hit(candidates.size(), 0);
  parallel_for(candidates.size(), cfg.threads, [&](std::size_t i) {
    const Box& b = candidates[i];
    hit[i] = cascade_classify(img, b.x, b.y, b.w, b.h, model).accept;
  });
  std::vector<Box> accepted;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (hit[i]) accepted.push_back(candidates[i]);
  return merge_windows(accepted, cfg.merge_overlap, cfg.min_neighbors);
}

inline std::vector<Detection> detect_in_roi(const GrayImage& img, const RoiBox& roi,
                                            const CascadeModel& model, const DetectorConfig& cfg) {
  return detect_in_roi(img, Box{roi.x, roi.y, roi.w, roi.h}, model, cfg);
}

}  // namespace mpv
