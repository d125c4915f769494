#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "mpv/disparity.hpp"
#include "mpv/image.hpp"
#include "mpv/roadobs.hpp"
#include "mpv/texture.hpp"

namespace mpv {

/// Pair plus exact ground truth for a synthetic view.
struct SyntheticPair {
  StereoPair pair;
  DisparityMap gt;
  std::vector<double> exact;  ///< real-valued disparity per left pixel
};

/// Textured plane whose left-view disparity is u(x, y) = a*x + b*y + c.
/// The right view samples the same continuous texture at x - u(x, y).
inline SyntheticPair planar_pair(int w, int h, double a, double b, double c, int d_max,
                                 std::uint64_t seed) {
  detail::require(a < 1.0, "planar_pair: horizontal slope must be < 1");
  const ValueNoise tex(seed);
  GrayImage left(w, h);
  GrayImage right(w, h);
  DisparityMap gt(w, h, d_max);
  std::vector<double> exact(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      left(x, y) = static_cast<std::uint8_t>(std::lround(tex(x, y)));
      // right pixel xr sees the surface point whose left column solves x - u(x) = xr
      const double src = (x + b * y + c) / (1.0 - a);
      right(x, y) = static_cast<std::uint8_t>(std::lround(tex(src, y)));
      const double u = a * x + b * y + c;
      exact[static_cast<std::size_t>(y) * w + x] = u;
      const int ui = static_cast<int>(std::lround(u));
      gt.set(x, y, ui, ui >= 0 && ui <= d_max && ui <= x);
    }
  }
  return {StereoPair(std::move(left), std::move(right)), std::move(gt), std::move(exact)};
}

/// Fronto-parallel box standing on the road, in camera metres.
struct BoxObstacle {
  double x_center = 0.0;  ///< lateral position of the box centre
  double distance = 10.0;
  double width = 0.6;
  double height = 0.6;
  std::uint64_t seed = 7;
};

/// Flat road at `camera_height` below the camera, a background wall and
/// optional box obstacles, seen by a rectified pair whose right camera sits
/// `baseline` to the right.
struct SceneSpec {
  int width = 640;
  int height = 480;
  double focal_px = 8.0 / 0.006;
  double baseline = 0.12;
  double camera_height = 1.5;
  double wall_distance = 80.0;
  int d_max = 32;
  std::uint64_t seed = 1;
  std::vector<BoxObstacle> obstacles;

  StereoGeometry geometry() const {
    return StereoGeometry::centred(width, height, focal_px, baseline);
  }
};

struct Scene {
  StereoPair pair;
  DisparityMap gt;
  std::vector<double> exact;   ///< real-valued left disparity
  std::vector<RoiBox> boxes;   ///< left-image box of each obstacle, same order as the spec
};

namespace detail {

/// Surface hit by a camera ray: 0 = wall, 1 = road, 2 + k = obstacle k.
struct Hit {
  int surface = 0;
  double z = 0.0;
};

inline Hit cast_ray(const SceneSpec& s, double origin_x, double dx, double dy) {
  Hit hit{0, s.wall_distance};
  if (dy > 0.0) {
    const double z = s.focal_px * s.camera_height / dy;
    if (z < hit.z) hit = {1, z};
  }
  for (std::size_t k = 0; k < s.obstacles.size(); ++k) {
    const BoxObstacle& o = s.obstacles[k];
    const double z = o.distance;
    if (z >= hit.z) continue;
    const double X = origin_x + dx * z / s.focal_px;
    const double Y = dy * z / s.focal_px;
    if (X >= o.x_center - o.width / 2 && X < o.x_center + o.width / 2 &&
        Y >= s.camera_height - o.height && Y < s.camera_height)
      hit = {static_cast<int>(2 + k), z};
  }
  return hit;
}

/// Obstacle appearance: a flat panel with a dark frame and two bands over
/// fine noise, parametrised by the position inside the box.
inline double panel_texture(double s, double t, double noise, std::uint64_t seed) {
  const double base = 110.0 + static_cast<double>(seed % 7) * 12.0;
  double v = base;
  const double edge = std::min(std::min(s, 1.0 - s), std::min(t, 1.0 - t));
  if (edge < 0.1) v = base * 0.35;
  else if (std::abs(t - 0.35) < 0.06 || std::abs(t - 0.65) < 0.06) v = base * 1.45;
  return std::clamp(v + 0.45 * (noise - 128.0), 0.0, 255.0);
}

}  // namespace detail

namespace detail {

/// Per-pixel shading of a scene in both views.
class SceneRenderer {
 public:
  explicit SceneRenderer(const SceneSpec& spec) : spec_(spec), g_(spec.geometry()) {
    tex_.emplace_back(spec.seed * 3 + 1);
    tex_.emplace_back(spec.seed * 3 + 2);
    for (const BoxObstacle& o : spec.obstacles) tex_.emplace_back(spec.seed * 131 + o.seed);
  }

  /// Left-view value and real disparity at (x, y).
  std::pair<std::uint8_t, double> left(int x, int y) const {
    const Hit h = cast_ray(spec_, 0.0, x - g_.cx, y - g_.cy);
    return {static_cast<std::uint8_t>(std::lround(shade(h.surface, x, y))),
            spec_.focal_px * spec_.baseline / h.z};
  }

  std::uint8_t right(int x, int y) const {
    const Hit h = cast_ray(spec_, spec_.baseline, x - g_.cx, y - g_.cy);
    const double xl = x + spec_.focal_px * spec_.baseline / h.z;  // left projection of the seen point
    return static_cast<std::uint8_t>(std::lround(shade(h.surface, xl, y)));
  }

  /// Left view restricted to a rectangle.
  GrayImage left_region(int x0, int y0, int w, int h) const {
    GrayImage out(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(x, y) = left(x0 + x, y0 + y).first;
    return out;
  }

 private:
  // texture value of surface `surf` at left-image position (xl, yl)
  double shade(int surf, double xl, double yl) const {
    const double n = tex_[surf](xl, yl);
    if (surf < 2) return n;
    const BoxObstacle& o = spec_.obstacles[surf - 2];
    const double s = (xl - g_.cx) * o.distance / spec_.focal_px;
    const double t = (yl - g_.cy) * o.distance / spec_.focal_px;
    return panel_texture((s - (o.x_center - o.width / 2)) / o.width,
                         (t - (spec_.camera_height - o.height)) / o.height, n, o.seed);
  }

  const SceneSpec& spec_;
  StereoGeometry g_;
  std::vector<ValueNoise> tex_;
};

}  // namespace detail

/// Left-image box of an obstacle.
inline RoiBox obstacle_box(const SceneSpec& spec, const BoxObstacle& o) {
  const StereoGeometry g = spec.geometry();
  const double x0 = g.cx + spec.focal_px * (o.x_center - o.width / 2) / o.distance;
  const double x1 = g.cx + spec.focal_px * (o.x_center + o.width / 2) / o.distance;
  const double y0 = g.cy + spec.focal_px * (spec.camera_height - o.height) / o.distance;
  const double y1 = g.cy + spec.focal_px * spec.camera_height / o.distance;
  // clipped to the image; an obstacle out of view gets an empty box
  const auto px = [](double v, int hi) { return std::clamp(static_cast<int>(std::ceil(v - 1e-9)), 0, hi); };
  RoiBox b;
  b.x = px(x0, spec.width);
  b.y = px(y0, spec.height);
  b.w = px(x1, spec.width) - b.x;
  b.h = px(y1, spec.height) - b.y;
  b.mean_disparity = spec.focal_px * spec.baseline / o.distance;
  b.distance = o.distance;
  b.area = b.w * b.h;
  return b;
}

/// Renders both views by ray casting. Every surface carries a texture
/// defined on left-image coordinates, so the right view samples it at the
/// left projection of the point it sees; disparities follow u = f*B/Z.
inline Scene generate_synthetic_scene(const SceneSpec& spec) {
  detail::require(spec.width >= 8 && spec.height >= 8, "generate_synthetic_scene: image too small");
  detail::require(spec.focal_px > 0 && spec.baseline > 0 && spec.camera_height > 0 &&
                      spec.wall_distance > 0,
                  "generate_synthetic_scene: geometry must be positive");
  const StereoGeometry g = spec.geometry();
  const double fB = spec.focal_px * spec.baseline;
  const double bottom = spec.height - 1 - g.cy;
  const double max_u = std::max(bottom * spec.baseline / spec.camera_height, fB / spec.wall_distance);
  detail::require(fB / spec.wall_distance >= 1.0, "generate_synthetic_scene: wall disparity below 1");
  detail::require(max_u <= spec.d_max, "generate_synthetic_scene: road disparity exceeds d_max");
  for (const BoxObstacle& o : spec.obstacles)
    detail::require(o.distance > 0 && fB / o.distance <= spec.d_max && o.width > 0 && o.height > 0,
                    "generate_synthetic_scene: obstacle outside disparity range");

  Scene scene;
  for (const BoxObstacle& o : spec.obstacles) scene.boxes.push_back(obstacle_box(spec, o));

  const detail::SceneRenderer r(spec);
  GrayImage left(spec.width, spec.height), right(spec.width, spec.height);
  scene.gt = DisparityMap(spec.width, spec.height, spec.d_max);
  scene.exact.assign(static_cast<std::size_t>(spec.width) * spec.height, 0.0);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const auto [v, u] = r.left(x, y);
      left(x, y) = v;
      scene.exact[static_cast<std::size_t>(y) * spec.width + x] = u;
      const int ui = static_cast<int>(std::lround(u));
      scene.gt.set(x, y, ui, ui <= x);
      right(x, y) = r.right(x, y);
    }
  }
  scene.pair = StereoPair(std::move(left), std::move(right));
  return scene;
}

}  // namespace mpv
