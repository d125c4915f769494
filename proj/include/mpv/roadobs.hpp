#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <vector>

#include "mpv/disparity.hpp"

namespace mpv {

/// Rectified stereo rig: focal length in pixels, baseline in metres and the
/// principal point. Image coordinates are Y-down, so the road lies at Y > 0.
struct StereoGeometry {
  double focal_px = 8.0 / 0.006;
  double baseline_m = 0.12;
  double cx = 0.0;
  double cy = 0.0;

  static StereoGeometry centred(int width, int height, double focal_px, double baseline_m) {
    return {focal_px, baseline_m, (width - 1) / 2.0, (height - 1) / 2.0};
  }
  double depth(double u) const { return focal_px * baseline_m / u; }
  double disparity(double z) const { return focal_px * baseline_m / z; }
};

/// Disparity histogram over rows (v-disparity) or columns (u-disparity).
/// at(i, j) counts valid pixels with disparity i on line j.
struct DisparityHistogram {
  int bins = 0;
  int lines = 0;
  std::vector<std::uint32_t> counts;

  DisparityHistogram() = default;
  DisparityHistogram(int b, int l)
      : bins(b), lines(l), counts(static_cast<std::size_t>(b) * l, 0) {}

  std::uint32_t at(int i, int j) const { return counts[static_cast<std::size_t>(j) * bins + i]; }
  std::uint32_t& at(int i, int j) { return counts[static_cast<std::size_t>(j) * bins + i]; }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

inline DisparityHistogram vdisparity(const DisparityMap& disp) {
  DisparityHistogram h(disp.d_max + 1, disp.height);
  for (int y = 0; y < disp.height; ++y)
    for (int x = 0; x < disp.width; ++x)
      if (disp.is_valid(x, y) && disp.at(x, y) >= 0 && disp.at(x, y) <= disp.d_max)
        ++h.at(disp.at(x, y), y);
  return h;
}

inline DisparityHistogram udisparity(const DisparityMap& disp) {
  DisparityHistogram h(disp.d_max + 1, disp.width);
  for (int y = 0; y < disp.height; ++y)
    for (int x = 0; x < disp.width; ++x)
      if (disp.is_valid(x, y) && disp.at(x, y) >= 0 && disp.at(x, y) <= disp.d_max)
        ++h.at(disp.at(x, y), x);
  return h;
}

/// Line i*cos(phi) + j*sin(phi) = d in (disparity, row) space.
struct RadonLine {
  int d = 0;
  double phi = 0.0;  ///< radians
  std::uint64_t score = 0;

  double distance(double i, double j) const {
    return std::abs(i * std::cos(phi) + j * std::sin(phi) - d);
  }
};

/// Discrete Radon transform of a histogram: each cell adds its count to the
/// nearest integer-d bin for every angle. Returns the strongest line; ties
/// prefer the larger angle, then the smaller d. Angle bins outside
/// [first_bin, last_bin] are skipped.
inline RadonLine radon_line(const DisparityHistogram& v, int phi_bins = 180, int first_bin = 0,
                            int last_bin = -1) {
  detail::require(phi_bins >= 1, "radon_line: phi_bins must be >= 1");
  if (last_bin < 0) last_bin = phi_bins - 1;
  detail::require(first_bin >= 0 && first_bin <= last_bin && last_bin < phi_bins,
                  "radon_line: bad angle range");
  if (v.total() == 0) throw DegenerateInput("radon_line: histogram is empty");
  const int reach = static_cast<int>(std::ceil(std::hypot(v.bins, v.lines))) + 1;
  const int span = 2 * reach + 1;
  std::vector<std::uint64_t> acc(span);
  RadonLine best{0, 0.0, 0};
  int best_a = -1;
  for (int a = first_bin; a <= last_bin; ++a) {
    const double phi = a * std::numbers::pi / phi_bins;
    const double cs = std::cos(phi), sn = std::sin(phi);
    std::fill(acc.begin(), acc.end(), 0);
    for (int j = 0; j < v.lines; ++j) {
      for (int i = 0; i < v.bins; ++i) {
        const auto c = v.at(i, j);
        if (c == 0) continue;
        const int bin = static_cast<int>(std::floor(i * cs + j * sn + 0.5));
        acc[bin + reach] += c;
      }
    }
    for (int k = 0; k < span; ++k) {
      if (acc[k] > best.score || (acc[k] == best.score && a > best_a)) {
        best = {k - reach, phi, acc[k]};
        best_a = a;
      }
    }
  }
  return best;
}

/// Road profile in v-disparity space: rows[k] is the image row of the road
/// at disparity first + k. Rows strictly increase with disparity.
struct RoadPath {
  int first = 0;
  std::vector<int> rows;
  std::uint64_t score = 0;

  int last() const { return first + static_cast<int>(rows.size()) - 1; }
  bool empty() const { return rows.empty(); }

  /// Road disparity at an image row: linear between path nodes, linear
  /// extrapolation with the end segments' slope outside them.
  std::optional<double> disparity_at_row(double y) const {
    if (rows.empty()) return std::nullopt;
    if (rows.size() == 1) return y == rows[0] ? std::optional<double>(first) : std::nullopt;
    std::size_t k = 0;
    if (y >= rows.back()) {
      k = rows.size() - 2;
    } else if (y > rows.front()) {
      while (k + 1 < rows.size() && rows[k + 1] <= y) ++k;
      if (k + 1 >= rows.size()) k = rows.size() - 2;
    }
    const double t = (y - rows[k]) / static_cast<double>(rows[k + 1] - rows[k]);
    return first + static_cast<double>(k) + t;
  }
};

/// Maximum-count path through v-disparity with row steps 0 < j - j' < eta
/// between consecutive disparities. A path may begin at any node. The end
/// node is the overall maximum (ties: larger disparity, then smaller row);
/// backtracking ties go to the smaller row. With `band`, only nodes within
/// `band_width` of that line are eligible.
inline RoadPath road_viterbi(const DisparityHistogram& v, int eta,
                             const RadonLine* band = nullptr, double band_width = 8.0) {
  detail::require(eta >= 1, "road_viterbi: eta must be >= 1");
  if (v.total() == 0) throw DegenerateInput("road_viterbi: histogram is empty");
  const int n = v.bins, h = v.lines;
  auto eligible = [&](int i, int j) { return !band || band->distance(i, j) <= band_width; };
  std::vector<std::int64_t> e(static_cast<std::size_t>(n) * h, 0);
  std::vector<int> from(static_cast<std::size_t>(n) * h, -1);
  auto idx = [h](int i, int j) { return static_cast<std::size_t>(i) * h + j; };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < h; ++j) {
      if (!eligible(i, j)) continue;
      std::int64_t best = 0;
      int arg = -1;
      if (i > 0) {
        for (int jp = std::max(0, j - eta + 1); jp < j; ++jp) {
          if (e[idx(i - 1, jp)] > best) {
            best = e[idx(i - 1, jp)];
            arg = jp;
          }
        }
      }
      e[idx(i, j)] = v.at(i, j) + best;
      from[idx(i, j)] = arg;
    }
  }
  int bi = -1, bj = -1;
  std::int64_t top = -1;
  for (int i = n - 1; i >= 0; --i)
    for (int j = 0; j < h; ++j)
      if (eligible(i, j) && e[idx(i, j)] > top) {
        top = e[idx(i, j)];
        bi = i;
        bj = j;
      }
  if (top <= 0) throw DegenerateInput("road_viterbi: no road support inside the search band");
  RoadPath path;
  path.score = static_cast<std::uint64_t>(top);
  std::vector<int> rev;
  int i = bi, j = bj;
  while (true) {
    rev.push_back(j);
    const int p = from[idx(i, j)];
    if (p < 0) break;
    --i;
    j = p;
  }
  path.first = i;
  path.rows.assign(rev.rbegin(), rev.rend());
  // drop zero-count nodes at the near end, kept only by the tie rule
  while (path.rows.size() > 1 && v.at(path.last(), path.rows.back()) == 0) path.rows.pop_back();
  while (path.rows.size() > 1 && v.at(path.first, path.rows.front()) == 0) {
    path.rows.erase(path.rows.begin());
    ++path.first;
  }
  return path;
}

/// a*X + b*Y + c*Z = d with unit normal, b >= 0.
struct Plane {
  double a = 0.0;
  double b = 1.0;
  double c = 0.0;
  double d = 0.0;

  double norm() const { return std::sqrt(a * a + b * b + c * c); }
};

/// Disparity-space samples (x, y, u) of road pixels.
struct PlaneSample {
  double x, y, u;
};

namespace detail {

/// Weighted least squares u = p x' + q y' + r, converted to a unit-normal plane.
inline Plane solve_plane(const std::vector<PlaneSample>& pts, const std::vector<double>& weights,
                         const StereoGeometry& g) {
  Eigen::MatrixXd A(pts.size(), 3);
  Eigen::VectorXd rhs(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double w = std::sqrt(weights[k]);
    A(k, 0) = w * (pts[k].x - g.cx);
    A(k, 1) = w * (pts[k].y - g.cy);
    A(k, 2) = w;
    rhs(k) = w * pts[k].u;
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < 3) throw DegenerateInput("fit_plane: samples are collinear");
  const Eigen::Vector3d sol = qr.solve(rhs);
  const Eigen::Vector3d n(sol(0), sol(1), sol(2) / g.focal_px);
  const double len = n.norm();
  if (!(len > 0.0)) throw DegenerateInput("fit_plane: zero disparity plane");
  Plane p{n(0) / len, n(1) / len, n(2) / len, g.baseline_m / len};
  if (p.b < 0.0) p = {-p.a, -p.b, -p.c, -p.d};
  return p;
}

}  // namespace detail

/// Least-squares road plane. A plane aX + bY + cZ = d maps to the affine
/// disparity u = (B/d)(a x' + b y' + c f) with x', y' relative to the
/// principal point, so the fit is linear in disparity space.
///
/// Integer disparities are a staircase whose rounding error correlates with
/// position and tilts a direct fit. When every sample is integral and there
/// are enough levels, the fit instead runs on the centroid of each
/// (level, 16-column strip) group, which lies on the plane when the level's
/// band is complete; the outermost levels, whose bands are cut off, are
/// dropped.
inline Plane fit_plane(const std::vector<PlaneSample>& samples, const StereoGeometry& g) {
  if (samples.size() < 3) throw DegenerateInput("fit_plane: need at least 3 samples");
  bool integral = true;
  int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
  for (const PlaneSample& s : samples) {
    integral = integral && s.u == std::floor(s.u);
    if (integral) {
      lo = std::min(lo, static_cast<int>(s.u));
      hi = std::max(hi, static_cast<int>(s.u));
    }
  }
  if (integral && hi - lo >= 4) {
    constexpr int kStrip = 16;
    std::map<std::pair<int, int>, std::array<double, 3>> groups;  // sum x, sum y, count
    for (const PlaneSample& s : samples) {
      const int level = static_cast<int>(s.u);
      if (level == lo || level == hi) continue;
      auto& acc = groups[{level, static_cast<int>(std::floor(s.x / kStrip))}];
      acc[0] += s.x;
      acc[1] += s.y;
      acc[2] += 1.0;
    }
    std::vector<PlaneSample> pts;
    std::vector<double> weights;
    for (const auto& [key, acc] : groups) {
      pts.push_back({acc[0] / acc[2], acc[1] / acc[2], static_cast<double>(key.first)});
      weights.push_back(acc[2]);
    }
    try {
      if (pts.size() >= 3) return detail::solve_plane(pts, weights, g);
    } catch (const DegenerateInput&) {
      // centroids of a constant-disparity surface are collinear; use pixels
    }
  }
  return detail::solve_plane(samples, std::vector<double>(samples.size(), 1.0), g);
}

/// Disparity the plane would produce at image position (x, y); not positive
/// where the ray never meets the plane.
inline double plane_disparity(double x, double y, const Plane& plane, const StereoGeometry& g) {
  return g.baseline_m *
         (plane.a * (x - g.cx) + plane.b * (y - g.cy) + plane.c * g.focal_px) / plane.d;
}

/// Height of the scene point seen at (x, y) with disparity u above the
/// plane, positive toward -Y (up).
inline double height_above_plane(double x, double y, double u, const Plane& plane,
                                 const StereoGeometry& g) {
  if (!(u > 0.0)) throw InvalidArgument("height_above_plane: disparity must be > 0");
  const double B = g.baseline_m;
  const double num = plane.d * u - (plane.a * (x - g.cx) * B + plane.b * (y - g.cy) * B +
                                     plane.c * g.focal_px * B);
  return num / (u * plane.norm());
}

/// True when (x, y) lies in the road region and the point rises strictly
/// between zero and `max_height` above the road.
inline bool classify_small_object(double x, double y, double u, const Plane& plane,
                                  const StereoGeometry& g, double max_height, bool in_road_region,
                                  double eps = 1e-9) {
  const double h = height_above_plane(x, y, u, plane, g);
  return in_road_region && h > eps && h < max_height;
}

struct RoadParams {
  int eta = 24;              ///< row-step bound of the road path
  bool radon_seed = true;    ///< restrict the path to a band around the Radon line
  double radon_band = 8.0;
  int phi_bins = 180;
  double small_height = 0.05;   ///< S_h, metres
  double min_run_fraction = 0.1;  ///< u-disparity obstacle column count, fraction of height
  double max_range = 40.0;        ///< metres; farther pixels are never obstacles
  double max_height = 3.0;        ///< metres above the road
  int min_area = 60;              ///< pixels per obstacle component
  double disparity_margin = 1.5;  ///< disparity excess over the road plane for obstacle pixels
  int min_disparity = 1;
};

/// Road estimate of one frame.
struct RoadModel {
  bool valid = false;
  RadonLine line;
  RoadPath path;
  Plane plane;
  StereoGeometry geometry;

  /// Road region G: disparity within 1 of the road profile at that row.
  bool in_region(int y, double u) const {
    const auto r = path.disparity_at_row(y);
    return valid && r && std::abs(u - *r) <= 1.0;
  }
};

inline RoadModel detect_road(const DisparityMap& disp, const StereoGeometry& g,
                             const RoadParams& params) {
  RoadModel road;
  road.geometry = g;
  const DisparityHistogram v = vdisparity(disp);
  if (v.total() == 0) return road;
  // a road profile descends the image as disparity grows: its normal lies
  // strictly between 90 and 180 degrees, which excludes far-field walls
  road.line = radon_line(v, params.phi_bins, params.phi_bins / 2 + 1, params.phi_bins - 2);
  try {
    road.path = road_viterbi(v, params.eta, params.radon_seed ? &road.line : nullptr,
                             params.radon_band);
  } catch (const DegenerateInput&) {
    return road;
  }
  if (road.path.rows.size() < 2) return road;
  road.valid = true;
  std::vector<PlaneSample> samples;
  for (int y = 0; y < disp.height; ++y) {
    for (int x = 0; x < disp.width; ++x) {
      if (!disp.is_valid(x, y) || disp.at(x, y) < params.min_disparity) continue;
      if (y < road.path.rows.front()) continue;
      if (road.in_region(y, disp.at(x, y))) samples.push_back({double(x), double(y), double(disp.at(x, y))});
    }
  }
  try {
    road.plane = fit_plane(samples, g);
  } catch (const DegenerateInput&) {
    road.valid = false;
  }
  return road;
}

/// Obstacle candidate box in image space.
struct RoiBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  double mean_disparity = 0.0;
  double distance = 0.0;
  int area = 0;

  bool contains(const RoiBox& o) const {
    return o.x >= x && o.y >= y && o.x + o.w <= x + w && o.y + o.h <= y + h;
  }
  bool operator==(const RoiBox&) const = default;
};

/// Groups obstacle pixels into boxes. A pixel is an obstacle candidate when
/// it is nearer than `max_range`, at most `max_height` above the road, and
/// either stands more than S_h above the road while exceeding the road
/// plane's disparity by `disparity_margin` (which absorbs matching error at
/// long range), or belongs to a u-disparity column run of at least
/// `min_run_fraction * height` pixels outside the road region. Candidates
/// join 4-connected components whose disparities differ by at most 1.
/// Columns left of d_max are skipped: the right view cannot see them.
inline std::vector<RoiBox> extract_obstacle_rois(const DisparityMap& disp, const RoadModel& road,
                                                 const DisparityHistogram& u_hist,
                                                 const RoadParams& params) {
  const int w = disp.width, h = disp.height;
  const StereoGeometry& g = road.geometry;
  const double min_u = std::max<double>(params.min_disparity, g.disparity(params.max_range));
  const auto min_run = static_cast<std::uint32_t>(std::ceil(params.min_run_fraction * h));
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = std::min(disp.d_max, w); x < w; ++x) {
      if (!disp.is_valid(x, y)) continue;
      const int u = disp.at(x, y);
      if (u < min_u) continue;
      bool hit = false;
      if (road.valid) {
        const double ht = height_above_plane(x, y, u, road.plane, g);
        if (ht > params.max_height) continue;
        hit = ht > params.small_height &&
              u - plane_disparity(x, y, road.plane, g) > params.disparity_margin;
        if (!hit && u_hist.at(u, x) >= min_run) hit = !road.in_region(y, u);
      } else {
        hit = u_hist.at(u, x) >= min_run;
      }
      mask[static_cast<std::size_t>(y) * w + x] = hit ? 1 : 0;
    }
  }
  std::vector<int> label(mask.size(), -1);
  std::vector<RoiBox> boxes;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < mask.size(); ++seed) {
    if (!mask[seed] || label[seed] >= 0) continue;
    const int id = static_cast<int>(boxes.size());
    int x0 = w, y0 = h, x1 = -1, y1 = -1, area = 0;
    double usum = 0.0;
    stack.assign(1, seed);
    label[seed] = id;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const int px = static_cast<int>(p % w), py = static_cast<int>(p / w);
      x0 = std::min(x0, px);
      x1 = std::max(x1, px);
      y0 = std::min(y0, py);
      y1 = std::max(y1, py);
      ++area;
      usum += disp.u[p];
      const int nb[4][2] = {{px - 1, py}, {px + 1, py}, {px, py - 1}, {px, py + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[1] < 0 || q[0] >= w || q[1] >= h) continue;
        const std::size_t k = static_cast<std::size_t>(q[1]) * w + q[0];
        if (!mask[k] || label[k] >= 0 || std::abs(disp.u[k] - disp.u[p]) > 1) continue;
        label[k] = id;
        stack.push_back(k);
      }
    }
    RoiBox box{x0, y0, x1 - x0 + 1, y1 - y0 + 1, usum / area, 0.0, area};
    box.distance = g.depth(box.mean_disparity);
    boxes.push_back(box);
  }
  std::vector<RoiBox> out;
  for (const RoiBox& b : boxes)
    if (b.area >= params.min_area) out.push_back(b);
  return out;
}

}  // namespace mpv
