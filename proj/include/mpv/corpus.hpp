#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mpv/imgio.hpp"
#include "mpv/recog/lbp.hpp"
#include "mpv/synth.hpp"

namespace mpv {

/// Obstacle / background windows cut from rendered scenes.
struct CorpusSpec {
  int positives = 200;
  int negatives = 400;
  std::uint64_t seed = 1;
  int negative_min_side = 96;
  int negative_max_side = 160;
};

struct Corpus {
  std::vector<GrayImage> positives;
  std::vector<GrayImage> negatives;
};

namespace detail {

inline double uniform(std::mt19937_64& rng, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int a, int b) {
  return std::uniform_int_distribution<int>(a, b)(rng);
}

inline BoxObstacle random_obstacle(std::mt19937_64& rng, double z_lo, double z_hi) {
  BoxObstacle o;
  o.distance = uniform(rng, z_lo, z_hi);
  o.width = uniform(rng, 0.5, 0.75);
  o.height = o.width * uniform(rng, 0.9, 1.1);
  o.x_center = uniform(rng, -1.5, 1.5) * o.distance / 10.0;
  o.seed = rng() % 1000;
  return o;
}

inline double covered_fraction(const RoiBox& box, int x, int y, int side) {
  const int ix = std::max(0, std::min(box.x + box.w, x + side) - std::max(box.x, x));
  const int iy = std::max(0, std::min(box.y + box.h, y + side) - std::max(box.y, y));
  return static_cast<double>(ix) * iy / (static_cast<double>(box.w) * box.h);
}

}  // namespace detail

/// Positives are square crops around a box obstacle at 9-18 m with a little
/// scale and position jitter. Negatives, a quarter each: badly framed
/// obstacle crops, crops of obstacle-free scenes, crops showing under 40% of
/// an obstacle, and crops from inside a large close panel.
inline Corpus make_obstacle_corpus(const CorpusSpec& spec) {
  detail::require(spec.positives >= 0 && spec.negatives >= 0, "make_obstacle_corpus: negative count");
  detail::require(spec.negative_min_side >= kFeatureWindow &&
                      spec.negative_min_side <= spec.negative_max_side,
                  "make_obstacle_corpus: bad negative size range");
  std::mt19937_64 rng(spec.seed);
  Corpus c;
  SceneSpec base;
  base.d_max = 64;

  while (static_cast<int>(c.positives.size()) < spec.positives) {
    SceneSpec s = base;
    s.seed = rng() % 100000;
    s.obstacles = {detail::random_obstacle(rng, 9.0, 18.0)};
    const RoiBox b = obstacle_box(s, s.obstacles[0]);
    const int side = static_cast<int>(std::lround(std::max(b.w, b.h) * detail::uniform(rng, 1.0, 1.15)));
    const double cx = b.x + b.w / 2.0 + detail::uniform(rng, -0.05, 0.05) * side;
    const double cy = b.y + b.h / 2.0 + detail::uniform(rng, -0.05, 0.05) * side;
    const int x = static_cast<int>(std::lround(cx - side / 2.0));
    const int y = static_cast<int>(std::lround(cy - side / 2.0));
    if (x < 0 || y < 0 || x + side > s.width || y + side > s.height) continue;
    c.positives.push_back(detail::SceneRenderer(s).left_region(x, y, side, side));
  }

  while (static_cast<int>(c.negatives.size()) < spec.negatives) {
    SceneSpec s = base;
    s.seed = rng() % 100000;
    const int kind = static_cast<int>(c.negatives.size() % 4);
    const int side = detail::uniform_int(rng, spec.negative_min_side, spec.negative_max_side);
    int x = detail::uniform_int(rng, 0, s.width - side);
    int y = detail::uniform_int(rng, 0, s.height - side);
    if (kind == 0) {
      // near miss: the obstacle badly framed, too small or shifted off centre
      s.obstacles = {detail::random_obstacle(rng, 9.0, 18.0)};
      const RoiBox b = obstacle_box(s, s.obstacles[0]);
      const int bs = std::max(b.w, b.h);
      const bool larger = rng() % 2 == 0;
      const int nside = static_cast<int>(std::lround(bs * (larger ? detail::uniform(rng, 1.6, 2.4)
                                                                  : detail::uniform(rng, 0.9, 1.2))));
      const double shift = larger ? 0.1 : detail::uniform(rng, 0.3, 0.5);
      const double ang = detail::uniform(rng, 0.0, 6.283185307179586);
      const int nx = static_cast<int>(std::lround(b.x + b.w / 2.0 + shift * nside * std::cos(ang) - nside / 2.0));
      const int ny = static_cast<int>(std::lround(b.y + b.h / 2.0 + shift * nside * std::sin(ang) - nside / 2.0));
      if (nside < kFeatureWindow || nx < 0 || ny < 0 || nx + nside > s.width || ny + nside > s.height) continue;
      c.negatives.push_back(detail::SceneRenderer(s).left_region(nx, ny, nside, nside));
      continue;
    }
    if (kind == 2) {
      s.obstacles = {detail::random_obstacle(rng, 9.0, 18.0)};
      const RoiBox b = obstacle_box(s, s.obstacles[0]);
      bool found = false;
      for (int t = 0; t < 200 && !found; ++t) {
        x = detail::uniform_int(rng, std::max(0, b.x - side), std::min(s.width - side, b.x + b.w));
        y = detail::uniform_int(rng, std::max(0, b.y - side), std::min(s.height - side, b.y + b.h));
        const double f = detail::covered_fraction(b, x, y, side);
        found = f > 0.05 && f < 0.4;
      }
      if (!found) continue;
    } else if (kind == 3) {
      // tall wide panel close by, so a crop sees only its interior and edges
      BoxObstacle o;
      o.distance = detail::uniform(rng, 6.0, 8.0);
      o.width = detail::uniform(rng, 1.0, 1.6);
      o.height = detail::uniform(rng, 1.8, 2.6);
      o.x_center = detail::uniform(rng, -0.3, 0.3);
      o.seed = rng() % 1000;
      s.obstacles = {o};
      const RoiBox b = obstacle_box(s, s.obstacles[0]);
      const int bx0 = std::max(0, b.x), by0 = std::max(0, b.y);
      const int bx1 = std::min(s.width, b.x + b.w), by1 = std::min(s.height, b.y + b.h);
      if (bx1 - bx0 < side || by1 - by0 < side) continue;
      x = detail::uniform_int(rng, bx0, bx1 - side);
      y = detail::uniform_int(rng, by0, by1 - side);
    }
    c.negatives.push_back(detail::SceneRenderer(s).left_region(x, y, side, side));
  }
  return c;
}

/// Writes pos/NNNN.pgm and neg/NNNN.pgm under `dir`.
inline void write_corpus(const Corpus& c, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "pos");
  fs::create_directories(dir / "neg");
  auto name = [](std::size_t i) {
    std::string s = std::to_string(i);
    return std::string(4 - std::min<std::size_t>(4, s.size()), '0') + s + ".pgm";
  };
  for (std::size_t i = 0; i < c.positives.size(); ++i) save_image(c.positives[i], dir / "pos" / name(i));
  for (std::size_t i = 0; i < c.negatives.size(); ++i) save_image(c.negatives[i], dir / "neg" / name(i));
}

/// Every .pgm / .png in `dir`, in file-name order.
inline std::vector<GrayImage> load_image_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = detail::lower_extension(e.path());
    if (ext == ".pgm" || ext == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<GrayImage> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_image(f));
  return out;
}

}  // namespace mpv
