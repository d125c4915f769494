#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace mpv {

/// Deterministic multi-octave value noise defined on continuous coordinates,
/// so the same surface can be sampled at sub-pixel positions from either view.
class ValueNoise {
 public:
  explicit ValueNoise(std::uint64_t seed, double contrast = 1.0)
      : seed_(seed), contrast_(contrast) {}

  /// Intensity in [0, 255] at continuous position (x, y).
  double operator()(double x, double y) const {
    static constexpr std::array<double, 5> kPeriods{2.0, 4.0, 8.0, 16.0, 32.0};
    static constexpr std::array<double, 5> kAmplitudes{34.0, 30.0, 26.0, 20.0, 14.0};
    double v = 0.0;
    for (std::size_t o = 0; o < kPeriods.size(); ++o)
      v += kAmplitudes[o] * octave(x / kPeriods[o], y / kPeriods[o], o);
    return std::clamp(128.0 + contrast_ * v, 0.0, 255.0);
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

  double lattice(std::int64_t ix, std::int64_t iy, std::size_t octave) const {
    std::uint64_t h = seed_ * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(ix) * 0xBF58476D1CE4E5B9ULL;
    h ^= static_cast<std::uint64_t>(iy) * 0x94D049BB133111EBULL;
    h ^= static_cast<std::uint64_t>(octave + 1) * 0xD6E8FEB86659FD93ULL;
    h ^= h >> 31;
    h *= 0x7FB5D329728EA185ULL;
    h ^= h >> 27;
    h *= 0x81DADEF4BC2DD44DULL;
    h ^= h >> 33;
    return static_cast<double>(h >> 11) / static_cast<double>(1ULL << 53) * 2.0 - 1.0;
  }

  double octave(double x, double y, std::size_t o) const {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx);
    const auto iy = static_cast<std::int64_t>(fy);
    const double tx = smooth(x - fx);
    const double ty = smooth(y - fy);
    const double a = lattice(ix, iy, o);
    const double b = lattice(ix + 1, iy, o);
    const double c = lattice(ix, iy + 1, o);
    const double d = lattice(ix + 1, iy + 1, o);
    const double top = a + tx * (b - a);
    const double bottom = c + tx * (d - c);
    return top + ty * (bottom - top);
  }

  std::uint64_t seed_;
  double contrast_;
};

}  // namespace mpv
