#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpv/cost.hpp"
#include "mpv/disparity.hpp"
#include "mpv/image.hpp"

namespace mpv {

/// Total-variation transition penalty: lambda * exp(-g) * |u - v|.
struct PenaltyParams {
  double lambda = 12.0;
  /// multiplier on small-to-large transitions of the right-to-left sweep
  double occlusion_asymmetry = 2.0;
  /// g = gradient_scale * |G| inside exp(-g)
  double gradient_scale = 0.05;
  /// weight of the previous layer's merged energy in the next layer
  double carry = 1.0;

  void validate() const {
    detail::require(std::isfinite(lambda) && lambda >= 0.0, "PenaltyParams: lambda must be >= 0");
    detail::require(occlusion_asymmetry >= 1.0, "PenaltyParams: occlusion_asymmetry must be >= 1");
    detail::require(gradient_scale >= 0.0, "PenaltyParams: gradient_scale must be >= 0");
    detail::require(carry >= 0.0, "PenaltyParams: carry must be >= 0");
  }
};

inline double tv_penalty(int u, int v, double g, const PenaltyParams& params) {
  if (u == v) return 0.0;
  return params.lambda * std::exp(-g) * std::abs(u - v);
}

enum class PathDirection {
  LeftToRight,
  RightToLeft,
  TopToBottom,
  BottomToTop,
  DownRight,  // main diagonal, top-left to bottom-right
  UpLeft,
  DownLeft,  // anti-diagonal, top-right to bottom-left
  UpRight,
};

enum class PathPair { Horizontal, Vertical, Diagonal, AntiDiagonal };

/// Layer order of the hierarchical merge.
inline constexpr std::array<PathPair, 4> kLayerOrder{PathPair::Horizontal, PathPair::Vertical,
                                                     PathPair::Diagonal, PathPair::AntiDiagonal};

inline std::array<PathDirection, 2> directions_of(PathPair pair) {
  switch (pair) {
    case PathPair::Horizontal: return {PathDirection::LeftToRight, PathDirection::RightToLeft};
    case PathPair::Vertical: return {PathDirection::TopToBottom, PathDirection::BottomToTop};
    case PathPair::Diagonal: return {PathDirection::DownRight, PathDirection::UpLeft};
    case PathPair::AntiDiagonal: return {PathDirection::DownLeft, PathDirection::UpRight};
  }
  return {PathDirection::LeftToRight, PathDirection::RightToLeft};
}

inline PathPair pair_of(PathDirection dir) {
  switch (dir) {
    case PathDirection::LeftToRight:
    case PathDirection::RightToLeft: return PathPair::Horizontal;
    case PathDirection::TopToBottom:
    case PathDirection::BottomToTop: return PathPair::Vertical;
    case PathDirection::DownRight:
    case PathDirection::UpLeft: return PathPair::Diagonal;
    default: return PathPair::AntiDiagonal;
  }
}

inline const char* to_string(PathPair pair) {
  switch (pair) {
    case PathPair::Horizontal: return "horizontal";
    case PathPair::Vertical: return "vertical";
    case PathPair::Diagonal: return "diagonal";
    case PathPair::AntiDiagonal: return "anti-diagonal";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Single-path sweeps

/// Node costs (and an optional additive prior) along one path.
struct SweepInput {
  std::span<const double> costs;      ///< length * m, row per path position
  int m = 0;                          ///< disparities 0..m-1
  std::span<const double> prior;      ///< empty or length * m
  std::span<const double> gradients;  ///< empty or length; g[p] weights the step into p
  bool asymmetric_up = false;         ///< multiply penalty of u > v steps by the asymmetry

  int length() const { return m > 0 ? static_cast<int>(costs.size()) / m : 0; }
  double node(int p, int u) const {
    const std::size_t i = static_cast<std::size_t>(p) * m + u;
    return costs[i] + (prior.empty() ? 0.0 : prior[i]);
  }
  double g(int p) const { return gradients.empty() ? 0.0 : gradients[p]; }
};

/// Accumulated energy e(p, u) for one sweep direction.
struct PathTrellis {
  int length = 0;
  int m = 0;
  std::vector<double> energy;

  double at(int p, int u) const { return energy[static_cast<std::size_t>(p) * m + u]; }
};

namespace detail {

inline void check_sweep(const SweepInput& in) {
  if (in.m <= 0 || in.costs.empty()) throw InvalidArgument("viterbi sweep: empty path");
  if (in.costs.size() % static_cast<std::size_t>(in.m) != 0)
    throw InvalidArgument("viterbi sweep: cost length is not a multiple of m");
  if (!in.prior.empty() && in.prior.size() != in.costs.size())
    throw InvalidArgument("viterbi sweep: prior size mismatch");
  if (!in.gradients.empty() && in.gradients.size() != static_cast<std::size_t>(in.length()))
    throw InvalidArgument("viterbi sweep: gradient count mismatch");
}

/// Cost of moving from disparity v (previous node) to u (current node).
inline double step_penalty(int u, int v, double g, bool asymmetric_up,
                           const PenaltyParams& params) {
  double pen = tv_penalty(u, v, g, params);
  if (asymmetric_up && u > v) pen *= params.occlusion_asymmetry;
  return pen;
}

}  // namespace detail

/// Reference recurrence: e(p,u) = min_v { e(p-1,v) + pen(u,v) } + node(p,u),
/// O(m^2) per path position.
inline PathTrellis viterbi_sweep_direct(const SweepInput& in, const PenaltyParams& params) {
  detail::check_sweep(in);
  const int len = in.length();
  const int m = in.m;
  PathTrellis t{len, m, std::vector<double>(static_cast<std::size_t>(len) * m)};
  for (int u = 0; u < m; ++u) t.energy[u] = in.node(0, u);
  for (int p = 1; p < len; ++p) {
    for (int u = 0; u < m; ++u) {
      double best = std::numeric_limits<double>::infinity();
      for (int v = 0; v < m; ++v) {
        best = std::min(best, t.at(p - 1, v) +
                                  detail::step_penalty(u, v, in.g(p), in.asymmetric_up, params));
      }
      t.energy[static_cast<std::size_t>(p) * m + u] = best + in.node(p, u);
    }
  }
  return t;
}

namespace detail {

/// In-place lower envelope for a linear penalty: afterwards
/// f[u] = min_v f[v] + (u > v ? up : down) * |u - v|. One ascending and one
/// descending pass; returns the number of compare/update operations.
template <typename T>
std::size_t lower_envelope(std::span<T> f, T up, T down) {
  const std::size_t n = f.size();
  for (std::size_t i = 1; i < n; ++i) f[i] = std::min(f[i], f[i - 1] + up);
  for (std::size_t i = n - 1; i-- > 0;) f[i] = std::min(f[i], f[i + 1] + down);
  return n > 0 ? 2 * (n - 1) : 0;
}

}  // namespace detail

/// Same energies as viterbi_sweep_direct, computed with the two-pass lower
/// envelope in 2(m - 1) operations per path position. `ops`, when given,
/// receives the number of envelope operations performed.
inline PathTrellis viterbi_sweep_fast(const SweepInput& in, const PenaltyParams& params,
                                      std::size_t* ops = nullptr) {
  detail::check_sweep(in);
  const int len = in.length();
  const int m = in.m;
  PathTrellis t{len, m, std::vector<double>(static_cast<std::size_t>(len) * m)};
  for (int u = 0; u < m; ++u) t.energy[u] = in.node(0, u);
  std::vector<double> env(m);
  std::size_t count = 0;
  for (int p = 1; p < len; ++p) {
    const double slope = params.lambda * std::exp(-in.g(p));
    const double up = in.asymmetric_up ? slope * params.occlusion_asymmetry : slope;
    std::copy_n(t.energy.begin() + static_cast<std::ptrdiff_t>(p - 1) * m, m, env.begin());
    count += detail::lower_envelope<double>(env, up, slope);
    for (int u = 0; u < m; ++u) t.energy[static_cast<std::size_t>(p) * m + u] = env[u] + in.node(p, u);
  }
  if (ops) *ops = count;
  return t;
}

/// Energy of a disparity sequence restricted to one path: node terms plus
/// the transition penalties between consecutive positions.
inline double path_energy(const SweepInput& in, std::span<const int> seq,
                          const PenaltyParams& params) {
  detail::check_sweep(in);
  detail::require(seq.size() == static_cast<std::size_t>(in.length()),
                  "path_energy: sequence length mismatch");
  double e = 0.0;
  for (int p = 0; p < in.length(); ++p) {
    e += in.node(p, seq[p]);
    if (p > 0) e += detail::step_penalty(seq[p], seq[p - 1], in.g(p), in.asymmetric_up, params);
  }
  return e;
}

/// Minimum-energy disparity sequence of one path, recovered by backtracking a
/// forward trellis. Ties resolve toward the smaller disparity.
inline std::vector<int> viterbi_backtrack(const SweepInput& in, const PathTrellis& t,
                                          const PenaltyParams& params) {
  const int len = t.length;
  std::vector<int> seq(len, 0);
  int best = 0;
  for (int u = 1; u < t.m; ++u)
    if (t.at(len - 1, u) < t.at(len - 1, best)) best = u;
  seq[len - 1] = best;
  for (int p = len - 1; p > 0; --p) {
    int arg = 0;
    double val = std::numeric_limits<double>::infinity();
    for (int v = 0; v < t.m; ++v) {
      const double c =
          t.at(p - 1, v) + detail::step_penalty(seq[p], v, in.g(p), in.asymmetric_up, params);
      if (c < val) {
        val = c;
        arg = v;
      }
    }
    seq[p - 1] = arg;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Image-wide trellis

/// Per-pixel energies over a per-pixel disparity scope [lo, lo + nodes).
/// With lo == 0 and nodes == d_max + 1 this is the full trellis layer.
struct EnergyVolume {
  int width = 0;
  int height = 0;
  int nodes = 0;
  std::vector<int> lo;
  std::vector<float> values;

  EnergyVolume() = default;
  EnergyVolume(int w, int h, int n, float fill = 0.0f)
      : width(w),
        height(h),
        nodes(n),
        lo(static_cast<std::size_t>(w) * h, 0),
        values(static_cast<std::size_t>(w) * h * n, fill) {}

  static EnergyVolume full(int w, int h, int d_max, float fill = 0.0f) {
    return EnergyVolume(w, h, d_max + 1, fill);
  }

  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  std::span<float> at(std::size_t pixel) {
    return std::span<float>(values).subspan(pixel * nodes, nodes);
  }
  std::span<const float> at(std::size_t pixel) const {
    return std::span<const float>(values).subspan(pixel * nodes, nodes);
  }
  bool same_shape(const EnergyVolume& o) const {
    return width == o.width && height == o.height && nodes == o.nodes && lo == o.lo;
  }
};

/// Combines the two sweeps of one direction pair: per-node minimum for the
/// horizontal pair, per-node mean for the others.
inline EnergyVolume merge_bidirectional(const EnergyVolume& forward, const EnergyVolume& backward,
                                        PathPair pair) {
  if (!forward.same_shape(backward))
    throw InvalidArgument("merge_bidirectional: layers differ in shape");
  EnergyVolume out = forward;
  if (pair == PathPair::Horizontal) {
    for (std::size_t i = 0; i < out.values.size(); ++i)
      out.values[i] = std::min(forward.values[i], backward.values[i]);
  } else {
    for (std::size_t i = 0; i < out.values.size(); ++i)
      out.values[i] = 0.5f * (forward.values[i] + backward.values[i]);
  }
  return out;
}

/// Work accounting for one optimisation.
struct MpvCounters {
  std::atomic<std::uint64_t> envelope_ops{0};
  std::atomic<std::uint64_t> virtual_slots{0};
  std::atomic<std::uint64_t> steps{0};
};

/// Pixel index sequences of every path of one direction.
inline std::vector<std::vector<std::size_t>> enumerate_paths(int w, int h, PathDirection dir) {
  std::vector<std::vector<std::size_t>> paths;
  auto idx = [w](int x, int y) { return static_cast<std::size_t>(y) * w + x; };
  auto trace = [&](int x, int y, int dx, int dy) {
    std::vector<std::size_t> p;
    while (x >= 0 && y >= 0 && x < w && y < h) {
      p.push_back(idx(x, y));
      x += dx;
      y += dy;
    }
    paths.push_back(std::move(p));
  };
  switch (dir) {
    case PathDirection::LeftToRight:
      for (int y = 0; y < h; ++y) trace(0, y, 1, 0);
      break;
    case PathDirection::RightToLeft:
      for (int y = 0; y < h; ++y) trace(w - 1, y, -1, 0);
      break;
    case PathDirection::TopToBottom:
      for (int x = 0; x < w; ++x) trace(x, 0, 0, 1);
      break;
    case PathDirection::BottomToTop:
      for (int x = 0; x < w; ++x) trace(x, h - 1, 0, -1);
      break;
    case PathDirection::DownRight:
      for (int x = 0; x < w; ++x) trace(x, 0, 1, 1);
      for (int y = 1; y < h; ++y) trace(0, y, 1, 1);
      break;
    case PathDirection::UpLeft:
      for (int x = 0; x < w; ++x) trace(x, h - 1, -1, -1);
      for (int y = 0; y < h - 1; ++y) trace(w - 1, y, -1, -1);
      break;
    case PathDirection::DownLeft:
      for (int x = 0; x < w; ++x) trace(x, 0, -1, 1);
      for (int y = 1; y < h; ++y) trace(w - 1, y, -1, 1);
      break;
    case PathDirection::UpRight:
      for (int x = 0; x < w; ++x) trace(x, h - 1, 1, -1);
      for (int y = 0; y < h - 1; ++y) trace(0, y, 1, -1);
      break;
  }
  return paths;
}

namespace detail {

/// One sweep along `path` over scoped node costs. Each pixel's trellis spans
/// the hull of its own scope and its predecessor's; slots outside the pixel's
/// own scope are virtual nodes with node cost `virtual_cost`. Energies are
/// shifted by the predecessor minimum at every step, which leaves every
/// decision unchanged while keeping magnitudes bounded.
inline void sweep_scoped_path(std::span<const std::size_t> path, const EnergyVolume& costs,
                              const EnergyVolume* prior, const GradientMap& grad,
                              const PenaltyParams& params, bool asymmetric_up, float virtual_cost,
                              EnergyVolume& out, std::vector<double>& prev,
                              std::vector<double>& cur, std::vector<double>& env,
                              std::uint64_t& ops, std::uint64_t& virtual_slots) {
  const int n = costs.nodes;
  auto node_cost = [&](std::size_t pix, int u) -> double {
    const int lo = costs.lo[pix];
    if (u < lo || u >= lo + n) return virtual_cost;
    const std::size_t k = pix * n + (u - lo);
    double c = costs.values[k];
    if (prior) c += params.carry * prior->values[k];
    return c;
  };
  int prev_a = 0;
  int prev_b = -1;
  int prev_lo = 0;
  for (std::size_t k = 0; k < path.size(); ++k) {
    const std::size_t pix = path[k];
    const int lo = costs.lo[pix];
    const int hi = lo + n - 1;
    int a = lo;
    int b = hi;
    if (k == 0) {
      cur.assign(n, 0.0);
      for (int u = lo; u <= hi; ++u) cur[u - a] = node_cost(pix, u);
    } else {
      const int ha = std::min(prev_a, lo);
      const int hb = std::max(prev_b, hi);
      env.assign(hb - ha + 1, std::numeric_limits<double>::infinity());
      double floor = std::numeric_limits<double>::infinity();
      for (int v = prev_a; v <= prev_b; ++v) floor = std::min(floor, prev[v - prev_a]);
      for (int v = prev_a; v <= prev_b; ++v) env[v - ha] = prev[v - prev_a] - floor;
      const double g = params.gradient_scale * grad.magnitude[pix];
      const double slope = params.lambda * std::exp(-g);
      const double up = asymmetric_up ? slope * params.occlusion_asymmetry : slope;
      ops += lower_envelope<double>(env, up, slope);
      a = std::min(prev_lo, lo);
      b = std::max(prev_lo + n - 1, hi);
      cur.assign(b - a + 1, 0.0);
      for (int u = a; u <= b; ++u) cur[u - a] = env[u - ha] + node_cost(pix, u);
      virtual_slots += static_cast<std::uint64_t>(b - a + 1 - n);
    }
    auto dst = out.at(pix);
    for (int u = lo; u <= hi; ++u) dst[u - lo] = static_cast<float>(cur[u - a]);
    std::swap(prev, cur);
    prev_a = a;
    prev_b = b;
    prev_lo = lo;
  }
}

/// Subtracts each pixel's minimum energy from its nodes.
inline void normalize_per_pixel(EnergyVolume& vol) {
  for (std::size_t p = 0; p < vol.pixels(); ++p) {
    auto e = vol.at(p);
    const float lo = *std::min_element(e.begin(), e.end());
    for (auto& v : e) v -= lo;
  }
}

}  // namespace detail

/// All paths of one direction over scoped node costs.
inline EnergyVolume sweep_direction(const EnergyVolume& costs, const EnergyVolume* prior,
                                    const GradientMap& grad, const PenaltyParams& params,
                                    PathDirection dir, float virtual_cost, int threads,
                                    MpvCounters* counters = nullptr) {
  EnergyVolume out(costs.width, costs.height, costs.nodes);
  out.lo = costs.lo;
  const auto paths = enumerate_paths(costs.width, costs.height, dir);
  const bool asym = dir == PathDirection::RightToLeft;
  parallel_for(paths.size(), threads, [&](std::size_t i) {
    std::vector<double> prev, cur, env;
    std::uint64_t ops = 0;
    std::uint64_t virt = 0;
    detail::sweep_scoped_path(paths[i], costs, prior, grad, params, asym, virtual_cost, out, prev,
                              cur, env, ops, virt);
    if (counters) {
      counters->envelope_ops += ops;
      counters->virtual_slots += virt;
      counters->steps += paths[i].size();
    }
  });
  return out;
}

/// Hierarchical multi-path optimisation: horizontal, vertical, diagonal and
/// anti-diagonal layers in that order. Each layer runs both sweeps, shifts
/// each sweep's per-pixel minimum to zero, merges them, and the merged
/// energies seed the node terms of the next layer.
inline EnergyVolume mpv_optimize(const EnergyVolume& costs, const GradientMap& grad,
                                 const PenaltyParams& params, float virtual_cost, int threads = 1,
                                 MpvCounters* counters = nullptr) {
  params.validate();
  detail::require(grad.width == costs.width && grad.height == costs.height,
                  "mpv_optimize: gradient map does not match the cost volume");
  std::optional<EnergyVolume> merged;
  for (PathPair pair : kLayerOrder) {
    const auto dirs = directions_of(pair);
    const EnergyVolume* prior = merged ? &*merged : nullptr;
    EnergyVolume fwd =
        sweep_direction(costs, prior, grad, params, dirs[0], virtual_cost, threads, counters);
    EnergyVolume bwd =
        sweep_direction(costs, prior, grad, params, dirs[1], virtual_cost, threads, counters);
    detail::normalize_per_pixel(fwd);
    detail::normalize_per_pixel(bwd);
    merged = merge_bidirectional(fwd, bwd, pair);
  }
  return std::move(*merged);
}

/// Per-pixel argmin over each scope, ties toward the smaller disparity. A
/// pixel whose best disparity points left of the right image is invalid.
inline DisparityMap winner_disparity(const EnergyVolume& energy, int d_max) {
  DisparityMap map(energy.width, energy.height, d_max);
  for (int y = 0; y < energy.height; ++y) {
    for (int x = 0; x < energy.width; ++x) {
      const std::size_t p = map.index(x, y);
      const auto e = energy.at(p);
      int best = 0;
      for (int j = 1; j < energy.nodes; ++j)
        if (e[j] < e[best]) best = j;
      const int u = energy.lo[p] + best;
      map.set(x, y, u, u <= x);
    }
  }
  return map;
}

struct MpvParams {
  CostParams cost;
  PenaltyParams penalty;
  int threads = 1;
};

/// Single-scale multi-path Viterbi matching over the full range [0, d_max].
inline DisparityMap run_mpv(const StereoPair& pair, int d_max, const MpvParams& params,
                            MpvCounters* counters = nullptr) {
  detail::require(d_max >= 1, "run_mpv: d_max must be >= 1");
  params.cost.validate();
  const PatchStats ls(pair.left, params.cost);
  const PatchStats rs(pair.right, params.cost);
  EnergyVolume costs = EnergyVolume::full(pair.width(), pair.height(), d_max);
  costs.values = dense_cost_volume(ls, rs, d_max, params.cost, params.threads);
  const GradientMap grad = gradient_magnitude(pair.left);
  const EnergyVolume energy = mpv_optimize(costs, grad, params.penalty,
                                           static_cast<float>(params.cost.range), params.threads,
                                           counters);
  return winner_disparity(energy, d_max);
}

}  // namespace mpv
