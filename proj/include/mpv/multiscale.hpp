#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <map>
#include <span>
#include <vector>

#include "mpv/viterbi.hpp"

namespace mpv {

/// Three-level image pyramid, coarsest first: 1/4, 1/2 and full resolution.
struct Pyramid {
  std::array<StereoPair, 3> levels;

  const StereoPair& operator[](std::size_t k) const { return levels[k]; }
};

inline Pyramid build_pyramid(const StereoPair& pair) {
  detail::require(pair.width() >= 8 && pair.height() >= 8,
                  "build_pyramid: input must be at least 8x8");
  Pyramid p;
  p.levels[2] = pair;
  p.levels[1] = StereoPair(downsample_half(pair.left), downsample_half(pair.right));
  p.levels[0] = StereoPair(downsample_half(p.levels[1].left), downsample_half(p.levels[1].right));
  return p;
}

/// Inclusive disparity interval.
struct Scope {
  int lo = 0;
  int hi = 0;

  int size() const { return hi - lo + 1; }
  bool contains(int u) const { return u >= lo && u <= hi; }
  bool operator==(const Scope&) const = default;
};

/// `width` consecutive disparities around `init`, shifted to fit [0, d_layer].
inline Scope place_scope(int init, int width, int d_layer) {
  width = std::clamp(width, 1, d_layer + 1);
  const int lo = std::clamp(init - width / 2, 0, d_layer + 1 - width);
  return {lo, lo + width - 1};
}

/// Common trellis axis for a run of scopes: their hull. Slots of the hull
/// outside a pixel's own scope are virtual nodes.
inline Scope virtual_node_pad(std::span<const Scope> scopes) {
  detail::require(!scopes.empty(), "virtual_node_pad: no scopes");
  Scope hull = scopes.front();
  for (const Scope& s : scopes) {
    detail::require(s.lo <= s.hi, "virtual_node_pad: empty scope");
    hull.lo = std::min(hull.lo, s.lo);
    hull.hi = std::max(hull.hi, s.hi);
  }
  return hull;
}

/// Most frequent value; ties go to the smaller value.
inline int mode_of(std::span<const int> values) {
  detail::require(!values.empty(), "mode_of: empty block");
  std::map<int, int> counts;
  for (int v : values) ++counts[v];
  int best = counts.begin()->first;
  int best_count = 0;
  for (const auto& [v, c] : counts) {
    if (c > best_count) {
      best = v;
      best_count = c;
    }
  }
  return best;
}

/// Initial disparities and search scopes for a layer, one per block.
struct BlockInit {
  int width = 0;
  int height = 0;
  int block_size = 1;
  int blocks_x = 0;
  int blocks_y = 0;
  std::vector<int> init;
  std::vector<Scope> scope;

  std::size_t block_of(int x, int y) const {
    return static_cast<std::size_t>(y / block_size) * blocks_x + x / block_size;
  }
  int init_at(int x, int y) const { return init[block_of(x, y)]; }
  const Scope& scope_at(int x, int y) const { return scope[block_of(x, y)]; }
};

/// Seeds the next (twice as large) layer from `coarse`: each block of
/// `block_size` pixels takes twice the mode of the coarse pixels it covers.
inline BlockInit block_mode_init(const DisparityMap& coarse, int block_size, int next_width,
                                 int next_height, int scope_width, int d_next) {
  detail::require(block_size >= 1, "block_mode_init: block size must be >= 1");
  detail::require(next_width >= 1 && next_height >= 1, "block_mode_init: empty layer");
  BlockInit b;
  b.width = next_width;
  b.height = next_height;
  b.block_size = block_size;
  b.blocks_x = (next_width + block_size - 1) / block_size;
  b.blocks_y = (next_height + block_size - 1) / block_size;
  std::vector<int> vals;
  for (int by = 0; by < b.blocks_y; ++by) {
    for (int bx = 0; bx < b.blocks_x; ++bx) {
      const int x0 = bx * block_size / 2;
      const int y0 = by * block_size / 2;
      const int x1 = std::min(coarse.width, (std::min((bx + 1) * block_size, next_width) + 1) / 2);
      const int y1 = std::min(coarse.height, (std::min((by + 1) * block_size, next_height) + 1) / 2);
      vals.clear();
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          if (coarse.is_valid(x, y)) vals.push_back(coarse.at(x, y));
      if (vals.empty()) throw DegenerateInput("block_mode_init: block has no valid coarse pixels");
      const int init = std::min(2 * mode_of(vals), d_next);
      b.init.push_back(init);
      b.scope.push_back(place_scope(init, scope_width, d_next));
    }
  }
  return b;
}

inline BlockInit block_mode_init(const DisparityMap& coarse, int block_size, int scope_width) {
  return block_mode_init(coarse, block_size, 2 * coarse.width, 2 * coarse.height, scope_width,
                         2 * coarse.d_max);
}

/// Replaces invalid pixels by linear interpolation between the nearest valid
/// pixels of the same row; row ends copy the nearest valid value. Rows with
/// no valid pixel become zero. Every pixel is valid afterwards.
inline void fill_invalid_rows(DisparityMap& map) {
  for (int y = 0; y < map.height; ++y) {
    int prev = -1;
    for (int x = 0; x <= map.width; ++x) {
      if (x < map.width && !map.is_valid(x, y)) continue;
      for (int k = prev + 1; k < x; ++k) {
        int v = 0;
        if (prev >= 0 && x < map.width) {
          const double t = static_cast<double>(k - prev) / (x - prev);
          v = static_cast<int>(std::floor(map.at(prev, y) + t * (map.at(x, y) - map.at(prev, y)) + 0.5));
        } else if (prev >= 0) {
          v = map.at(prev, y);
        } else if (x < map.width) {
          v = map.at(x, y);
        }
        map.set(k, y, v, true);
      }
      prev = x;
    }
  }
}

/// Per-pixel initial disparities at twice the resolution of `half`: pixels at
/// even coordinates take 2 * D(x/2, y/2), odd columns interpolate along the
/// row and odd rows between the rows above and below.
inline std::vector<int> upsample_disparity(const DisparityMap& half, int width, int height) {
  std::vector<int> out(static_cast<std::size_t>(width) * height, 0);
  auto at = [&](int x, int y) -> int& { return out[static_cast<std::size_t>(y) * width + x]; };
  for (int y = 0; y < height; y += 2) {
    const int hy = std::min(y / 2, half.height - 1);
    for (int x = 0; x < width; ++x) {
      const int hx = std::min(x / 2, half.width - 1);
      if (x % 2 == 0 || hx + 1 >= half.width)
        at(x, y) = 2 * half.at(hx, hy);
      else
        at(x, y) = half.at(hx, hy) + half.at(hx + 1, hy);
    }
  }
  for (int y = 1; y < height; y += 2) {
    for (int x = 0; x < width; ++x)
      at(x, y) = y + 1 < height ? (at(x, y - 1) + at(x, y + 1)) / 2 : at(x, y - 1);
  }
  return out;
}

/// Node-evaluation accounting per pyramid layer. `nodes` counts real
/// (pixel, disparity) nodes whose cost was evaluated; `virtual_nodes` counts
/// the distinct padding slots each pixel carries for its neighbours.
struct EvalCounter {
  std::array<std::uint64_t, 3> nodes{};
  std::array<std::uint64_t, 3> virtual_nodes{};
  std::uint64_t envelope_ops = 0;

  void add_nodes(int layer, std::uint64_t n) {
    std::atomic_ref<std::uint64_t>(nodes[layer]).fetch_add(n, std::memory_order_relaxed);
  }
  void add_virtual(int layer, std::uint64_t n) {
    std::atomic_ref<std::uint64_t>(virtual_nodes[layer]).fetch_add(n, std::memory_order_relaxed);
  }
  std::uint64_t total() const { return nodes[0] + nodes[1] + nodes[2]; }
  std::uint64_t total_virtual() const {
    return virtual_nodes[0] + virtual_nodes[1] + virtual_nodes[2];
  }
  /// total / (m * n * d) for the full-resolution problem.
  double ratio(int width, int height, int d_max) const {
    return static_cast<double>(total()) / (static_cast<double>(width) * height * d_max);
  }
};

struct MultiscaleParams {
  MpvParams mpv;
  int block_size = 8;   ///< block edge at the middle layer
  int scope_width = 0;  ///< nodes per pixel at the refined layers; 0 means d_max / 4
};

struct MultiscaleResult {
  DisparityMap disparity;
  EvalCounter counter;
  std::array<DisparityMap, 3> layers;
};

namespace detail {

/// SSIM costs for each pixel's scope [lo, lo + nodes).
inline EnergyVolume scoped_costs(const PatchStats& ls, const PatchStats& rs,
                                 std::vector<int> lo, int nodes, const CostParams& params,
                                 int threads, EvalCounter& counter, int layer) {
  EnergyVolume vol(ls.width(), ls.height(), nodes);
  vol.lo = std::move(lo);
  const int w = ls.width();
  parallel_for(static_cast<std::size_t>(ls.height()), threads, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < w; ++x) {
      const std::size_t p = row * w + x;
      auto dst = vol.at(p);
      for (int j = 0; j < nodes; ++j)
        dst[j] = static_cast<float>(ssim_cost(ls, rs, x, y, vol.lo[p] + j, params));
    }
    counter.add_nodes(layer, static_cast<std::uint64_t>(w) * nodes);
  });
  return vol;
}

/// Padding each pixel needs so every path through it shares one axis with
/// its predecessor in all eight directions.
inline std::uint64_t count_virtual_nodes(const EnergyVolume& vol) {
  std::uint64_t total = 0;
  for (int y = 0; y < vol.height; ++y) {
    for (int x = 0; x < vol.width; ++x) {
      const int own = vol.lo[static_cast<std::size_t>(y) * vol.width + x];
      int lo = own;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= vol.width || ny >= vol.height) continue;
          lo = std::min(lo, vol.lo[static_cast<std::size_t>(ny) * vol.width + nx]);
        }
      }
      int hi = own;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= vol.width || ny >= vol.height) continue;
          hi = std::max(hi, vol.lo[static_cast<std::size_t>(ny) * vol.width + nx]);
        }
      }
      total += static_cast<std::uint64_t>(hi - lo);
    }
  }
  return total;
}

inline DisparityMap solve_layer(const StereoPair& level, const EnergyVolume& costs, int d_layer,
                                const MpvParams& params, EvalCounter& counter, int layer) {
  MpvCounters mc;
  const GradientMap grad = gradient_magnitude(level.left);
  const EnergyVolume energy = mpv_optimize(costs, grad, params.penalty,
                                           static_cast<float>(params.cost.range), params.threads,
                                           &mc);
  counter.envelope_ops += mc.envelope_ops.load();
  counter.add_virtual(layer, count_virtual_nodes(costs));
  DisparityMap map = winner_disparity(energy, d_layer);
  fill_invalid_rows(map);
  return map;
}

}  // namespace detail

/// Coarse-to-fine MPV: full-range matching at 1/4 resolution, then
/// block-mode seeded narrow scopes at 1/2 and per-pixel seeded scopes at full
/// resolution.
inline MultiscaleResult run_multiscale_mpv(const StereoPair& pair, int d_max,
                                           const MultiscaleParams& params) {
  detail::require(d_max >= 1, "run_multiscale_mpv: d_max must be >= 1");
  params.mpv.cost.validate();
  params.mpv.penalty.validate();
  const Pyramid pyr = build_pyramid(pair);
  const std::array<int, 3> d_layer{(d_max + 3) / 4, (d_max + 1) / 2, d_max};
  const int width = params.scope_width > 0 ? params.scope_width : std::max(1, d_max / 4);
  const CostParams& cp = params.mpv.cost;
  MultiscaleResult out;

  // layer 0: full range
  {
    const StereoPair& lv = pyr[0];
    const PatchStats ls(lv.left, cp), rs(lv.right, cp);
    EnergyVolume costs = EnergyVolume::full(lv.width(), lv.height(), d_layer[0]);
    costs.values = dense_cost_volume(ls, rs, d_layer[0], cp, params.mpv.threads);
    out.counter.add_nodes(0, costs.values.size());
    out.layers[0] = detail::solve_layer(lv, costs, d_layer[0], params.mpv, out.counter, 0);
  }

  // layer 1: block seeded
  {
    const StereoPair& lv = pyr[1];
    const BlockInit seeds = block_mode_init(out.layers[0], params.block_size, lv.width(),
                                            lv.height(), width, d_layer[1]);
    const int nodes = seeds.scope.front().size();
    std::vector<int> lo(static_cast<std::size_t>(lv.width()) * lv.height());
    for (int y = 0; y < lv.height(); ++y)
      for (int x = 0; x < lv.width(); ++x)
        lo[static_cast<std::size_t>(y) * lv.width() + x] = seeds.scope_at(x, y).lo;
    const PatchStats ls(lv.left, cp), rs(lv.right, cp);
    const EnergyVolume costs = detail::scoped_costs(ls, rs, std::move(lo), nodes, cp,
                                                    params.mpv.threads, out.counter, 1);
    out.layers[1] = detail::solve_layer(lv, costs, d_layer[1], params.mpv, out.counter, 1);
  }

  // layer 2: per-pixel seeded
  {
    const StereoPair& lv = pyr[2];
    const std::vector<int> init = upsample_disparity(out.layers[1], lv.width(), lv.height());
    std::vector<int> lo(init.size());
    int nodes = 0;
    for (std::size_t i = 0; i < init.size(); ++i) {
      const Scope s = place_scope(std::min(init[i], d_layer[2]), width, d_layer[2]);
      lo[i] = s.lo;
      nodes = s.size();
    }
    const PatchStats ls(lv.left, cp), rs(lv.right, cp);
    const EnergyVolume costs = detail::scoped_costs(ls, rs, std::move(lo), nodes, cp,
                                                    params.mpv.threads, out.counter, 2);
    out.layers[2] = detail::solve_layer(lv, costs, d_layer[2], params.mpv, out.counter, 2);
  }

  out.disparity = out.layers[2];
  return out;
}

}  // namespace mpv
