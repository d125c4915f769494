#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mpv/image.hpp"

namespace mpv {

/// Parameters of the SSIM matching cost.
struct CostParams {
  int window = 7;  ///< patch side N, odd
  double k1 = 0.01;
  double k2 = 0.03;
  double range = kIntensityRange;  ///< L
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;

  double c1() const { return (k1 * range) * (k1 * range); }
  double c2() const { return (k2 * range) * (k2 * range); }
  double c3() const { return c2() / 2.0; }
  int radius() const { return window / 2; }

  void validate() const {
    detail::require(window >= 3 && window % 2 == 1, "CostParams: window must be odd and >= 3");
    detail::require(k1 > 0.0 && k1 < 0.2 && k2 > 0.0 && k2 < 0.2,
                    "CostParams: K1 and K2 must lie in (0, 0.2)");
    detail::require(range > 0.0, "CostParams: dynamic range must be positive");
    detail::require(alpha > 0.0 && beta > 0.0 && gamma > 0.0,
                    "CostParams: exponents must be positive");
  }
};

/// Raw window moments of an aligned patch pair. All sums are exact integers,
/// so variances and covariance are formed from exact numerators.
struct PatchMoments {
  std::int64_t n = 0;
  std::int64_t sum_a = 0;
  std::int64_t sum_b = 0;
  std::int64_t sum_aa = 0;
  std::int64_t sum_bb = 0;
  std::int64_t sum_ab = 0;

  double mean_a() const { return static_cast<double>(sum_a) / n; }
  double mean_b() const { return static_cast<double>(sum_b) / n; }
  double var_a() const { return central(sum_aa, sum_a, sum_a); }
  double var_b() const { return central(sum_bb, sum_b, sum_b); }
  double covariance() const { return central(sum_ab, sum_a, sum_b); }

 private:
  double central(std::int64_t sxy, std::int64_t sx, std::int64_t sy) const {
    const std::int64_t num = n * sxy - sx * sy;
    return static_cast<double>(num) / static_cast<double>(n * n);
  }
};

/// Window statistics of one image. Sums and squared sums come from integral
/// images over a border-replicated copy, so mean and variance of any window
/// are O(1); the padded copy also serves cross-product sums.
class PatchStats {
 public:
  PatchStats() = default;

  PatchStats(const GrayImage& img, const CostParams& params)
      : width_(img.width()), height_(img.height()), radius_(params.radius()) {
    params.validate();
    if (img.width() < params.window || img.height() < params.window) {
      throw InvalidArgument("PatchStats: image " + std::to_string(img.width()) + "x" +
                            std::to_string(img.height()) + " is smaller than the " +
                            std::to_string(params.window) + "-pixel window");
    }
    padded_w_ = width_ + 2 * radius_;
    padded_h_ = height_ + 2 * radius_;
    padded_.resize(static_cast<std::size_t>(padded_w_) * padded_h_);
    for (int y = 0; y < padded_h_; ++y)
      for (int x = 0; x < padded_w_; ++x)
        padded_[static_cast<std::size_t>(y) * padded_w_ + x] = img.clamped(x - radius_, y - radius_);

    const std::size_t iw = static_cast<std::size_t>(padded_w_) + 1;
    sum_.assign(iw * (padded_h_ + 1), 0);
    sumsq_.assign(iw * (padded_h_ + 1), 0);
    for (int y = 0; y < padded_h_; ++y) {
      std::int64_t row = 0;
      std::int64_t row_sq = 0;
      for (int x = 0; x < padded_w_; ++x) {
        const std::int64_t v = padded(x, y);
        row += v;
        row_sq += v * v;
        sum_[(y + 1) * iw + x + 1] = sum_[y * iw + x + 1] + row;
        sumsq_[(y + 1) * iw + x + 1] = sumsq_[y * iw + x + 1] + row_sq;
      }
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int radius() const { return radius_; }
  std::int64_t count() const {
    const std::int64_t n = 2 * radius_ + 1;
    return n * n;
  }

  /// Sum of the window centred at image pixel (x, y).
  std::int64_t window_sum(int x, int y) const { return box(sum_, x, y); }
  std::int64_t window_sumsq(int x, int y) const { return box(sumsq_, x, y); }

  double mean(int x, int y) const { return static_cast<double>(window_sum(x, y)) / count(); }
  double variance(int x, int y) const {
    const std::int64_t n = count();
    const std::int64_t s = window_sum(x, y);
    return static_cast<double>(n * window_sumsq(x, y) - s * s) / static_cast<double>(n * n);
  }

  /// Pixel of the replicated-border copy; (0, 0) is image pixel (-r, -r).
  std::int64_t padded(int px, int py) const {
    return padded_[static_cast<std::size_t>(py) * padded_w_ + px];
  }

 private:
  std::int64_t box(const std::vector<std::int64_t>& integral, int x, int y) const {
    const std::size_t iw = static_cast<std::size_t>(padded_w_) + 1;
    const int n = 2 * radius_ + 1;
    // image (x, y) window spans padded columns [x, x + n) and rows [y, y + n)
    return integral[(y + n) * iw + x + n] - integral[y * iw + x + n] -
           integral[(y + n) * iw + x] + integral[y * iw + x];
  }

  int width_ = 0;
  int height_ = 0;
  int radius_ = 0;
  int padded_w_ = 0;
  int padded_h_ = 0;
  std::vector<std::uint8_t> padded_;
  std::vector<std::int64_t> sum_;
  std::vector<std::int64_t> sumsq_;
};

/// Sum over the window of left(x + i, y + j) * right(x - u + i, y + j).
inline std::int64_t cross_sum(const PatchStats& left, const PatchStats& right, int x, int y,
                              int u) {
  const int n = 2 * left.radius() + 1;
  std::int64_t acc = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) acc += left.padded(x + i, y + j) * right.padded(x - u + i, y + j);
  return acc;
}

inline PatchMoments patch_moments(const PatchStats& left, const PatchStats& right, int x, int y,
                                  int u) {
  PatchMoments m;
  m.n = left.count();
  m.sum_a = left.window_sum(x, y);
  m.sum_aa = left.window_sumsq(x, y);
  m.sum_b = right.window_sum(x - u, y);
  m.sum_bb = right.window_sumsq(x - u, y);
  m.sum_ab = cross_sum(left, right, x, y, u);
  return m;
}

/// Luminance, contrast and structure similarity of a patch pair.
struct SsimComponents {
  double l = 1.0;
  double c = 1.0;
  double s = 1.0;
};

inline SsimComponents ssim_components(const PatchMoments& m, const CostParams& params) {
  const double c1 = params.c1();
  const double c2 = params.c2();
  const double c3 = params.c3();
  const double mu_a = m.mean_a();
  const double mu_b = m.mean_b();
  const double var_a = m.var_a();
  const double var_b = m.var_b();
  // sqrt(v * v) == v exactly, which keeps c == s == 1 for identical patches
  const double sigma_ab = std::sqrt(var_a * var_b);
  SsimComponents out;
  out.l = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
  out.c = (2.0 * sigma_ab + c2) / (var_a + var_b + c2);
  out.s = std::clamp((m.covariance() + c3) / (sigma_ab + c3), -1.0, 1.0);
  return out;
}

inline void check_pixel(const PatchStats& stats, int x, int y, const char* who) {
  if (x < 0 || y < 0 || x >= stats.width() || y >= stats.height())
    throw InvalidArgument(std::string(who) + ": pixel (" + std::to_string(x) + ", " +
                          std::to_string(y) + ") outside the image");
}

/// Components for the left patch at (x, y) against the right patch at (x - u, y).
inline SsimComponents ssim_components(const PatchStats& left, const PatchStats& right, int x,
                                      int y, int u, const CostParams& params) {
  check_pixel(left, x, y, "ssim_components");
  if (u < 0 || x - u < 0) {
    throw InvalidArgument("ssim_components: disparity " + std::to_string(u) + " at column " +
                          std::to_string(x) + " leaves the right image");
  }
  return ssim_components(patch_moments(left, right, x, y, u), params);
}

/// (1 - l^a c^b s^g) L / 2 clamped to [0, L]. A negative structure term keeps
/// its sign under the exponent.
inline double ssim_cost_from(const SsimComponents& comp, const CostParams& params) {
  auto signed_pow = [](double v, double e) {
    if (e == 1.0) return v;
    return v < 0.0 ? -std::pow(-v, e) : std::pow(v, e);
  };
  const double sim = signed_pow(comp.l, params.alpha) * signed_pow(comp.c, params.beta) *
                     signed_pow(comp.s, params.gamma);
  return std::clamp((1.0 - sim) * params.range / 2.0, 0.0, params.range);
}

/// Matching cost of left pixel (x, y) at disparity u. Disparities that point
/// outside the right image cost exactly L.
inline double ssim_cost(const PatchStats& left, const PatchStats& right, int x, int y, int u,
                        const CostParams& params) {
  check_pixel(left, x, y, "ssim_cost");
  detail::require(u >= 0, "ssim_cost: disparity must be non-negative");
  if (x - u < 0) return params.range;
  return ssim_cost_from(ssim_components(patch_moments(left, right, x, y, u), params), params);
}

/// Dense cost for every pixel and every disparity in [0, d_max], laid out
/// as cost[(y * width + x) * (d_max + 1) + u]. Cross sums are formed per
/// disparity with running column/row sums, O(1) per (pixel, disparity).
inline std::vector<float> dense_cost_volume(const PatchStats& left, const PatchStats& right,
                                            int d_max, const CostParams& params,
                                            int threads = 1) {
  detail::require(d_max >= 0, "dense_cost_volume: d_max must be >= 0");
  const int w = left.width();
  const int h = left.height();
  const int n = 2 * left.radius() + 1;
  const int m = d_max + 1;
  std::vector<float> cost(static_cast<std::size_t>(w) * h * m,
                          static_cast<float>(params.range));
  parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t ui) {
    const int u = static_cast<int>(ui);
    if (u >= w) return;
    // column sums of products over n padded rows, for padded columns pc >= u
    const int pw = w + 2 * left.radius();
    std::vector<std::int64_t> col(pw, 0);
    for (int y = 0; y < h; ++y) {
      if (y == 0) {
        for (int pc = u; pc < pw; ++pc) {
          std::int64_t s = 0;
          for (int j = 0; j < n; ++j) s += left.padded(pc, j) * right.padded(pc - u, j);
          col[pc] = s;
        }
      } else {
        for (int pc = u; pc < pw; ++pc) {
          col[pc] += left.padded(pc, y + n - 1) * right.padded(pc - u, y + n - 1) -
                     left.padded(pc, y - 1) * right.padded(pc - u, y - 1);
        }
      }
      std::int64_t run = 0;
      for (int pc = u; pc < u + n; ++pc) run += col[pc];
      for (int x = u; x < w; ++x) {
        if (x > u) run += col[x + n - 1] - col[x - 1];
        PatchMoments mom;
        mom.n = left.count();
        mom.sum_a = left.window_sum(x, y);
        mom.sum_aa = left.window_sumsq(x, y);
        mom.sum_b = right.window_sum(x - u, y);
        mom.sum_bb = right.window_sumsq(x - u, y);
        mom.sum_ab = run;
        cost[(static_cast<std::size_t>(y) * w + x) * m + u] =
            static_cast<float>(ssim_cost_from(ssim_components(mom, params), params));
      }
    }
  });
  return cost;
}

}  // namespace mpv
