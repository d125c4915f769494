#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "json.hpp"

#include "mpv/cost.hpp"
#include "mpv/multiscale.hpp"
#include "mpv/recog/detect.hpp"
#include "mpv/roadobs.hpp"
#include "mpv/viterbi.hpp"

namespace mpv {

/// Every knob of a frame run. Stored as JSON; see README for the layout.
struct PipelineConfig {
  int d_max = 32;

  // optics: f_px = focal_mm / pixel_pitch_mm unless focal_px is given
  double focal_mm = 8.0;
  double pixel_pitch_mm = 0.006;
  std::optional<double> focal_px;
  double baseline_m = 0.12;
  std::optional<double> cx, cy;  ///< principal point, image centre by default

  CostParams cost;
  PenaltyParams penalty;
  int block_size = 8;
  int scope_width = 0;
  RoadParams road;
  DetectorConfig detector;
  double roi_margin = 0.25;  ///< search border around an ROI, fraction of its longer side

  int threads = 1;  ///< concurrency width, never changes results

  std::string model_path;
  std::string remap_left;
  std::string remap_right;

  double focal_pixels() const { return focal_px ? *focal_px : focal_mm / pixel_pitch_mm; }

  StereoGeometry geometry(int width, int height) const {
    StereoGeometry g = StereoGeometry::centred(width, height, focal_pixels(), baseline_m);
    if (cx) g.cx = *cx;
    if (cy) g.cy = *cy;
    return g;
  }

  MultiscaleParams multiscale() const {
    MultiscaleParams p;
    p.mpv.cost = cost;
    p.mpv.penalty = penalty;
    p.mpv.threads = threads;
    p.block_size = block_size;
    p.scope_width = scope_width;
    return p;
  }

  DetectorConfig detector_config() const {
    DetectorConfig d = detector;
    d.threads = threads;
    return d;
  }

  void validate() const {
    detail::require(d_max >= 4, "config: d_max must be >= 4");
    detail::require(focal_mm > 0 && pixel_pitch_mm > 0, "config: optics must be positive");
    detail::require(!focal_px || *focal_px > 0, "config: focal_px must be positive");
    detail::require(baseline_m > 0, "config: baseline_m must be positive");
    cost.validate();
    penalty.validate();
    detail::require(block_size >= 1, "config: block_size must be >= 1");
    detail::require(scope_width >= 0, "config: scope_width must be >= 0");
    detail::require(road.eta >= 1 && road.phi_bins >= 8 && road.radon_band >= 0,
                    "config: bad road path parameters");
    detail::require(road.small_height > 0 && road.max_height > road.small_height,
                    "config: need 0 < small_height < max_height");
    detail::require(road.min_run_fraction > 0 && road.min_run_fraction <= 1,
                    "config: min_run_fraction must be in (0, 1]");
    detail::require(road.max_range > 0 && road.min_area >= 1 && road.min_disparity >= 0 &&
                        road.disparity_margin >= 0,
                    "config: bad obstacle parameters");
    detector.validate();
    detail::require(roi_margin >= 0, "config: roi_margin must be >= 0");
    detail::require(threads >= 1, "config: threads must be >= 1");
  }
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys,
                           const std::string& where) {
  if (!j.is_object()) throw FormatError("config: '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw FormatError("config: unknown key '" + where + "." + k + "'");
  }
}

}  // namespace detail

/// Algorithmic parameters only (no thread count, no paths); this is what the
/// config hash covers.
inline nlohmann::json config_params_json(const PipelineConfig& c) {
  nlohmann::json geom = {{"focal_mm", c.focal_mm},
                         {"pixel_pitch_mm", c.pixel_pitch_mm},
                         {"focal_px", c.focal_px ? nlohmann::json(*c.focal_px) : nlohmann::json()},
                         {"baseline_m", c.baseline_m},
                         {"cx", c.cx ? nlohmann::json(*c.cx) : nlohmann::json()},
                         {"cy", c.cy ? nlohmann::json(*c.cy) : nlohmann::json()}};
  return {
      {"d_max", c.d_max},
      {"geometry", geom},
      {"cost",
       {{"window", c.cost.window}, {"k1", c.cost.k1}, {"k2", c.cost.k2}, {"range", c.cost.range},
        {"alpha", c.cost.alpha}, {"beta", c.cost.beta}, {"gamma", c.cost.gamma}}},
      {"penalty",
       {{"lambda", c.penalty.lambda}, {"occlusion_asymmetry", c.penalty.occlusion_asymmetry},
        {"gradient_scale", c.penalty.gradient_scale}, {"carry", c.penalty.carry}}},
      {"multiscale", {{"block_size", c.block_size}, {"scope_width", c.scope_width}}},
      {"road",
       {{"eta", c.road.eta}, {"radon_seed", c.road.radon_seed}, {"radon_band", c.road.radon_band},
        {"phi_bins", c.road.phi_bins}, {"small_height", c.road.small_height},
        {"min_run_fraction", c.road.min_run_fraction}, {"max_range", c.road.max_range},
        {"max_height", c.road.max_height}, {"min_area", c.road.min_area},
        {"disparity_margin", c.road.disparity_margin}, {"min_disparity", c.road.min_disparity}}},
      {"detector",
       {{"min_window", c.detector.min_window}, {"max_window", c.detector.max_window},
        {"growth", c.detector.growth}, {"stride_fraction", c.detector.stride_fraction},
        {"min_stride", c.detector.min_stride}, {"merge_overlap", c.detector.merge_overlap},
        {"min_neighbors", c.detector.min_neighbors}, {"roi_margin", c.roi_margin}}}};
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j = config_params_json(c);
  j["threads"] = c.threads;
  j["paths"] = {{"model", c.model_path}, {"remap_left", c.remap_left}, {"remap_right", c.remap_right}};
  return j;
}

/// Missing keys keep their defaults; unknown keys are an error.
inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    detail::reject_unknown(j, {"d_max", "geometry", "cost", "penalty", "multiscale", "road",
                               "detector", "threads", "paths"},
                           "");
    detail::read_opt(j, "d_max", c.d_max);
    detail::read_opt(j, "threads", c.threads);
    if (j.contains("geometry")) {
      const auto& g = j["geometry"];
      detail::reject_unknown(g, {"focal_mm", "pixel_pitch_mm", "focal_px", "baseline_m", "cx", "cy"},
                             "geometry");
      detail::read_opt(g, "focal_mm", c.focal_mm);
      detail::read_opt(g, "pixel_pitch_mm", c.pixel_pitch_mm);
      detail::read_opt(g, "baseline_m", c.baseline_m);
      for (auto [key, dst] : {std::pair{"focal_px", &c.focal_px}, std::pair{"cx", &c.cx},
                              std::pair{"cy", &c.cy}})
        if (g.contains(key) && !g[key].is_null()) *dst = g[key].get<double>();
    }
    if (j.contains("cost")) {
      const auto& s = j["cost"];
      detail::reject_unknown(s, {"window", "k1", "k2", "range", "alpha", "beta", "gamma"}, "cost");
      detail::read_opt(s, "window", c.cost.window);
      detail::read_opt(s, "k1", c.cost.k1);
      detail::read_opt(s, "k2", c.cost.k2);
      detail::read_opt(s, "range", c.cost.range);
      detail::read_opt(s, "alpha", c.cost.alpha);
      detail::read_opt(s, "beta", c.cost.beta);
      detail::read_opt(s, "gamma", c.cost.gamma);
    }
    if (j.contains("penalty")) {
      const auto& s = j["penalty"];
      detail::reject_unknown(s, {"lambda", "occlusion_asymmetry", "gradient_scale", "carry"}, "penalty");
      detail::read_opt(s, "lambda", c.penalty.lambda);
      detail::read_opt(s, "occlusion_asymmetry", c.penalty.occlusion_asymmetry);
      detail::read_opt(s, "gradient_scale", c.penalty.gradient_scale);
      detail::read_opt(s, "carry", c.penalty.carry);
    }
    if (j.contains("multiscale")) {
      const auto& s = j["multiscale"];
      detail::reject_unknown(s, {"block_size", "scope_width"}, "multiscale");
      detail::read_opt(s, "block_size", c.block_size);
      detail::read_opt(s, "scope_width", c.scope_width);
    }
    if (j.contains("road")) {
      const auto& s = j["road"];
      detail::reject_unknown(s, {"eta", "radon_seed", "radon_band", "phi_bins", "small_height",
                                 "min_run_fraction", "max_range", "max_height", "min_area",
                                 "disparity_margin", "min_disparity"},
                             "road");
      detail::read_opt(s, "eta", c.road.eta);
      detail::read_opt(s, "radon_seed", c.road.radon_seed);
      detail::read_opt(s, "radon_band", c.road.radon_band);
      detail::read_opt(s, "phi_bins", c.road.phi_bins);
      detail::read_opt(s, "small_height", c.road.small_height);
      detail::read_opt(s, "min_run_fraction", c.road.min_run_fraction);
      detail::read_opt(s, "max_range", c.road.max_range);
      detail::read_opt(s, "max_height", c.road.max_height);
      detail::read_opt(s, "min_area", c.road.min_area);
      detail::read_opt(s, "disparity_margin", c.road.disparity_margin);
      detail::read_opt(s, "min_disparity", c.road.min_disparity);
    }
    if (j.contains("detector")) {
      const auto& s = j["detector"];
      detail::reject_unknown(s, {"min_window", "max_window", "growth", "stride_fraction", "min_stride",
                                 "merge_overlap", "min_neighbors", "roi_margin"},
                             "detector");
      detail::read_opt(s, "min_window", c.detector.min_window);
      detail::read_opt(s, "max_window", c.detector.max_window);
      detail::read_opt(s, "growth", c.detector.growth);
      detail::read_opt(s, "stride_fraction", c.detector.stride_fraction);
      detail::read_opt(s, "min_stride", c.detector.min_stride);
      detail::read_opt(s, "merge_overlap", c.detector.merge_overlap);
      detail::read_opt(s, "min_neighbors", c.detector.min_neighbors);
      detail::read_opt(s, "roi_margin", c.roi_margin);
    }
    if (j.contains("paths")) {
      const auto& s = j["paths"];
      detail::reject_unknown(s, {"model", "remap_left", "remap_right"}, "paths");
      detail::read_opt(s, "model", c.model_path);
      detail::read_opt(s, "remap_left", c.remap_left);
      detail::read_opt(s, "remap_right", c.remap_right);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
  return config_from_json(j);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Hex FNV-1a of the compact parameter JSON.
inline std::string config_hash(const PipelineConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(config_params_json(c).dump())));
  return buf;
}

}  // namespace mpv
