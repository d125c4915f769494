#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mpv/multiscale.hpp"
#include "mpv/pipeline/config.hpp"
#include "mpv/recog/cascade.hpp"
#include "mpv/recog/detect.hpp"
#include "mpv/roadobs.hpp"

namespace mpv {

/// An error raised inside a pipeline stage, tagged with that stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct Rectification {
  RemapTable left;
  RemapTable right;
};

struct StageTimings {
  double rectify_ms = 0, match_ms = 0, road_ms = 0, roi_ms = 0, detect_ms = 0;
  double total() const { return rectify_ms + match_ms + road_ms + roi_ms + detect_ms; }
};

/// An ROI as handed to the detector: the obstacle component plus a border.
struct FrameRoi {
  Box search;     ///< region swept by the detector, inside the image
  Box component;  ///< bounding box of the obstacle pixels
  double mean_disparity = 0.0;
  double distance = 0.0;
  int area = 0;
};

struct FrameDetection {
  Box box;
  int roi = 0;  ///< index into FrameResult::rois
  double mean_disparity = 0.0;
  double distance = 0.0;
  int windows = 0;
};

struct FrameResult {
  std::uint64_t sequence = 0;
  DisparityMap disparity;
  EvalCounter counter;
  RoadModel road;
  std::vector<FrameRoi> rois;
  std::vector<FrameDetection> detections;
  std::vector<std::string> warnings;
  StageTimings timings;
};

/// Output of the matching stage, consumed by the analysis stage.
struct MatchedFrame {
  std::uint64_t sequence = 0;
  StereoPair pair;  ///< rectified
  DisparityMap disparity;
  EvalCounter counter;
  StageTimings timings;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline Box expand_roi(const RoiBox& r, double margin, int width, int height) {
  const int m = static_cast<int>(std::lround(margin * std::max(r.w, r.h)));
  const int x0 = std::max(0, r.x - m), y0 = std::max(0, r.y - m);
  const int x1 = std::min(width, r.x + r.w + m), y1 = std::min(height, r.y + r.h + m);
  return {x0, y0, x1 - x0, y1 - y0};
}

}  // namespace detail

/// Rectification and multi-scale matching.
inline MatchedFrame match_stage(const StereoPair& pair, const PipelineConfig& cfg,
                                const Rectification* rect = nullptr, std::uint64_t sequence = 0) {
  MatchedFrame m;
  m.sequence = sequence;
  auto t0 = detail::Clock::now();
  m.pair = detail::in_stage("rectify", [&] {
    if (!rect) return pair;
    return StereoPair(apply_remap(pair.left, rect->left), apply_remap(pair.right, rect->right));
  });
  m.timings.rectify_ms = detail::ms_since(t0);
  t0 = detail::Clock::now();
  auto r = detail::in_stage("match", [&] { return run_multiscale_mpv(m.pair, cfg.d_max, cfg.multiscale()); });
  m.timings.match_ms = detail::ms_since(t0);
  m.disparity = std::move(r.disparity);
  m.counter = r.counter;
  return m;
}

/// Road model, obstacle ROIs and (when a model is given) cascade detection.
inline FrameResult analyze_stage(MatchedFrame m, const PipelineConfig& cfg, const CascadeModel* model) {
  FrameResult out;
  out.sequence = m.sequence;
  out.timings = m.timings;
  out.counter = m.counter;
  const int w = m.pair.width(), h = m.pair.height();
  const StereoGeometry g = cfg.geometry(w, h);

  auto t0 = detail::Clock::now();
  out.road = detail::in_stage("road", [&] { return detect_road(m.disparity, g, cfg.road); });
  out.timings.road_ms = detail::ms_since(t0);
  if (!out.road.valid) out.warnings.push_back("no road surface found");

  t0 = detail::Clock::now();
  const auto boxes = detail::in_stage("roi", [&] {
    return extract_obstacle_rois(m.disparity, out.road, udisparity(m.disparity), cfg.road);
  });
  for (const RoiBox& b : boxes)
    out.rois.push_back({detail::expand_roi(b, cfg.roi_margin, w, h), Box{b.x, b.y, b.w, b.h},
                        b.mean_disparity, b.distance, b.area});
  out.timings.roi_ms = detail::ms_since(t0);

  t0 = detail::Clock::now();
  if (!model) {
    out.warnings.push_back("no cascade model: detection skipped");
  } else {
    detail::in_stage("detect", [&] {
      const DetectorConfig dc = cfg.detector_config();
      for (std::size_t i = 0; i < out.rois.size(); ++i) {
        const FrameRoi& r = out.rois[i];
        for (const Detection& d : detect_in_roi(m.pair.left, r.search, *model, dc))
          out.detections.push_back({d.box, static_cast<int>(i), r.mean_disparity, r.distance, d.windows});
      }
      return 0;
    });
  }
  out.timings.detect_ms = detail::ms_since(t0);
  out.disparity = std::move(m.disparity);
  return out;
}

inline FrameResult run_frame(const StereoPair& pair, const PipelineConfig& cfg,
                             const CascadeModel* model, const Rectification* rect = nullptr,
                             std::uint64_t sequence = 0) {
  cfg.validate();
  return analyze_stage(match_stage(pair, cfg, rect, sequence), cfg, model);
}

// ---------------------------------------------------------------------------
// JSON record of one frame.

struct RecordOptions {
  bool timings = true;  ///< wall-clock fields make records non-reproducible
};

inline nlohmann::json box_json(const Box& b) {
  return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
}

inline nlohmann::json frame_to_json(const FrameResult& r, const PipelineConfig& cfg,
                                    const RecordOptions& opt = {}) {
  nlohmann::json j;
  j["format"] = "mpv-frame";
  j["version"] = 1;
  j["sequence"] = r.sequence;
  j["config_hash"] = config_hash(cfg);
  j["width"] = r.disparity.width;
  j["height"] = r.disparity.height;
  j["d_max"] = r.disparity.d_max;
  j["disparity"] = {{"valid_fraction", static_cast<double>(r.disparity.valid_count()) /
                                           static_cast<double>(r.disparity.u.size())},
                    {"node_evaluations", r.counter.total()},
                    {"node_ratio", r.counter.ratio(r.disparity.width, r.disparity.height, r.disparity.d_max)}};
  nlohmann::json road = {{"valid", r.road.valid}};
  if (r.road.valid) {
    road["line"] = {{"d", r.road.line.d}, {"phi_deg", r.road.line.phi * 180.0 / std::numbers::pi},
                    {"score", r.road.line.score}};
    road["path"] = {{"first_disparity", r.road.path.first}, {"rows", r.road.path.rows}};
    road["plane"] = {{"a", r.road.plane.a}, {"b", r.road.plane.b}, {"c", r.road.plane.c},
                     {"d", r.road.plane.d}};
  }
  j["road"] = road;
  j["rois"] = nlohmann::json::array();
  for (const FrameRoi& roi : r.rois)
    j["rois"].push_back({{"box", box_json(roi.search)}, {"component", box_json(roi.component)},
                         {"mean_disparity", roi.mean_disparity}, {"distance_m", roi.distance},
                         {"area", roi.area}});
  j["detections"] = nlohmann::json::array();
  for (const FrameDetection& d : r.detections)
    j["detections"].push_back({{"box", box_json(d.box)}, {"roi", d.roi},
                               {"mean_disparity", d.mean_disparity}, {"distance_m", d.distance},
                               {"windows", d.windows}});
  j["warnings"] = r.warnings;
  if (opt.timings)
    j["timings_ms"] = {{"rectify", r.timings.rectify_ms}, {"match", r.timings.match_ms},
                       {"road", r.timings.road_ms}, {"roi", r.timings.roi_ms},
                       {"detect", r.timings.detect_ms}, {"total", r.timings.total()}};
  return j;
}

}  // namespace mpv
