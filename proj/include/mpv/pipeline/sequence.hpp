#pragma once

#include <algorithm>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "mpv/imgio.hpp"
#include "mpv/pipeline/dispio.hpp"
#include "mpv/pipeline/frame.hpp"

namespace mpv {

/// Fraction of valid ground-truth pixels whose prediction is off by more
/// than tau. An invalid prediction at a valid GT pixel counts as an error.
inline double evaluate_disparity(const DisparityMap& pred, const DisparityMap& gt, double tau = 3.0) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw InvalidArgument("evaluate_disparity: size mismatch");
  detail::require(tau >= 0.0, "evaluate_disparity: tau must be >= 0");
  std::size_t n = 0, bad = 0;
  for (std::size_t i = 0; i < gt.u.size(); ++i) {
    if (!gt.valid[i]) continue;
    ++n;
    if (!pred.valid[i] || std::abs(pred.u[i] - gt.u[i]) > tau) ++bad;
  }
  if (n == 0) throw DegenerateInput("evaluate_disparity: ground truth has no valid pixel");
  return static_cast<double>(bad) / static_cast<double>(n);
}

/// Left/right file pair sharing a frame id, plus optional ground truth
/// disparities and obstacle labels.
struct FrameFiles {
  std::string id;
  std::filesystem::path left, right;
  std::optional<std::filesystem::path> gt;
  std::optional<std::filesystem::path> labels;
};

struct FrameListing {
  std::vector<FrameFiles> frames;         ///< sorted by id
  std::vector<std::string> unpaired;      ///< files lacking their partner
};

/// Finds NNN_left.{pgm,png} / NNN_right.{pgm,png}; NNN_gt.{pfm,pgm,png} is
/// picked up as ground truth and NNN_scene.json as obstacle labels.
inline FrameListing list_frames(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  static const std::regex re(R"(^(.+)_(left|right|gt)\.(pgm|png|pfm)$)", std::regex::icase);
  static const std::regex labels_re(R"(^(.+)_scene\.json$)", std::regex::icase);
  std::map<std::string, FrameFiles> by_id;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    std::smatch m;
    if (std::regex_match(name, m, labels_re)) {
      by_id[m[1].str()].labels = e.path();
      continue;
    }
    if (!std::regex_match(name, m, re)) continue;
    std::string kind = m[2].str();
    for (auto& ch : kind) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    const std::string ext = detail::lower_extension(e.path());
    FrameFiles& f = by_id[m[1].str()];
    if (kind == "gt") f.gt = e.path();
    else if (ext != ".pfm") (kind == "left" ? f.left : f.right) = e.path();
  }
  FrameListing out;
  for (auto& [id, f] : by_id) {
    f.id = id;
    if (!f.left.empty() && !f.right.empty()) out.frames.push_back(f);
    else if (!f.left.empty()) out.unpaired.push_back(f.left.filename().string());
    else if (!f.right.empty()) out.unpaired.push_back(f.right.filename().string());
  }
  return out;
}

struct FrameEval {
  std::string id;
  std::optional<double> error_rate;
  std::size_t gt_pixels = 0;
  std::optional<bool> detection_correct;  ///< labelled frames run with a model
};

/// Obstacle boxes of a label file: {"obstacles": [{"x", "y", "w", "h", ...}]}.
inline std::vector<Box> load_labels(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  try {
    nlohmann::json j;
    f >> j;
    std::vector<Box> out;
    for (const auto& o : j.at("obstacles"))
      out.push_back({o.at("x").get<int>(), o.at("y").get<int>(), o.at("w").get<int>(), o.at("h").get<int>()});
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

inline double intersection_over_union(const Box& a, const Box& b) {
  const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// A frame is detected correctly when every labelled box is hit by a
/// detection with IoU >= min_iou and every detection hits a labelled box.
/// Empty labels (obstacles out of view) need no detection.
inline bool detections_match(const std::vector<FrameDetection>& dets, const std::vector<Box>& labels,
                             double min_iou = 0.5) {
  for (const Box& l : labels)
    if (l.w > 0 && l.h > 0 && std::none_of(dets.begin(), dets.end(),
                     [&](const FrameDetection& d) { return intersection_over_union(d.box, l) >= min_iou; }))
      return false;
  for (const FrameDetection& d : dets)
    if (std::none_of(labels.begin(), labels.end(),
                     [&](const Box& l) { return intersection_over_union(d.box, l) >= min_iou; }))
      return false;
  return true;
}

struct EvalReport {
  double tau = 3.0;
  std::vector<FrameEval> frames;
  std::optional<double> mean_error_rate;  ///< over frames with ground truth
  std::optional<double> detection_accuracy;
  std::size_t frames_run = 0;
  double mean_match_ms = 0.0;
  double mean_total_ms = 0.0;
};

struct SequenceResult {
  std::vector<std::string> ids;
  std::vector<FrameResult> frames;
  EvalReport report;
  std::vector<std::string> warnings;
};

namespace detail {

/// One-slot hand-off between the two pipeline stages.
template <typename T>
class Slot {
 public:
  void put(T v) {
    std::unique_lock lock(m_);
    cv_.wait(lock, [&] { return !value_; });
    value_ = std::move(v);
    cv_.notify_all();
  }
  T take() {
    std::unique_lock lock(m_);
    cv_.wait(lock, [&] { return value_.has_value(); });
    T v = std::move(*value_);
    value_.reset();
    cv_.notify_all();
    return v;
  }

 private:
  std::mutex m_;
  std::condition_variable cv_;
  std::optional<T> value_;
};

}  // namespace detail

/// Runs every frame of `dir`. Matching of frame k+1 overlaps the analysis of
/// frame k; each frame carries its sequence number through both stages and
/// the analysis stage checks it receives them in order.
inline SequenceResult run_sequence(const std::filesystem::path& dir, const PipelineConfig& cfg,
                                   const CascadeModel* model, const Rectification* rect = nullptr,
                                   double tau = 3.0) {
  cfg.validate();
  SequenceResult out;
  out.report.tau = tau;
  const FrameListing listing = list_frames(dir);
  for (const auto& f : listing.unpaired) out.warnings.push_back("unpaired frame file skipped: " + f);
  if (listing.frames.empty()) {
    out.warnings.push_back("no frame pairs in " + dir.string());
    return out;
  }

  // Loaded pairs that failed validation are reported and left out.
  struct Loaded {
    std::size_t index;
    StereoPair pair;
  };
  std::vector<Loaded> work;
  for (std::size_t i = 0; i < listing.frames.size(); ++i) {
    const FrameFiles& f = listing.frames[i];
    try {
      GrayImage l = load_image(f.left), r = load_image(f.right);
      if (l.width() != r.width() || l.height() != r.height()) {
        out.warnings.push_back("frame " + f.id + " skipped: left and right sizes differ");
        continue;
      }
      work.push_back({i, StereoPair(std::move(l), std::move(r))});
    } catch (const Error& e) {
      out.warnings.push_back("frame " + f.id + " skipped: " + e.what());
    }
  }

  struct Item {
    std::optional<MatchedFrame> frame;
    std::exception_ptr error;
  };
  detail::Slot<Item> slot;
  std::thread producer([&] {
    for (std::size_t k = 0; k < work.size(); ++k) {
      Item item;
      try {
        item.frame = match_stage(work[k].pair, cfg, rect, k);
      } catch (...) {
        item.error = std::current_exception();
      }
      slot.put(std::move(item));
    }
  });

  std::exception_ptr failure;
  double match_sum = 0, total_sum = 0;
  for (std::size_t k = 0; k < work.size(); ++k) {
    Item item = slot.take();
    if (failure) continue;  // drain so the producer can finish
    try {
      if (item.error) std::rethrow_exception(item.error);
      if (item.frame->sequence != k) throw std::logic_error("run_sequence: frame order violated");
      FrameResult r = analyze_stage(std::move(*item.frame), cfg, model);
      if (r.sequence != k) throw std::logic_error("run_sequence: frame order violated");
      const FrameFiles& f = listing.frames[work[k].index];
      FrameEval ev{f.id, std::nullopt, 0, std::nullopt};
      if (f.gt) {
        const DisparityMap gt = load_disparity(*f.gt);
        ev.gt_pixels = gt.valid_count();
        ev.error_rate = evaluate_disparity(r.disparity, gt, tau);
      }
      if (f.labels && model) ev.detection_correct = detections_match(r.detections, load_labels(*f.labels));
      out.report.frames.push_back(ev);
      match_sum += r.timings.match_ms;
      total_sum += r.timings.total();
      out.ids.push_back(f.id);
      out.frames.push_back(std::move(r));
    } catch (...) {
      failure = std::current_exception();
    }
  }
  producer.join();
  if (failure) std::rethrow_exception(failure);

  out.report.frames_run = out.frames.size();
  if (!out.frames.empty()) {
    out.report.mean_match_ms = match_sum / out.frames.size();
    out.report.mean_total_ms = total_sum / out.frames.size();
  }
  double s = 0;
  int n = 0, labelled = 0, correct = 0;
  for (const auto& e : out.report.frames) {
    if (e.error_rate) {
      s += *e.error_rate;
      ++n;
    }
    if (e.detection_correct) {
      ++labelled;
      correct += *e.detection_correct;
    }
  }
  if (n > 0) out.report.mean_error_rate = s / n;
  if (labelled > 0) out.report.detection_accuracy = static_cast<double>(correct) / labelled;
  return out;
}

inline nlohmann::json report_to_json(const EvalReport& r, bool timings = true) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : r.frames) {
    nlohmann::json e = {{"id", f.id}, {"gt_pixels", f.gt_pixels}};
    e["error_rate"] = f.error_rate ? nlohmann::json(*f.error_rate) : nlohmann::json();
    if (f.detection_correct) e["detection_correct"] = *f.detection_correct;
    frames.push_back(e);
  }
  nlohmann::json j = {{"format", "mpv-eval"}, {"version", 1}, {"tau", r.tau}, {"frames", frames},
                      {"frames_run", r.frames_run}};
  j["mean_error_rate"] = r.mean_error_rate ? nlohmann::json(*r.mean_error_rate) : nlohmann::json();
  if (r.detection_accuracy) j["detection_accuracy"] = *r.detection_accuracy;
  if (timings) j["timings_ms"] = {{"mean_match", r.mean_match_ms}, {"mean_total", r.mean_total_ms}};
  return j;
}

/// Compares same-named disparity files of two directories.
inline EvalReport evaluate_directories(const std::filesystem::path& pred_dir,
                                       const std::filesystem::path& gt_dir, double tau = 3.0) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(pred_dir)) throw IoError("not a directory: " + pred_dir.string());
  if (!fs::is_directory(gt_dir)) throw IoError("not a directory: " + gt_dir.string());
  std::vector<fs::path> gts;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = detail::lower_extension(e.path());
    if (ext == ".pfm" || ext == ".pgm" || ext == ".png") gts.push_back(e.path());
  }
  std::sort(gts.begin(), gts.end());
  EvalReport r;
  r.tau = tau;
  double s = 0;
  for (const auto& g : gts) {
    const fs::path p = pred_dir / g.filename();
    if (!fs::exists(p)) throw IoError("missing prediction for " + g.filename().string());
    const DisparityMap pred = load_disparity(p), gt = load_disparity(g);
    FrameEval e{g.stem().string(), evaluate_disparity(pred, gt, tau), gt.valid_count(), std::nullopt};
    s += *e.error_rate;
    r.frames.push_back(e);
  }
  r.frames_run = r.frames.size();
  if (!r.frames.empty()) r.mean_error_rate = s / r.frames.size();
  return r;
}

}  // namespace mpv
