#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "mpv/image.hpp"
#include "mpv/recog/boost.hpp"
#include "mpv/recog/lbp.hpp"

namespace mpv {

/// Weak-classifier sum with a rejection threshold.
struct CascadeStage {
  std::vector<RegressionTree> weak;
  double threshold = 0.0;
  double hit_rate = 1.0;     ///< measured on the stage's training positives
  double false_alarm = 0.0;  ///< measured on the stage's training negatives

  double score(std::span<const std::uint8_t> x) const {
    double s = 0.0;
    for (const RegressionTree& t : weak) s += t.eval(x);
    return s;
  }
  bool passes(std::span<const std::uint8_t> x) const { return score(x) >= threshold; }

  bool operator==(const CascadeStage&) const = default;
};

struct CascadeTrainConfig {
  int stages = 17;
  int max_depth = 2;
  double max_false_alarm = 0.5;
  double min_hit_rate = 0.99;
  int max_weak_per_stage = 100;
  int min_leaf = 1;             ///< samples a tree leaf must hold
  int negatives_per_stage = 0;  ///< 0: as many as the negative corpus
  int min_negatives = 10;       ///< fewer survivors than this ends training
  std::size_t max_mining_draws = 50000;  ///< negative windows drawn per stage at most
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const {
    detail::require(stages >= 1, "CascadeTrainConfig: stages must be >= 1");
    detail::require(max_depth >= 1, "CascadeTrainConfig: max_depth must be >= 1");
    detail::require(max_false_alarm > 0 && max_false_alarm < 1,
                    "CascadeTrainConfig: max_false_alarm must be in (0, 1)");
    detail::require(min_hit_rate > 0 && min_hit_rate <= 1,
                    "CascadeTrainConfig: min_hit_rate must be in (0, 1]");
    detail::require(max_weak_per_stage >= 1, "CascadeTrainConfig: max_weak_per_stage must be >= 1");
    detail::require(min_leaf >= 1, "CascadeTrainConfig: min_leaf must be >= 1");
    detail::require(negatives_per_stage >= 0 && min_negatives >= 1,
                    "CascadeTrainConfig: negative counts must be positive");
  }
};

struct CascadeModel {
  LbpParams lbp;
  std::vector<CascadeStage> stages;
  // training metadata
  int requested_stages = 0;
  int max_depth = 0;
  double max_false_alarm = 0.0;
  double min_hit_rate = 0.0;

  bool operator==(const CascadeModel&) const = default;
};

struct CascadeDecision {
  bool accept = true;
  int stages_evaluated = 0;
};

inline CascadeDecision cascade_classify_features(std::span<const std::uint8_t> x,
                                                 const CascadeModel& model) {
  CascadeDecision d;
  for (const CascadeStage& s : model.stages) {
    ++d.stages_evaluated;
    if (!s.passes(x)) {
      d.accept = false;
      break;
    }
  }
  return d;
}

inline CascadeDecision cascade_classify(const GrayImage& img, int x, int y, int w, int h,
                                        const CascadeModel& model) {
  const FeatureVector f = extract_features(img, x, y, w, h);
  return cascade_classify_features(f, model);
}

inline CascadeDecision cascade_classify(const GrayImage& window, const CascadeModel& model) {
  return cascade_classify(window, 0, 0, window.width(), window.height(), model);
}

/// Per-stage training record.
struct StageReport {
  int weak_count = 0;
  int positives = 0;
  int negatives = 0;
  double threshold = 0.0;
  double hit_rate = 0.0;
  double false_alarm = 0.0;
  std::vector<double> loss;  ///< exponential loss per boosting round
};

struct CascadeTrainResult {
  CascadeModel model;
  std::vector<StageReport> reports;
  std::string stop_reason;           ///< empty when every requested stage was trained
  std::size_t mining_draws = 0;      ///< negative windows drawn over all stages
};

namespace detail {

/// Deterministic stream of negative windows: every corpus image whole,
/// then random square or near-square sub-windows.
class NegativeStream {
 public:
  NegativeStream(const std::vector<GrayImage>& images, std::uint64_t seed)
      : images_(images), rng_(seed) {}

  FeatureVector next() {
    if (first_pass_ < images_.size()) {
      const GrayImage& im = images_[first_pass_++];
      return extract_features(im);
    }
    const GrayImage& im = images_[pick(images_.size())];
    const int side_max = std::min(im.width(), im.height());
    const int side = kFeatureWindow + static_cast<int>(pick(side_max - kFeatureWindow + 1));
    const int x = static_cast<int>(pick(im.width() - side + 1));
    const int y = static_cast<int>(pick(im.height() - side + 1));
    return extract_features(im, x, y, side, side);
  }

 private:
  std::size_t pick(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }

  const std::vector<GrayImage>& images_;
  std::mt19937_64 rng_;
  std::size_t first_pass_ = 0;
};

/// Largest threshold that keeps at least ceil(min_hit * n) of the scores.
inline double hit_threshold(std::vector<double> scores, double min_hit) {
  std::sort(scores.begin(), scores.end(), std::greater<>());
  const auto n = scores.size();
  auto keep = static_cast<std::size_t>(std::ceil(min_hit * static_cast<double>(n) - 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, n);
  return scores[keep - 1];
}

}  // namespace detail

/// Trains a boosted cascade. Stage k sees the positives still accepted by
/// stages 1..k-1 and negatives mined from the corpus that those stages
/// wrongly accept. Boosting rounds are added until the stage threshold
/// that keeps min_hit_rate of its positives lets through at most
/// max_false_alarm of its negatives.
inline CascadeTrainResult train_cascade(const std::vector<GrayImage>& positives,
                                        const std::vector<GrayImage>& negatives,
                                        const CascadeTrainConfig& cfg) {
  cfg.validate();
  if (positives.empty() || negatives.empty())
    throw InvalidArgument("train_cascade: both corpora must be non-empty");
  for (const GrayImage& im : negatives)
    if (im.width() < kFeatureWindow || im.height() < kFeatureWindow)
      throw InvalidArgument("train_cascade: negative image smaller than 24x24");

  CascadeTrainResult out;
  CascadeModel& model = out.model;
  model.requested_stages = cfg.stages;
  model.max_depth = cfg.max_depth;
  model.max_false_alarm = cfg.max_false_alarm;
  model.min_hit_rate = cfg.min_hit_rate;

  std::vector<FeatureVector> pos;
  pos.reserve(positives.size());
  for (const GrayImage& im : positives) pos.push_back(extract_features(im));

  const std::size_t want =
      cfg.negatives_per_stage > 0 ? static_cast<std::size_t>(cfg.negatives_per_stage) : negatives.size();
  detail::NegativeStream stream(negatives, cfg.seed);

  for (int k = 0; k < cfg.stages; ++k) {
    std::vector<const FeatureVector*> p;
    for (const FeatureVector& f : pos)
      if (cascade_classify_features(f, model).accept) p.push_back(&f);

    std::vector<FeatureVector> neg;
    for (std::size_t draws = 0; neg.size() < want && draws < cfg.max_mining_draws; ++draws) {
      FeatureVector f = stream.next();
      ++out.mining_draws;
      if (cascade_classify_features(f, model).accept) neg.push_back(std::move(f));
    }
    if (neg.size() < static_cast<std::size_t>(cfg.min_negatives) || p.empty()) {
      if (k == 0) throw DegenerateInput("train_cascade: corpus exhausted before the first stage");
      out.stop_reason = "negatives exhausted after " + std::to_string(k) + " stages";
      break;
    }

    SampleMatrix x(kFeatureCount);
    std::vector<int> y;
    std::vector<double> w;
    for (const FeatureVector* f : p) {
      x.add(*f);
      y.push_back(1);
      w.push_back(0.5 / static_cast<double>(p.size()));
    }
    for (const FeatureVector& f : neg) {
      x.add(f);
      y.push_back(-1);
      w.push_back(0.5 / static_cast<double>(neg.size()));
    }

    GentleBooster booster(x, y, w, cfg.max_depth, cfg.threads, cfg.min_leaf);
    StageReport rep;
    rep.positives = static_cast<int>(p.size());
    rep.negatives = static_cast<int>(neg.size());
    double threshold = 0.0, fa = 1.0, hit = 0.0;
    for (int t = 0; t < cfg.max_weak_per_stage; ++t) {
      const RegressionTree& tree = booster.add_round();
      const auto& sc = booster.scores();
      threshold = detail::hit_threshold(std::vector<double>(sc.begin(), sc.begin() + p.size()),
                                        cfg.min_hit_rate);
      std::size_t fp = 0, tp = 0;
      for (std::size_t i = 0; i < p.size(); ++i) tp += sc[i] >= threshold;
      for (std::size_t i = p.size(); i < sc.size(); ++i) fp += sc[i] >= threshold;
      hit = static_cast<double>(tp) / static_cast<double>(p.size());
      fa = static_cast<double>(fp) / static_cast<double>(neg.size());
      if (fa <= cfg.max_false_alarm) break;
      if (tree.nodes.size() == 1 && t > 0) break;  // no split reduces the error any more
    }
    if (fa > cfg.max_false_alarm) {
      if (k == 0)
        throw DegenerateInput(
            "train_cascade: positives and negatives cannot be separated (irreducible error)");
      out.stop_reason = "stage " + std::to_string(k + 1) + " could not reach the false-alarm cap";
      break;
    }
    if (hit < cfg.min_hit_rate) throw std::logic_error("train_cascade: hit-rate floor violated");

    CascadeStage stage;
    stage.weak = booster.trees();
    stage.threshold = threshold;
    stage.hit_rate = hit;
    stage.false_alarm = fa;
    rep.weak_count = static_cast<int>(stage.weak.size());
    rep.threshold = threshold;
    rep.hit_rate = hit;
    rep.false_alarm = fa;
    rep.loss = booster.loss_history();
    model.stages.push_back(std::move(stage));
    out.reports.push_back(std::move(rep));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model files: JSON, format "mpv-cascade", version 1.

inline nlohmann::json cascade_to_json(const CascadeModel& m) {
  nlohmann::json stages = nlohmann::json::array();
  for (const CascadeStage& s : m.stages) {
    nlohmann::json weak = nlohmann::json::array();
    for (const RegressionTree& t : s.weak) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const TreeNode& n : t.nodes)
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold},
                         {"left", n.left}, {"right", n.right}, {"value", n.value}});
      weak.push_back({{"weight", t.weight}, {"nodes", nodes}});
    }
    stages.push_back({{"threshold", s.threshold}, {"hit_rate", s.hit_rate},
                      {"false_alarm", s.false_alarm}, {"weak", weak}});
  }
  return {{"format", "mpv-cascade"},
          {"version", 1},
          {"lbp", {{"p", m.lbp.p}, {"r", m.lbp.r}}},
          {"window", kFeatureWindow},
          {"cells", kFeatureCells},
          {"training",
           {{"stages", m.requested_stages}, {"max_depth", m.max_depth},
            {"max_false_alarm", m.max_false_alarm}, {"min_hit_rate", m.min_hit_rate}}},
          {"stages", stages}};
}

inline CascadeModel cascade_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "mpv-cascade")
      throw FormatError("cascade model: unknown format tag");
    if (j.at("version").get<int>() != 1) throw UnsupportedFormat("cascade model: unsupported version");
    if (j.at("window").get<int>() != kFeatureWindow || j.at("cells").get<int>() != kFeatureCells)
      throw UnsupportedFormat("cascade model: unsupported feature geometry");
    CascadeModel m;
    m.lbp.p = j.at("lbp").at("p").get<int>();
    m.lbp.r = j.at("lbp").at("r").get<int>();
    if (m.lbp.p != 8 || m.lbp.r != 1) throw UnsupportedFormat("cascade model: only LBP p=8 r=1");
    const auto& tr = j.at("training");
    m.requested_stages = tr.at("stages").get<int>();
    m.max_depth = tr.at("max_depth").get<int>();
    m.max_false_alarm = tr.at("max_false_alarm").get<double>();
    m.min_hit_rate = tr.at("min_hit_rate").get<double>();
    for (const auto& js : j.at("stages")) {
      CascadeStage s;
      s.threshold = js.at("threshold").get<double>();
      s.hit_rate = js.at("hit_rate").get<double>();
      s.false_alarm = js.at("false_alarm").get<double>();
      for (const auto& jw : js.at("weak")) {
        RegressionTree t;
        t.weight = jw.at("weight").get<double>();
        for (const auto& jn : jw.at("nodes"))
          t.nodes.push_back({jn.at("feature").get<int>(), jn.at("threshold").get<int>(),
                             jn.at("left").get<int>(), jn.at("right").get<int>(),
                             jn.at("value").get<double>()});
        const int n = static_cast<int>(t.nodes.size());
        if (n == 0) throw FormatError("cascade model: empty tree");
        for (int i = 0; i < n; ++i) {
          const TreeNode& nd = t.nodes[i];
          if (nd.feature >= kFeatureCount || !std::isfinite(nd.value))
            throw FormatError("cascade model: bad tree node");
          if (nd.feature >= 0 && (nd.left <= i || nd.left >= n || nd.right <= i || nd.right >= n))
            throw FormatError("cascade model: bad child index");
        }
        s.weak.push_back(std::move(t));
      }
      m.stages.push_back(std::move(s));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("cascade model: ") + e.what());
  }
}

inline void save_cascade(const CascadeModel& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << cascade_to_json(m).dump(1) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

inline CascadeModel load_cascade(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return cascade_from_json(j);
}

}  // namespace mpv
