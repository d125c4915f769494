// mpvstereo: command line front end of the mpv library.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mpv/mpv.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Common {
  std::string config;
  int threads = 0;
  int dmax = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--threads", c.threads, "concurrency width (results do not depend on it)")
      ->check(CLI::Range(1, 256));
  cmd->add_option("--dmax", c.dmax, "maximum disparity")->check(CLI::Range(4, 1024));
}

mpv::PipelineConfig make_config(const Common& c) {
  mpv::PipelineConfig cfg = c.config.empty() ? mpv::PipelineConfig{} : mpv::load_config(c.config);
  if (c.threads > 0) cfg.threads = c.threads;
  if (c.dmax > 0) cfg.d_max = c.dmax;
  cfg.validate();
  return cfg;
}

std::optional<mpv::Rectification> load_rectification(const mpv::PipelineConfig& cfg) {
  if (cfg.remap_left.empty() && cfg.remap_right.empty()) return std::nullopt;
  if (cfg.remap_left.empty() || cfg.remap_right.empty())
    throw mpv::InvalidArgument("config: remap_left and remap_right must be given together");
  return mpv::Rectification{mpv::load_remap_table(cfg.remap_left), mpv::load_remap_table(cfg.remap_right)};
}

mpv::StereoPair load_pair(const std::string& left, const std::string& right) {
  mpv::GrayImage l = mpv::load_image(left), r = mpv::load_image(right);
  if (l.width() != r.width() || l.height() != r.height())
    throw mpv::InvalidArgument("left and right images differ in size");
  return mpv::StereoPair(std::move(l), std::move(r));
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw mpv::IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw mpv::IoError("failed writing '" + path + "'");
}

std::string zero_pad(std::size_t i, int width = 3) {
  std::string s = std::to_string(i);
  return std::string(std::max<int>(0, width - static_cast<int>(s.size())), '0') + s;
}

// -- match -------------------------------------------------------------------

struct MatchArgs {
  Common common;
  std::string left, right, output, pfm;
};

int run_match(const MatchArgs& a) {
  const mpv::PipelineConfig cfg = make_config(a.common);
  const auto rect = load_rectification(cfg);
  const mpv::MatchedFrame m = mpv::match_stage(load_pair(a.left, a.right), cfg, rect ? &*rect : nullptr);
  mpv::save_image(mpv::disparity_to_gray(m.disparity), a.output);
  if (!a.pfm.empty()) mpv::save_pfm(m.disparity, a.pfm);
  std::cerr << "disparity " << m.disparity.width << "x" << m.disparity.height << ", d_max "
            << cfg.d_max << ", " << m.timings.match_ms << " ms\n";
  return 0;
}

// -- detect ------------------------------------------------------------------

struct DetectArgs {
  Common common;
  std::string left, right, model, output = "-", annotated;
  bool no_timings = false;
};

int run_detect(const DetectArgs& a) {
  mpv::PipelineConfig cfg = make_config(a.common);
  if (!a.model.empty()) cfg.model_path = a.model;
  std::optional<mpv::CascadeModel> model;
  if (!cfg.model_path.empty()) model = mpv::load_cascade(cfg.model_path);
  else std::cerr << "warning: no cascade model given, reporting ROIs only\n";
  const auto rect = load_rectification(cfg);
  const mpv::StereoPair pair = load_pair(a.left, a.right);
  const mpv::FrameResult r = mpv::run_frame(pair, cfg, model ? &*model : nullptr, rect ? &*rect : nullptr);
  write_text(a.output, mpv::frame_to_json(r, cfg, {!a.no_timings}).dump(2) + "\n");
  if (!a.annotated.empty()) {
    mpv::GrayImage img = rect ? mpv::apply_remap(pair.left, rect->left) : pair.left;
    for (const auto& roi : r.rois) mpv::draw_box(img, roi.search, 0);
    for (const auto& d : r.detections) mpv::draw_box(img, d.box, 255);
    mpv::save_image(img, a.annotated);
  }
  return 0;
}

// -- train -------------------------------------------------------------------

struct TrainArgs {
  std::string pos, neg, output, report;
  mpv::CascadeTrainConfig cfg;
};

int run_train(const TrainArgs& a) {
  const auto pos = mpv::load_image_dir(a.pos);
  const auto neg = mpv::load_image_dir(a.neg);
  std::cerr << "training on " << pos.size() << " positives, " << neg.size() << " negatives\n";
  const mpv::CascadeTrainResult r = mpv::train_cascade(pos, neg, a.cfg);
  json stages = json::array();
  for (std::size_t k = 0; k < r.reports.size(); ++k) {
    const auto& s = r.reports[k];
    std::fprintf(stderr, "stage %2zu: %3d weak, %4d pos, %4d neg, hit %.4f, false alarm %.4f\n",
                 k + 1, s.weak_count, s.positives, s.negatives, s.hit_rate, s.false_alarm);
    stages.push_back({{"weak", s.weak_count}, {"positives", s.positives}, {"negatives", s.negatives},
                      {"threshold", s.threshold}, {"hit_rate", s.hit_rate},
                      {"false_alarm", s.false_alarm}});
  }
  if (!r.stop_reason.empty()) std::cerr << "stopped early: " << r.stop_reason << "\n";
  mpv::save_cascade(r.model, a.output);
  if (!a.report.empty())
    write_text(a.report, json{{"stages", stages},
                              {"completed", r.model.stages.size()},
                              {"requested", a.cfg.stages},
                              {"stop_reason", r.stop_reason},
                              {"mining_draws", r.mining_draws}}
                                 .dump(2) + "\n");
  return 0;
}

// -- eval --------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string pred, gt, sequence, model, output = "-";
  double tau = 3.0;
  bool no_timings = false;
};

int run_eval(const EvalArgs& a) {
  mpv::EvalReport report;
  if (!a.sequence.empty()) {
    mpv::PipelineConfig cfg = make_config(a.common);
    if (!a.model.empty()) cfg.model_path = a.model;
    std::optional<mpv::CascadeModel> model;
    if (!cfg.model_path.empty()) model = mpv::load_cascade(cfg.model_path);
    const auto rect = load_rectification(cfg);
    const mpv::SequenceResult s =
        mpv::run_sequence(a.sequence, cfg, model ? &*model : nullptr, rect ? &*rect : nullptr, a.tau);
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
    report = s.report;
  } else {
    if (a.pred.empty() || a.gt.empty())
      throw mpv::InvalidArgument("eval needs --pred and --gt, or --sequence");
    report = mpv::evaluate_directories(a.pred, a.gt, a.tau);
  }
  write_text(a.output, mpv::report_to_json(report, !a.no_timings).dump(2) + "\n");
  return 0;
}

// -- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string output;
  int frames = 1;
  std::uint64_t seed = 1;
  int width = 640, height = 480, dmax = 32;
  std::vector<std::string> obstacles;
  bool no_obstacles = false;
  bool corpus = false;
  int positives = 3000, negatives = 400;
};

mpv::BoxObstacle parse_obstacle(const std::string& text) {
  // DIST[,LATERAL[,WIDTH[,HEIGHT]]] in metres
  mpv::BoxObstacle o;
  std::vector<double> v;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find(',', start);
    const std::string part = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw mpv::InvalidArgument("bad --obstacle value '" + text + "'");
    }
    if (end == std::string::npos) break;
    start = end + 1;
  }
  if (v.empty() || v.size() > 4) throw mpv::InvalidArgument("bad --obstacle value '" + text + "'");
  o.distance = v[0];
  if (v.size() > 1) o.x_center = v[1];
  if (v.size() > 2) o.width = v[2];
  if (v.size() > 3) o.height = v[3];
  return o;
}

int run_synth(const SynthArgs& a) {
  fs::create_directories(a.output);
  if (a.corpus) {
    const mpv::Corpus c = mpv::make_obstacle_corpus({a.positives, a.negatives, a.seed});
    mpv::write_corpus(c, a.output);
    std::cerr << "wrote " << c.positives.size() << " positives and " << c.negatives.size()
              << " negatives under " << a.output << "\n";
    return 0;
  }
  mpv::SceneSpec spec;
  spec.width = a.width;
  spec.height = a.height;
  spec.d_max = a.dmax;
  if (!a.no_obstacles) {
    if (a.obstacles.empty()) spec.obstacles.push_back(mpv::BoxObstacle{});
    for (const auto& o : a.obstacles) spec.obstacles.push_back(parse_obstacle(o));
  }
  for (int i = 0; i < a.frames; ++i) {
    spec.seed = a.seed + static_cast<std::uint64_t>(i);
    const mpv::Scene s = mpv::generate_synthetic_scene(spec);
    const std::string id = zero_pad(static_cast<std::size_t>(i));
    const fs::path dir(a.output);
    mpv::save_image(s.pair.left, dir / (id + "_left.pgm"));
    mpv::save_image(s.pair.right, dir / (id + "_right.pgm"));
    mpv::save_pfm(s.gt, dir / (id + "_gt.pfm"));
    json boxes = json::array();
    for (const auto& b : s.boxes)
      boxes.push_back({{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}, {"distance_m", b.distance},
                       {"disparity", b.mean_disparity}});
    write_text((dir / (id + "_scene.json")).string(),
               json{{"seed", spec.seed}, {"width", spec.width}, {"height", spec.height},
                    {"focal_px", spec.focal_px}, {"baseline_m", spec.baseline},
                    {"camera_height_m", spec.camera_height}, {"obstacles", boxes}}
                       .dump(2) + "\n");
  }
  std::cerr << "wrote " << a.frames << " frame(s) under " << a.output << "\n";
  return 0;
}

// -- bench -------------------------------------------------------------------

struct BenchArgs {
  Common common;
  int width = 640, height = 480, frames = 3;
  std::string model;
};

int run_bench(const BenchArgs& a) {
  mpv::PipelineConfig cfg = make_config(a.common);
  if (!a.model.empty()) cfg.model_path = a.model;
  std::optional<mpv::CascadeModel> model;
  if (!cfg.model_path.empty()) model = mpv::load_cascade(cfg.model_path);
  mpv::SceneSpec spec;
  spec.width = a.width;
  spec.height = a.height;
  spec.d_max = cfg.d_max;
  spec.obstacles.push_back(mpv::BoxObstacle{});
  const mpv::Scene s = mpv::generate_synthetic_scene(spec);
  mpv::StageTimings sum;
  double ratio = 0;
  for (int i = 0; i < a.frames; ++i) {
    const mpv::FrameResult r = mpv::run_frame(s.pair, cfg, model ? &*model : nullptr);
    sum.rectify_ms += r.timings.rectify_ms;
    sum.match_ms += r.timings.match_ms;
    sum.road_ms += r.timings.road_ms;
    sum.roi_ms += r.timings.roi_ms;
    sum.detect_ms += r.timings.detect_ms;
    ratio = r.counter.ratio(a.width, a.height, cfg.d_max);
  }
  const double n = a.frames;
  json j = {{"width", a.width}, {"height", a.height}, {"d_max", cfg.d_max}, {"frames", a.frames},
            {"threads", cfg.threads}, {"node_ratio", ratio},
            {"mean_ms",
             {{"match", sum.match_ms / n}, {"road", sum.road_ms / n}, {"roi", sum.roi_ms / n},
              {"detect", sum.detect_ms / n}, {"total", sum.total() / n}}},
            {"fps", n * 1000.0 / sum.total()}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo matching, road and obstacle detection"};
  app.require_subcommand(1);

  MatchArgs match;
  auto* m = app.add_subcommand("match", "compute a disparity map");
  add_common(m, match.common);
  m->add_option("--left", match.left, "left image (PGM/PNG)")->required()->check(CLI::ExistingFile);
  m->add_option("--right", match.right, "right image (PGM/PNG)")->required()->check(CLI::ExistingFile);
  m->add_option("-o,--output", match.output, "8-bit disparity image")->required();
  m->add_option("--pfm", match.pfm, "also write exact disparities as PFM");

  DetectArgs detect;
  auto* d = app.add_subcommand("detect", "run the full pipeline on one pair");
  add_common(d, detect.common);
  d->add_option("--left", detect.left, "left image")->required()->check(CLI::ExistingFile);
  d->add_option("--right", detect.right, "right image")->required()->check(CLI::ExistingFile);
  d->add_option("--model", detect.model, "cascade model (JSON)")->check(CLI::ExistingFile);
  d->add_option("-o,--output", detect.output, "frame record, '-' for stdout");
  d->add_option("--annotated", detect.annotated, "left image with ROIs and detections drawn");
  d->add_flag("--no-timings", detect.no_timings, "omit wall-clock timings from the record");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a cascade from window corpora");
  t->add_option("--pos", train.pos, "directory of positive windows")->required()->check(CLI::ExistingDirectory);
  t->add_option("--neg", train.neg, "directory of negative images")->required()->check(CLI::ExistingDirectory);
  t->add_option("-o,--output", train.output, "model file")->required();
  t->add_option("--report", train.report, "per-stage training report (JSON)");
  t->add_option("--stages", train.cfg.stages, "stages")->check(CLI::Range(1, 64));
  t->add_option("--max-depth", train.cfg.max_depth, "weak tree depth")->check(CLI::Range(1, 8));
  t->add_option("--max-false-alarm", train.cfg.max_false_alarm, "per-stage false-alarm cap");
  t->add_option("--min-hit-rate", train.cfg.min_hit_rate, "per-stage hit-rate floor");
  t->add_option("--max-weak", train.cfg.max_weak_per_stage, "weak classifiers per stage at most");
  t->add_option("--seed", train.cfg.seed, "negative mining seed");
  t->add_option("--threads", train.cfg.threads, "split search width")->check(CLI::Range(1, 256));

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "disparity error rates");
  add_common(e, ev.common);
  e->add_option("--pred", ev.pred, "directory of predicted disparities")->check(CLI::ExistingDirectory);
  e->add_option("--gt", ev.gt, "directory of ground truth, same file names")->check(CLI::ExistingDirectory);
  e->add_option("--sequence", ev.sequence, "run the pipeline over NNN_left/NNN_right pairs")
      ->check(CLI::ExistingDirectory);
  e->add_option("--model", ev.model, "cascade model for --sequence")->check(CLI::ExistingFile);
  e->add_option("--tau", ev.tau, "error threshold in pixels")->check(CLI::NonNegativeNumber);
  e->add_option("-o,--output", ev.output, "report, '-' for stdout");
  e->add_flag("--no-timings", ev.no_timings, "omit timings from the report");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "write synthetic scenes or a training corpus");
  s->add_option("-o,--output", synth.output, "output directory")->required();
  s->add_option("--frames", synth.frames, "scenes to write")->check(CLI::Range(1, 10000));
  s->add_option("--seed", synth.seed, "texture seed of the first frame");
  s->add_option("--width", synth.width, "image width")->check(CLI::Range(8, 8192));
  s->add_option("--height", synth.height, "image height")->check(CLI::Range(8, 8192));
  s->add_option("--dmax", synth.dmax, "maximum disparity")->check(CLI::Range(1, 1024));
  s->add_option("--obstacle", synth.obstacles, "box obstacle DIST[,LATERAL[,WIDTH[,HEIGHT]]] in metres");
  s->add_flag("--no-obstacles", synth.no_obstacles, "road and wall only");
  s->add_flag("--corpus", synth.corpus, "write pos/ and neg/ training windows instead");
  s->add_option("--positives", synth.positives, "corpus positives")->check(CLI::Range(1, 1000000));
  s->add_option("--negatives", synth.negatives, "corpus negatives")->check(CLI::Range(1, 1000000));

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "time the pipeline on a synthetic scene");
  add_common(b, bench.common);
  b->add_option("--width", bench.width, "image width")->check(CLI::Range(8, 8192));
  b->add_option("--height", bench.height, "image height")->check(CLI::Range(8, 8192));
  b->add_option("--frames", bench.frames, "repetitions")->check(CLI::Range(1, 1000));
  b->add_option("--model", bench.model, "cascade model")->check(CLI::ExistingFile);

  Common cfgargs;
  auto* c = app.add_subcommand("config", "print the effective configuration");
  add_common(c, cfgargs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::cerr << "error: " << ex.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*m) return run_match(match);
    if (*d) return run_detect(detect);
    if (*t) return run_train(train);
    if (*e) return run_eval(ev);
    if (*s) return run_synth(synth);
    if (*b) return run_bench(bench);
    if (*c) {
      std::cout << mpv::config_to_json(make_config(cfgargs)).dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 1;
}
