// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "json.hpp"
#include "mpv/mpv.hpp"

using namespace mpv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("mpv_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// --- 1: fast recurrence equals the direct one -------------------------------

Outcome fast_recurrence() {
  const auto t0 = Clock::now();
  std::mt19937 rng(2024);
  double worst = 0.0;
  bool ops_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const int len = 1 + static_cast<int>(rng() % 16), m = 1 + static_cast<int>(rng() % 16);
    std::uniform_real_distribution<double> cost(0.0, 255.0);
    std::vector<double> costs(static_cast<std::size_t>(len) * m), grads(len);
    for (double& c : costs) c = cost(rng);
    for (double& g : grads) g = static_cast<double>(rng() % 2);
    PenaltyParams p;
    p.lambda = std::array<double, 3>{0.5, 1.0, 2.0}[trial % 3];
    SweepInput in;
    in.costs = costs;
    in.m = m;
    in.gradients = grads;
    in.asymmetric_up = trial % 2 == 1;
    std::size_t ops = 0;
    const PathTrellis fast = viterbi_sweep_fast(in, p, &ops);
    const PathTrellis direct = viterbi_sweep_direct(in, p);
    for (std::size_t i = 0; i < fast.energy.size(); ++i)
      worst = std::max(worst, std::abs(fast.energy[i] - direct.energy[i]));
    // per path position at most 2m operations
    if (len > 1 && ops > static_cast<std::size_t>(len - 1) * 2 * m) ops_ok = false;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && ops_ok && secs < 5.0,
          fmt("max |fast - direct| = %.3g, ops <= 2m per position: %s, %.2f s", worst, ops_ok ? "yes" : "no",
              secs)};
}

// --- 2: backtracked path is the exhaustive optimum --------------------------

Outcome exhaustive_optimum() {
  const auto t0 = Clock::now();
  std::mt19937 rng(77);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int len = 1 + static_cast<int>(rng() % 6), m = 1 + static_cast<int>(rng() % 4);
    // costs on the scale of a few penalty steps so transitions matter
    std::uniform_real_distribution<double> cost(0.0, 6.0);
    std::vector<double> costs(static_cast<std::size_t>(len) * m), grads(len);
    for (double& c : costs) c = cost(rng);
    for (double& g : grads) g = static_cast<double>(rng() % 2);
    PenaltyParams p;
    p.lambda = std::array<double, 3>{0.5, 1.0, 2.0}[trial % 3];
    SweepInput in;
    in.costs = costs;
    in.m = m;
    in.gradients = grads;
    in.asymmetric_up = trial % 2 == 1;
    const auto seq = viterbi_backtrack(in, viterbi_sweep_fast(in, p), p);
    std::vector<int> cand(len, 0);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
      best = std::min(best, path_energy(in, cand, p));
      int k = 0;
      while (k < len && ++cand[k] == m) cand[k++] = 0;
      if (k == len) break;
    }
    if (path_energy(in, seq, p) != best) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0, fmt("%d of 200 instances differ from brute force, %.2f s", mismatches, secs)};
}

// --- 3: multi-scale node count bound ------------------------------------------

Outcome multiscale_bound() {
  double worst = 0.0;
  std::string detail;
  for (int size : {64, 128})
    for (int d : {16, 32}) {
      const SyntheticPair s = planar_pair(size, size, 0.02, 0.01, d / 4.0, d, 5 + size + d);
      const MultiscaleResult r = run_multiscale_mpv(s.pair, d, MultiscaleParams{});
      const double ratio = r.counter.ratio(size, size, d);
      worst = std::max(worst, ratio);
      detail += fmt("%dx%d d=%d: %.4f; ", size, size, d, ratio);
    }
  return {worst <= 0.35, detail + fmt("max %.4f (ceiling 0.35)", worst)};
}

// --- 4: disparity accuracy on synthetic planes --------------------------------

Outcome synthetic_accuracy() {
  const auto t0 = Clock::now();
  const int n = 256, d_max = 32, k = 9;
  const SyntheticPair flat = planar_pair(n, n, 0.0, 0.0, k, d_max, 41);
  const DisparityMap df = run_multiscale_mpv(flat.pair, d_max, MultiscaleParams{}).disparity;
  int good = 0, total = 0;
  for (int y = 4; y < n - 4; ++y)
    for (int x = d_max; x < n - 4; ++x, ++total) good += df.is_valid(x, y) && df.at(x, y) == k;
  const double frac = static_cast<double>(good) / total;

  const double a = 0.05;
  const SyntheticPair slant = planar_pair(n, n, a, 0.02, 3.0, d_max, 42);
  const DisparityMap ds = run_multiscale_mpv(slant.pair, d_max, MultiscaleParams{}).disparity;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, cnt = 0;
  for (int y = 4; y < n - 4; ++y)
    for (int x = d_max; x < n - 4; ++x) {
      if (!ds.is_valid(x, y)) continue;
      sx += x;
      sy += ds.at(x, y);
      sxx += double(x) * x;
      sxy += double(x) * ds.at(x, y);
      ++cnt;
    }
  const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  const double secs = seconds_since(t0);
  return {frac >= 0.99 && std::abs(slope - a) <= 0.1 && secs < 30.0,
          fmt("plane k=%d: %.4f exact; slanted a=%.2f: fitted gradient %.4f; %.1f s", k, frac, a, slope, secs)};
}

// --- 5: road plane and road path ----------------------------------------------

Outcome road_recovery() {
  SceneSpec spec;  // camera 1.5 m above the road, default optics
  const Scene scene = generate_synthetic_scene(spec);
  const StereoGeometry g = spec.geometry();
  std::vector<PlaneSample> samples;
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; x += 2) {
      const int u = scene.gt.at(x, y);
      if (scene.gt.is_valid(x, y) && u > 0 && std::abs(plane_disparity(x, y, Plane{0, 1, 0, 1.5}, g) - u) < 0.5)
        samples.push_back({double(x), double(y), double(u)});
    }
  const Plane p = fit_plane(samples, g);
  const double angle = std::acos(std::min(1.0, std::abs(p.b) / p.norm())) * 180.0 / std::numbers::pi;
  const double offset_err = std::abs(p.d / p.norm() - spec.camera_height);

  const RoadModel road = detect_road(scene.gt, g, RoadParams{});
  // Without obstacles every row has a single disparity, so the ground-truth
  // v-disparity image is a staircase of one cell per row. Each path node must
  // be such a cell, and the path must span every disparity the rows reach.
  std::vector<int> row_u(spec.height);
  int u_min = spec.d_max, u_max = 0;
  bool single = true;
  for (int y = 0; y < spec.height; ++y) {
    row_u[y] = scene.gt.at(0, y);
    for (int x = 1; x < spec.width; ++x) single = single && scene.gt.at(x, y) == row_u[y];
    u_min = std::min(u_min, row_u[y]);
    u_max = std::max(u_max, row_u[y]);
  }
  bool on_stair = single && road.valid && !road.path.empty();
  for (std::size_t i = 0; on_stair && i < road.path.rows.size(); ++i)
    on_stair = row_u[road.path.rows[i]] == road.path.first + static_cast<int>(i);
  const bool covers = on_stair && road.path.first == u_min && road.path.last() == u_max;
  const double road_angle =
      std::acos(std::min(1.0, std::abs(road.plane.b) / road.plane.norm())) * 180.0 / std::numbers::pi;
  return {angle <= 1.0 && offset_err <= 1e-2 && road_angle <= 1.0 &&
              std::abs(road.plane.d / road.plane.norm() - 1.5) <= 1e-2 && on_stair && covers,
          fmt("fit: normal %.4f deg, offset err %.2g m; pipeline plane %.4f deg, d=%.4f; path on staircase for "
              "disparities %d..%d: %s",
              angle, offset_err, road_angle, road.plane.d, road.path.first, road.path.last(),
              on_stair && covers ? "yes" : "no")};
}

// --- 6: small-object height test ------------------------------------------------

Outcome small_objects() {
  std::mt19937_64 rng(6);
  auto U = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const StereoGeometry g = StereoGeometry::centred(640, 480, 8.0 / 0.006, 0.12);
  const double sh = 0.05;
  int wrong = 0;
  for (int draw = 0; draw < 100; ++draw) {
    Plane pl{U(-0.05, 0.05), 1.0, U(-0.05, 0.05), U(1.2, 1.8)};
    const double s = pl.norm();
    pl = {pl.a / s, pl.b / s, pl.c / s, pl.d / s};
    const double X = U(-3.0, 3.0), Z = U(5.0, 30.0);
    const std::array<bool, 3> expect{false, true, false};
    const std::array<double, 3> heights{0.0, sh / 2, 2 * sh};
    for (int i = 0; i < 3; ++i) {
      // point `h` above the plane; up is -Y
      const double Y = (pl.d - pl.a * X - pl.c * Z - heights[i]) / pl.b;
      const double x = g.cx + g.focal_px * X / Z, y = g.cy + g.focal_px * Y / Z;
      const double u = g.focal_px * g.baseline_m / Z;
      if (classify_small_object(x, y, u, pl, g, sh, true) != expect[i]) ++wrong;
    }
  }
  return {wrong == 0, fmt("%d of 300 classifications wrong", wrong)};
}

// --- 7: cascade training contract -----------------------------------------------

fs::path g_model_path;

Outcome cascade_contract() {
  const auto t0 = Clock::now();
  const Corpus train = make_obstacle_corpus({3000, 400, 1});
  CascadeTrainConfig cfg;
  cfg.stages = 17;
  cfg.max_depth = 2;
  const CascadeTrainResult r = train_cascade(train.positives, train.negatives, cfg);
  const double train_secs = seconds_since(t0);
  g_model_path = work_dir() / "model.json";
  save_cascade(r.model, g_model_path);

  bool stages_ok = true;
  double cumulative = 1.0, worst_fa = 0.0, worst_hit = 1.0;
  for (const auto& s : r.reports) {
    cumulative *= s.false_alarm;
    worst_fa = std::max(worst_fa, s.false_alarm);
    worst_hit = std::min(worst_hit, s.hit_rate);
    stages_ok = stages_ok && s.false_alarm <= 0.5 && s.hit_rate >= 0.99;
  }
  const bool complete = r.model.stages.size() == 17 && r.stop_reason.empty();

  const Corpus held = make_obstacle_corpus({200, 200, 2});
  int tp = 0, tn = 0;
  double rejected_stages = 0;
  int rejected = 0;
  for (const auto& im : held.positives) tp += cascade_classify(im, r.model).accept;
  for (const auto& im : held.negatives) {
    const CascadeDecision d = cascade_classify(im, r.model);
    tn += !d.accept;
  }
  // short-circuit depth on every rejected held-out window, whole or cropped
  std::mt19937 rng(9);
  for (const auto& im : held.negatives)
    for (int k = 0; k < 10; ++k) {
      const int side = 24 + static_cast<int>(rng() % (std::min(im.width(), im.height()) - 23));
      const int x = static_cast<int>(rng() % (im.width() - side + 1)), y = static_cast<int>(rng() % (im.height() - side + 1));
      const CascadeDecision d = cascade_classify(im, x, y, side, side, r.model);
      if (!d.accept) {
        rejected_stages += d.stages_evaluated;
        ++rejected;
      }
    }
  const double accuracy = static_cast<double>(tp + tn) / 400.0;
  const double mean_rejected = rejected ? rejected_stages / rejected : 0.0;
  return {complete && stages_ok && accuracy >= 0.85 && mean_rejected < 0.5 * 17,
          fmt("%zu/17 stages, worst stage FA %.3f, worst hit %.4f, cumulative FA %.2e; held-out accuracy %.3f "
              "(TP %d/200, TN %d/200); mean stages on %d rejected windows %.2f; training %.0f s",
              r.model.stages.size(), worst_fa, worst_hit, cumulative, accuracy, tp, tn, rejected, mean_rejected,
              train_secs)};
}

// --- 8: SSIM and LBP unit properties ----------------------------------------------

Outcome ssim_lbp_properties() {
  const auto t0 = Clock::now();
  CostParams p;
  bool range_ok = true, self_zero = true;
  double worst_rel = 0.0;
  for (std::uint32_t seed = 0; seed < 3; ++seed) {
    std::mt19937 rng(seed);
    GrayImage a(48, 40), b(48, 40);
    for (auto& v : a.pixels()) v = static_cast<std::uint8_t>(rng() % 256);
    for (auto& v : b.pixels()) v = static_cast<std::uint8_t>(rng() % 256);
    const PatchStats sa(a, p), sb(b, p);
    const int r = p.radius();
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 48; ++x) {
        if (ssim_cost(sa, sa, x, y, 0, p) != 0.0) self_zero = false;
        for (int u = 0; u <= 8; ++u) {
          const double c = ssim_cost(sa, sb, x, y, u, p);
          if (!(c >= 0.0 && c <= p.range)) range_ok = false;
          if (x - u < 0) continue;
          // direct window moments with replicated borders
          double ma = 0, mb = 0, n = 0;
          for (int j = -r; j <= r; ++j)
            for (int i = -r; i <= r; ++i) {
              ma += a.clamped(x + i, y + j);
              mb += b.clamped(x - u + i, y + j);
              ++n;
            }
          ma /= n;
          mb /= n;
          double va = 0, vb = 0, cv = 0;
          for (int j = -r; j <= r; ++j)
            for (int i = -r; i <= r; ++i) {
              const double da = a.clamped(x + i, y + j) - ma, db = b.clamped(x - u + i, y + j) - mb;
              va += da * da / n;
              vb += db * db / n;
              cv += da * db / n;
            }
          const PatchMoments m = patch_moments(sa, sb, x, y, u);
          for (auto [got, want] : {std::pair{m.mean_a(), ma}, std::pair{m.mean_b(), mb}, std::pair{m.var_a(), va},
                                   std::pair{m.var_b(), vb}, std::pair{m.covariance(), cv}})
            worst_rel = std::max(worst_rel, std::abs(got - want) / std::max(1.0, std::abs(want)));
        }
      }
  }
  int lbp_changed = 0;
  std::mt19937 rng(123);
  for (int w = 0; w < 100; ++w) {
    const int side = 24 + static_cast<int>(rng() % 50);
    GrayImage win(side, side), moved(side, side);
    const int shift = 1 + static_cast<int>(rng() % 60);
    for (std::size_t i = 0; i < win.pixels().size(); ++i) {
      win.pixels()[i] = static_cast<std::uint8_t>(rng() % 190);
      moved.pixels()[i] = static_cast<std::uint8_t>(win.pixels()[i] + shift);
    }
    if (extract_features(win) != extract_features(moved)) ++lbp_changed;
  }
  const double secs = seconds_since(t0);
  return {range_ok && self_zero && worst_rel <= 1e-9 && lbp_changed == 0 && secs < 5.0,
          fmt("cost in [0, %.0f]: %s, self-match zero: %s, max relative moment error %.2g, LBP features changed "
              "by a gray shift in %d of 100 windows, %.2f s",
              p.range, range_ok ? "yes" : "no", self_zero ? "yes" : "no", worst_rel, lbp_changed, secs)};
}

// --- 9: end-to-end determinism ----------------------------------------------------

int run_cli(const std::string& args) {
  const int status = std::system((std::string(MPV_CLI_PATH) + " " + args).c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Outcome end_to_end() {
  if (g_model_path.empty() || !fs::exists(g_model_path)) return {false, "no trained model available"};
  const fs::path dir = work_dir() / "scene";
  const std::string q = "'" + dir.string() + "'";
  if (run_cli("synth -o " + q + " --obstacle 10 2>/dev/null") != 0) return {false, "synth failed"};
  const std::string base = "detect --left " + q + "/000_left.pgm --right " + q + "/000_right.pgm --model '" +
                           g_model_path.string() + "' --no-timings";
  if (run_cli(base + " --threads 1 -o " + q + "/t1.json") != 0 ||
      run_cli(base + " --threads 4 -o " + q + "/t4.json") != 0)
    return {false, "detect failed"};
  const std::string a = slurp(dir / "t1.json"), b = slurp(dir / "t4.json");
  const auto j = nlohmann::json::parse(a);
  const auto& dets = j["detections"];
  const double dist = dets.size() == 1 ? dets[0]["distance_m"].get<double>() : -1.0;
  return {a == b && dets.size() == 1 && std::abs(dist - 10.0) <= 0.5,
          fmt("records identical: %s, %zu detection(s), distance %.3f m", a == b ? "yes" : "no", dets.size(), dist)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"fast recurrence equals direct recurrence", fast_recurrence},
      {"backtracked path is the exhaustive optimum", exhaustive_optimum},
      {"multi-scale node evaluations <= 0.35 mnd", multiscale_bound},
      {"synthetic plane disparity accuracy", synthetic_accuracy},
      {"road plane and road path recovery", road_recovery},
      {"small-object height classification", small_objects},
      {"cascade training contract", cascade_contract},
      {"SSIM and LBP unit properties", ssim_lbp_properties},
      {"end-to-end determinism and distance", end_to_end},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " ("
              << o.detail << ")" << std::endl;
  }
  std::error_code ec;
  fs::remove_all(work_dir(), ec);
  return failed == 0 ? 0 : 1;
}
