#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mpv/pipeline.hpp"
#include "test_util.hpp"

using mpv::testing::TempDir;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

CliRun cli(const std::string& args) {
  static int n = 0;
  const auto err = std::filesystem::temp_directory_path() / ("mpv_cli_err_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
  const std::string cmd = std::string(MPV_CLI_PATH) + " " + args + " 2>" + err.string();
  CliRun r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  std::filesystem::remove(err);
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// 320x240 road scene without obstacles, small enough to match quickly.
void write_scene(const TempDir& dir, int frames = 1) {
  const CliRun r = cli("synth -o " + q(dir.path()) + " --width 320 --height 240 --dmax 16 --no-obstacles --frames " +
                    std::to_string(frames));
  ASSERT_EQ(r.code, 0) << r.err;
}

}  // namespace

TEST(Cli, HelpExitsZero) {
  const CliRun r = cli("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"match", "detect", "train", "eval", "synth", "bench"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  EXPECT_EQ(cli("match --help").code, 0);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  const CliRun r = cli("match --left a --right b -o c --bogus");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(cli("match --left /nonexistent.pgm --right /nonexistent.pgm -o x.pgm").code, 2);
  EXPECT_EQ(cli("config --threads 0").code, 2);
}

TEST(Cli, RuntimeErrorsExitOne) {
  TempDir dir;
  mpv::testing::write_bytes(dir / "bad.pgm", "P5\n4 4\n255\n");
  const CliRun r = cli("match --left " + q(dir / "bad.pgm") + " --right " + q(dir / "bad.pgm") + " -o " +
                    q(dir / "o.pgm"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  mpv::testing::write_bytes(dir / "cfg.json", R"({"unknown": 1})");
  EXPECT_EQ(cli("config --config " + q(dir / "cfg.json")).code, 1);
}

TEST(Cli, ConfigPrintsEffectiveSettings) {
  const CliRun r = cli("config --dmax 48 --threads 2");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["d_max"], 48);
  EXPECT_EQ(j["threads"], 2);
  EXPECT_EQ(mpv::config_from_json(j).d_max, 48);
}

TEST(Cli, SynthMatchAndEval) {
  TempDir scene, pred;
  write_scene(scene);
  for (const char* f : {"000_left.pgm", "000_right.pgm", "000_gt.pfm", "000_scene.json"})
    EXPECT_TRUE(std::filesystem::exists(scene / f)) << f;

  const CliRun m = cli("match --left " + q(scene / "000_left.pgm") + " --right " + q(scene / "000_right.pgm") +
                    " --dmax 16 -o " + q(pred / "disp.png") + " --pfm " + q(pred / "000_gt.pfm"));
  ASSERT_EQ(m.code, 0) << m.err;
  const mpv::GrayImage img = mpv::load_image(pred / "disp.png");
  EXPECT_EQ(img.width(), 320);

  // the scene directory also holds the images; compare disparity files only
  TempDir gt;
  std::filesystem::copy_file(scene / "000_gt.pfm", gt / "000_gt.pfm");
  const CliRun e = cli("eval --pred " + q(pred.path()) + " --gt " + q(gt.path()) + " --tau 3");
  ASSERT_EQ(e.code, 0) << e.err;
  const auto rep = nlohmann::json::parse(e.out);
  EXPECT_LE(rep["mean_error_rate"].get<double>(), 0.1);
  EXPECT_EQ(rep["frames"].size(), 1u);
}

TEST(Cli, EvalOfIdenticalDirectoriesIsZero) {
  TempDir scene, gt;
  write_scene(scene);
  std::filesystem::copy_file(scene / "000_gt.pfm", gt / "000_gt.pfm");
  const CliRun r = cli("eval --pred " + q(gt.path()) + " --gt " + q(gt.path()) + " -o " + q(gt / "rep.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = nlohmann::json::parse(slurp(gt / "rep.json"));
  EXPECT_EQ(rep["mean_error_rate"].get<double>(), 0.0);
}

TEST(Cli, EvalNeedsInputs) {
  EXPECT_EQ(cli("eval").code, 1);
}

TEST(Cli, DetectWithoutModelReportsRoisOnly) {
  TempDir scene;
  write_scene(scene);
  const std::string args = "detect --left " + q(scene / "000_left.pgm") + " --right " +
                           q(scene / "000_right.pgm") + " --dmax 16 --no-timings";
  const CliRun r = cli(args + " --annotated " + q(scene / "ann.pgm"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["format"], "mpv-frame");
  EXPECT_TRUE(j["detections"].empty());
  EXPECT_FALSE(j.contains("timings_ms"));
  EXPECT_TRUE(j["road"]["valid"].get<bool>());
  bool warned = false;
  for (const auto& w : j["warnings"]) warned |= w.get<std::string>().find("no cascade model") != std::string::npos;
  EXPECT_TRUE(warned);
  EXPECT_TRUE(std::filesystem::exists(scene / "ann.pgm"));
  // the record does not depend on the thread count
  const CliRun r4 = cli(args + " --threads 4");
  EXPECT_EQ(r4.out, r.out);
}

TEST(Cli, SequenceEvaluation) {
  TempDir scene;
  write_scene(scene, 2);
  const CliRun r = cli("eval --sequence " + q(scene.path()) + " --dmax 16 --no-timings");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = nlohmann::json::parse(r.out);
  EXPECT_EQ(rep["frames_run"], 2);
  EXPECT_LE(rep["mean_error_rate"].get<double>(), 0.1);
}

TEST(Cli, TrainOnSmallCorpus) {
  TempDir dir;
  const CliRun s = cli("synth --corpus -o " + q(dir.path()) + " --positives 40 --negatives 40 --seed 3");
  ASSERT_EQ(s.code, 0) << s.err;
  const CliRun t = cli("train --pos " + q(dir / "pos") + " --neg " + q(dir / "neg") + " --stages 2 -o " +
                    q(dir / "model.json") + " --report " + q(dir / "report.json"));
  ASSERT_EQ(t.code, 0) << t.err;
  const mpv::CascadeModel m = mpv::load_cascade(dir / "model.json");
  EXPECT_GE(m.stages.size(), 1u);
  const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(rep["stages"].size(), m.stages.size());
  for (const auto& st : rep["stages"]) EXPECT_LE(st["false_alarm"].get<double>(), 0.5);
}
