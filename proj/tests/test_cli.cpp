#include <gtest/gtest.h>

#include <sstream>

#include "meshtrack/cli.hpp"

using namespace meshtrack;

namespace {

int call(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "meshtrack");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("meshtrack_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string path(const std::string& rel) const { return (root_ / rel).string(); }
  void write(const std::string& rel, const std::string& text) const {
    std::ofstream(root_ / rel, std::ios::binary) << text;
  }
  std::string synth_short() const {
    write("s.json", R"({"kind": "two_link_swing", "frames": 6})");
    EXPECT_EQ(call({"synth", path("s.json"), path("gt")}), kExitOk);
    return path("gt");
  }

  fs::path root_;
};

}  // namespace

TEST(Cli, UsageErrors) {
  std::string err;
  EXPECT_EQ(call({"dance"}, nullptr, &err), kExitUsage);
  EXPECT_NE(err.find("synth"), std::string::npos);
  EXPECT_EQ(call({}), kExitUsage);
  EXPECT_EQ(call({"track", "only_one_arg"}), kExitUsage);
  EXPECT_EQ(call({"track", "a", "b", "--lambda", "1.5"}), kExitUsage);
}

TEST_F(CliTest, MissingInputIsExitTwo) {
  std::string err;
  EXPECT_EQ(call({"track", path("nothing"), path("out")}, nullptr, &err), kExitInput);
  EXPECT_NE(err.find("error:"), std::string::npos);
  write("bad.json", "{");
  EXPECT_EQ(call({"synth", path("bad.json"), path("gt")}), kExitInput);
}

TEST_F(CliTest, SynthTrackEvalRender) {
  const std::string gt = synth_short();
  for (const char* f : {"mask_00001.pgm", "mask_00006.pgm", "flow_00005.flo", "frame_00001.pgm",
                        "truth.csv", "occlusion.csv", "scenario.json", "labels_00001.pgm"})
    EXPECT_TRUE(fs::exists(fs::path(gt) / f)) << f;

  std::string out;
  ASSERT_EQ(call({"track", gt, path("run"), "--vertices", "120"}, &out), kExitOk);
  EXPECT_NE(out.find("external"), std::string::npos);
  for (const char* f : {"trajectories.csv", "frames.csv", "diagnostics.csv", "mesh.off", "config.json"})
    EXPECT_TRUE(fs::exists(root_ / "run" / f)) << f;
  const auto cfg = TrackerConfig::parse(detail::read_text(root_ / "run" / "config.json"));
  EXPECT_EQ(cfg.mesh.target_vertex_count, 120);

  ASSERT_EQ(call({"eval", path("run/trajectories.csv"), gt}, &out), kExitOk);
  EXPECT_EQ(out.rfind("tracking_length_pct,100.0\nmean_offset_px,", 0), 0u);
  EXPECT_NE(out.find("\n6,"), std::string::npos);

  ASSERT_EQ(call({"render", path("run/trajectories.csv"), gt, path("png"), "--stride", "4"}), kExitOk);
  int pngs = 0;
  for (const auto& e : fs::directory_iterator(root_ / "png")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 2);  // frames 1 and 5 of 6
  EXPECT_TRUE(fs::exists(root_ / "png" / "overlay_00005.png"));
}

TEST_F(CliTest, EvalTruthAgainstItself) {
  const std::string gt = synth_short();
  std::string out;
  ASSERT_EQ(call({"eval", gt + "/truth.csv", gt}, &out), kExitOk);
  std::istringstream in(out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "tracking_length_pct,100.0");
  std::getline(in, line);
  EXPECT_EQ(line, "mean_offset_px,0.000000");
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.substr(line.find(',')), ",0.000000");
  }
  EXPECT_EQ(rows, 6);
}

TEST_F(CliTest, ConfigFileAndOverrides) {
  const std::string gt = synth_short();
  write("c.json", R"({"mesh": {"target_vertex_count": 90}, "io": {"write_diagnostics": false}})");
  ASSERT_EQ(call({"track", gt, path("run"), "--config", path("c.json"), "--theta", "0.01"}), kExitOk);
  const auto cfg = TrackerConfig::parse(detail::read_text(root_ / "run" / "config.json"));
  EXPECT_EQ(cfg.mesh.target_vertex_count, 90);
  EXPECT_DOUBLE_EQ(cfg.deform.theta, 0.01);
  EXPECT_FALSE(fs::exists(root_ / "run" / "diagnostics.csv"));
  // The written config reproduces the run.
  ASSERT_EQ(call({"track", gt, path("again"), "--config", path("run/config.json")}), kExitOk);
  EXPECT_EQ(detail::read_text(root_ / "run" / "trajectories.csv"),
            detail::read_text(root_ / "again" / "trajectories.csv"));
  write("bad.json", R"({"deform": {"gamma": 1}})");
  EXPECT_EQ(call({"track", gt, path("x"), "--config", path("bad.json")}), kExitInput);
}

TEST_F(CliTest, ExternalFlowRequiredButMissing) {
  const std::string gt = synth_short();
  fs::create_directories(root_ / "masks");
  for (int t = 1; t <= 6; ++t)
    fs::copy_file(fs::path(gt) / frame_name("mask", t, "pgm"), root_ / "masks" / frame_name("mask", t, "pgm"));
  write("c.json", R"({"flow": {"source": "external"}})");
  EXPECT_EQ(call({"track", path("masks"), path("run"), "--config", path("c.json")}), kExitInput);
  ASSERT_EQ(call({"track", path("masks"), path("run"), "--config", path("c.json"), "--flows", gt}), kExitOk);
}
