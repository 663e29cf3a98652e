#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <regex>
#include <sstream>

#include "support.hpp"

using namespace ecnn;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int status = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string command = std::string(ECNN_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = ::popen(command.c_str(), "r");
  RunResult r;
  if (!pipe) return r;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string field(const std::string& out, const std::string& key) {
  const std::regex re("(^|\\n)" + key + " ([^\\n]*)");
  std::smatch m;
  return std::regex_search(out, m, re) ? m[2].str() : "";
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

/// Tiny dataset + cache shared by the train/eval tests.
const fs::path& tiny() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / ("ecnn_cli_tiny_" + std::to_string(::getpid()));
    fs::remove_all(d);
    const auto g = run("generate --seed 2 --scenes 4 --grasps-per-scene 10 --out " + (d / "ds").string());
    const auto c = run("cache --dataset " + (d / "ds").string() + " --out " + (d / "op.cache").string());
    EXPECT_EQ(g.status, 0);
    EXPECT_EQ(c.status, 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("").status, 2);
  EXPECT_EQ(run("frobnicate").status, 2);
  EXPECT_EQ(run("generate --scenes 0 --out /tmp/ecnn_never").status, 2);
  EXPECT_EQ(run("generate --positive-fraction 1.5").status, 2);
  EXPECT_EQ(run("cache --dataset /nonexistent/ecnn_ds").status, 2);
  EXPECT_EQ(run("eval --dataset /nonexistent/ecnn_ds").status, 2);
  EXPECT_EQ(run("train --cache /nonexistent/op.cache").status, 2);
  EXPECT_EQ(run("bench --trials 0").status, 2);
}

TEST(Cli, GenerateWritesSplitRectangles) {
  const auto dir = test::scratch_dir("cli_gen");
  const auto r = run("generate --seed 3 --scenes 1 --grasps-per-scene 10 --out " + (dir / "ds").string());
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(field(r.out, "scenes"), "1 grasps 10 positives 5");
  EXPECT_TRUE(fs::exists(dir / "ds/images/scene_000000.img"));
  EXPECT_TRUE(fs::exists(dir / "ds/scenes/scene_000000.txt"));
  const auto rects = read_rectangles(dir / "ds/rects/scene_000000");
  ASSERT_EQ(rects.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(rects[i].label, i < 5 ? 1 : 0);
  const auto ds = load_dataset(dir / "ds");
  EXPECT_EQ(ds.config.seed, 3u);
  EXPECT_EQ(ds.grasp_count(), 10u);
  std::ifstream meta(dir / "ds/dataset.txt");
  std::stringstream text;
  text << meta.rdbuf();
  EXPECT_NE(text.str().find("--grasps-per-scene 10"), std::string::npos);
}

TEST(Cli, SameFlagsSameHash) {
  const auto dir = test::scratch_dir("cli_hash");
  const std::string args = "generate --seed 9 --scenes 2 --grasps-per-scene 8 --out " + (dir / "ds").string();
  const auto a = run(args);
  const auto b = run(args);
  ASSERT_EQ(a.status, 0);
  EXPECT_FALSE(field(a.out, "hash").empty());
  EXPECT_EQ(field(a.out, "hash"), field(b.out, "hash"));
  const auto c = run("generate --seed 10 --scenes 2 --grasps-per-scene 8 --out " + (dir / "ds").string());
  EXPECT_NE(field(a.out, "hash"), field(c.out, "hash"));
  EXPECT_NE(a.out.find("reproduce: "), std::string::npos);
}

TEST(Cli, CacheCountsEveryGrasp) {
  const auto dir = test::scratch_dir("cli_cache");
  ASSERT_EQ(run("generate --seed 1 --scenes 100 --grasps-per-scene 50 --out " + (dir / "ds").string()).status, 0);
  const auto r = run("cache --dataset " + (dir / "ds").string() + " --out " + (dir / "op.cache").string());
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(field(r.out, "records"), "5000");
  EXPECT_EQ(field(r.out, "experts"), "depth_ridge color_contrast width_fit");
  EXPECT_EQ(load_cache(dir / "op.cache").records.size(), 5000u);
}

TEST(Cli, CacheExpertSubset) {
  const auto& d = tiny();
  const auto r = run("cache --dataset " + (d / "ds").string() + " --experts width_fit,depth_ridge --out " +
                     (d / "sub.cache").string());
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(load_cache(d / "sub.cache").expert_ids, (std::vector<std::string>{"width_fit", "depth_ridge"}));
  EXPECT_EQ(run("cache --dataset " + (d / "ds").string() + " --experts ghost --out " + (d / "x.cache").string()).status,
            2);
}

TEST(Cli, TrainConstantZeroEpochs) {
  const auto& d = tiny();
  const auto r = run("train --variant constant --epochs 0 --cache " + (d / "op.cache").string() + " --out " +
                     (d / "c0.bin").string());
  ASSERT_EQ(r.status, 0);
  const GateParams p = load_gate(d / "c0.bin");
  EXPECT_EQ(p.variant, GateVariant::constant);
  EXPECT_EQ(p.tensors[0].data, std::vector<double>(3, 0.0));
  EXPECT_TRUE(fs::exists(d / "c0.bin.manifest"));
  EXPECT_NO_THROW(load_ensemble(d / "c0.bin.manifest", make_synthetic_experts()));
}

TEST(Cli, TrainValidation) {
  const auto& d = tiny();
  const std::string base = "train --cache " + (d / "op.cache").string() + " --dataset " + (d / "ds").string();
  EXPECT_EQ(run(base + " --variant image --crop 200").status, 2);
  EXPECT_EQ(run(base + " --variant mystery").status, 2);
  EXPECT_EQ(run(base + " --variant constant --lr -1").status, 2);
  EXPECT_EQ(run(base + " --variant constant --optimizer rmsprop").status, 2);
  EXPECT_EQ(run("train --variant image --cache " + (d / "op.cache").string()).status, 2);
}

TEST(Cli, TrainGraspImageCrop) {
  const auto& d = tiny();
  const auto r = run("train --variant grasp-image --crop 64 --epochs 1 --cache " + (d / "op.cache").string() +
                     " --dataset " + (d / "ds").string() + " --out " + (d / "gi.bin").string());
  ASSERT_EQ(r.status, 0);
  const GateParams p = load_gate(d / "gi.bin");
  EXPECT_EQ(p.variant, GateVariant::grasp_image);
  EXPECT_EQ(p.crop_size, 64u);
  std::ifstream loss(d / "gi.bin.loss.txt");
  std::stringstream text;
  text << loss.rdbuf();
  EXPECT_NE(text.str().find("crop=64"), std::string::npos);
  EXPECT_FALSE(field(r.out, "hash").empty());
}

TEST(Cli, EvalRows) {
  const auto& d = tiny();
  const std::string cache = (d / "op.cache").string(), ds = (d / "ds").string();
  ASSERT_EQ(run("train --variant constant --epochs 2 --cache " + cache + " --out " + (d / "c.bin").string()).status, 0);
  ASSERT_EQ(run("train --variant image --epochs 1 --cache " + cache + " --dataset " + ds + " --out " +
                (d / "i.bin").string())
                .status,
            0);
  ASSERT_EQ(run("train --variant grasp-image --epochs 1 --cache " + cache + " --dataset " + ds + " --out " +
                (d / "g.bin").string())
                .status,
            0);
  const std::string gates = (d / "c.bin").string() + "," + (d / "i.bin").string() + "," + (d / "g.bin").string();

  const auto full = run("eval --dataset " + ds + " --cache " + cache + " --gates " + gates + " --split all --out " +
                        (d / "full").string());
  ASSERT_EQ(full.status, 0);
  const auto j = read_json(d / "full.json");
  ASSERT_EQ(j["rows"].size(), 6u);
  EXPECT_EQ(j["rows"][3]["name"], "ECNN(constant)");
  EXPECT_EQ(j["rows"][4]["name"], "ImECNN");
  EXPECT_EQ(j["rows"][5]["name"], "GrImECNN");
  EXPECT_EQ(j["rows"][0]["total"], 40);
  EXPECT_NE(full.out.find("GrImECNN"), std::string::npos);

  const auto plain = run("eval --dataset " + ds + " --out " + (d / "plain").string() + " --split all");
  ASSERT_EQ(plain.status, 0);
  const auto pj = read_json(d / "plain.json");
  ASSERT_EQ(pj["rows"].size(), 3u);
  for (const auto& row : pj["rows"]) EXPECT_EQ(row["kind"], "expert");
  EXPECT_EQ(pj["rows"][0]["correct"], j["rows"][0]["correct"]);

  const auto per = run("eval --dataset " + ds + " --cache " + cache + " --per-scene --split all --out " +
                       (d / "per").string());
  ASSERT_EQ(per.status, 0);
  const auto sj = read_json(d / "per.json");
  EXPECT_EQ(sj["rows"][0]["per_scene"].size(), 4u);
  EXPECT_NE(per.out.find("success per scene"), std::string::npos);
  EXPECT_NE(per.out.find("scene_000003"), std::string::npos);

  EXPECT_EQ(run("eval --dataset " + ds + " --gates /nonexistent/g.bin").status, 2);
  EXPECT_EQ(run("eval --dataset " + ds + " --split sideways").status, 2);
}

TEST(Cli, BenchSingleExpert) {
  const auto r = run("bench --experts 1 --experts-delay 30 --trials 5");
  ASSERT_EQ(r.status, 0);
  const double p = std::stod(field(r.out, "parallel +median"));
  const double s = std::stod(field(r.out, "sequential median"));
  EXPECT_NEAR(p, s, 15.0);
  EXPECT_GE(s, 30.0);
}
