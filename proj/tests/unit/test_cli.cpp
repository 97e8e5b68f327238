#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli/commands.hpp"
#include "infosched/artifacts.hpp"

using namespace infosched;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "infosched");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Small OU config on disk so the commands run in well under a second.
fs::path tiny_config(const fs::path& dir) {
  ModelConfig c = catalog_config("ou", Scale::desk);
  c.delta = 1e-3;
  c.gamma = 20;
  c.grid = {{-2.0, 9.0, 0.1}};
  c.phi = {0.5, 4.0, 0.25};
  fs::create_directories(dir);
  const auto path = dir / "tiny.json";
  std::ofstream(path) << c.to_json().dump(2);
  return path;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, cli::kConfig);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kConfig);
  EXPECT_EQ(invoke({"precompute", "--bogus"}).code, cli::kConfig);
  EXPECT_EQ(invoke({"catalog", "--scale", "huge"}).code, cli::kConfig);
  EXPECT_EQ(invoke({"--help"}).code, cli::kOk);
}

TEST(CliTest, UnknownModelIsConfigError) {
  const auto r = invoke({"precompute", "--model", "lorenz", "--out", scratch("cli_unknown").string()});
  EXPECT_EQ(r.code, cli::kConfig);
  EXPECT_NE(r.err.find("lorenz"), std::string::npos);
}

TEST(CliTest, UnstableStepReportsTheBound) {
  const auto dir = scratch("cli_unstable");
  const auto config = tiny_config(dir);
  const auto r = invoke({"precompute", "--config", config.string(), "--delta", "0.05", "--out",
                         (dir / "out").string()});
  EXPECT_EQ(r.code, cli::kConfig);
  EXPECT_NE(r.err.find("largest stable delta"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("hint"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "out" / layout::kManifest));
}

TEST(CliTest, CatalogListsModels) {
  const auto r = invoke({"catalog"});
  ASSERT_EQ(r.code, cli::kOk);
  const auto doc = nlohmann::json::parse(r.out);
  for (const auto& name : catalog_names()) EXPECT_TRUE(doc.contains(name)) << name;
}

TEST(CliTest, PrecomputeCachesByManifest) {
  const auto dir = scratch("cli_cache");
  const auto config = tiny_config(dir);
  const auto out = (dir / "run").string();
  const auto first = invoke({"precompute", "--config", config.string(), "--out", out});
  ASSERT_EQ(first.code, cli::kOk) << first.err;
  EXPECT_EQ(first.out.rfind("wrote", 0), 0u);
  for (const auto* f : {layout::kConfig, layout::kManifest, layout::kProfile, layout::kKernel}) {
    EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
  }
  EXPECT_TRUE(fs::exists(fs::path(out) / layout::policy_file("dp")));

  const auto policy = fs::path(out) / layout::policy_file("dp");
  const auto stamp = fs::last_write_time(policy);
  const auto second = invoke({"precompute", "--config", config.string(), "--out", out});
  ASSERT_EQ(second.code, cli::kOk);
  EXPECT_EQ(second.out.rfind("cached", 0), 0u);
  EXPECT_EQ(fs::last_write_time(policy), stamp);

  // A different budget is a different key.
  const auto third = invoke({"precompute", "--config", config.string(), "--n", "2", "--out", out});
  ASSERT_EQ(third.code, cli::kOk);
  EXPECT_EQ(third.out.rfind("wrote", 0), 0u);

  // A corrupted artifact invalidates the cache.
  std::ofstream(policy, std::ios::app) << "x";
  const auto fourth = invoke({"precompute", "--config", config.string(), "--n", "2", "--out", out});
  EXPECT_EQ(fourth.out.rfind("wrote", 0), 0u);
}

TEST(CliTest, HeatmapHasOneRowPerMeshPoint) {
  const auto dir = scratch("cli_heat");
  const auto config = tiny_config(dir);
  const auto out = (dir / "run").string();
  ASSERT_EQ(invoke({"precompute", "--config", config.string(), "--out", out}).code, cli::kOk);
  const auto r = invoke({"heatmap", "--config", config.string(), "--out", out, "--i", "1"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 100u + 1u);  // header plus mesh {0, 0.02, ..., 1.98}
  EXPECT_EQ(std::count(rows[0].begin(), rows[0].end(), ','), 111);
  EXPECT_EQ(rows[0].rfind("s,-2,", 0), 0u);

  EXPECT_EQ(invoke({"heatmap", "--config", config.string(), "--out", out, "--i", "0"}).code,
            cli::kConfig);
  EXPECT_EQ(invoke({"heatmap", "--config", config.string(), "--out", out, "--i", "4"}).code,
            cli::kConfig);
  EXPECT_EQ(invoke({"heatmap", "--config", config.string(), "--out", out, "--i", "1", "--design",
                    "averaged"})
                .code,
            cli::kConfig);  // not precomputed
  EXPECT_EQ(invoke({"heatmap", "--out", (dir / "absent").string(), "--i", "1"}).code,
            cli::kConfig);
}

TEST(CliTest, SingleReplicateKeepsRecordsButFails) {
  const auto dir = scratch("cli_one");
  const auto config = tiny_config(dir);
  const auto out = (dir / "run").string();
  ASSERT_EQ(invoke({"precompute", "--config", config.string(), "--out", out}).code, cli::kOk);
  const auto r = invoke({"experiment", "--config", config.string(), "--out", out, "--reps", "1"});
  EXPECT_EQ(r.code, cli::kConfig);
  ASSERT_TRUE(fs::exists(fs::path(out) / "records.csv"));
  std::ifstream csv(fs::path(out) / "records.csv");
  std::stringstream text;
  text << csv.rdbuf();
  EXPECT_EQ(lines(text.str()).size(), 3u);  // header, policy, uniform
}

TEST(CliTest, ExperimentIsDeterministic) {
  const auto dir = scratch("cli_exp");
  const auto config = tiny_config(dir);
  const auto out = (dir / "run").string();
  ASSERT_EQ(invoke({"precompute", "--config", config.string(), "--out", out}).code, cli::kOk);
  std::string first;
  for (int pass = 0; pass < 2; ++pass) {
    const auto r = invoke(
        {"experiment", "--config", config.string(), "--out", out, "--reps", "4", "--seed", "11"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    EXPECT_NE(r.out.find("policy"), std::string::npos);
    EXPECT_NE(r.out.find("uniform"), std::string::npos);
    std::ifstream csv(fs::path(out) / "records.csv");
    std::stringstream text;
    text << csv.rdbuf();
    if (pass == 0) {
      first = text.str();
    } else {
      EXPECT_EQ(text.str(), first);
    }
  }
  const auto stats = read_json_file(fs::path(out) / "stats.json");
  EXPECT_EQ(stats.at("replicates"), 4);
  EXPECT_EQ(stats.at("seed"), 11);
}
