// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "cli.hpp"
#include "drum/checkpoint.hpp"
#include "drum/embedding_store.hpp"
#include "json.hpp"
#include "test_support.hpp"

namespace drum {
namespace {

using nlohmann::json;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "drum");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

json read_json(const std::filesystem::path& p) { return json::parse(test::read_bytes(p)); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ::unsetenv("DRUM_SEED");
    corpus_ = (dir_ / "corpus").string();
    const auto g = run({"--seed", "3", "gen-synthetic", "--out", corpus_, "--users", "4", "--history", "24",
                        "--d-sim", "16", "--d-cond", "16", "--max-tokens", "4"});
    ASSERT_EQ(g.code, 0) << g.err;
  }

  test::TempDir dir_;
  std::string corpus_;
};

TEST_F(CliTest, GenSyntheticWritesCorpusAndManifest) {
  const auto c = load_corpus(corpus_);
  EXPECT_EQ(c.size(), 100);
  const auto m = read_json(std::filesystem::path(corpus_) / "run_manifest.json");
  EXPECT_EQ(m.at("subcommand"), "gen-synthetic");
  EXPECT_EQ(m.at("seed"), 3);
  EXPECT_EQ(m.at("config").at("users"), 4);
  EXPECT_TRUE(m.contains("engine_version"));
  EXPECT_TRUE(m.contains("wall_seconds"));
  EXPECT_EQ(m.at("outputs").at("corpus"), corpus_);
}

TEST_F(CliTest, InspectPrintsDimensions) {
  const auto o = run({"inspect", "--corpus", corpus_});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("N: 100\n"), std::string::npos);
  EXPECT_NE(o.out.find("d_sim: 16\n"), std::string::npos);
  EXPECT_NE(o.out.find("d_cond: 16\n"), std::string::npos);
  EXPECT_NE(o.out.find("max_tokens: 4\n"), std::string::npos);
  EXPECT_NE(o.out.find("encoder: synthetic\n"), std::string::npos);
}

TEST_F(CliTest, SampleTenPercentOfHundred) {
  const auto path = dir_ / "profile.json";
  const auto o = run({"sample", "--corpus", corpus_, "--ratio", "0.10", "--seed", "5", "--out", path.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto p = read_json(path);
  EXPECT_EQ(p.at("indices").size(), 10u);
  EXPECT_EQ(p.at("ids").size(), 10u);
  EXPECT_EQ(p.at("config").at("seed"), 5);
  EXPECT_TRUE(std::filesystem::exists(path.string() + ".run.json"));

  const auto k = run({"sample", "--corpus", corpus_, "--k", "20", "--no-preferences"});
  ASSERT_EQ(k.code, 0) << k.err;
  const auto j = json::parse(k.out);
  EXPECT_EQ(j.at("config").at("k"), 20);
  EXPECT_EQ(j.at("config").at("use_preferences"), false);
}

TEST_F(CliTest, SampleOneUser) {
  const auto o = run({"sample", "--corpus", corpus_, "--ratio", "0.5", "--user", "u0002"});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto j = json::parse(o.out);
  EXPECT_EQ(j.at("ids").size(), 12u);
  for (const auto& id : j.at("ids")) EXPECT_EQ(id.get<std::string>().rfind("u0002/", 0), 0u);
  EXPECT_EQ(run({"sample", "--corpus", corpus_, "--user", "nobody"}).code, cli::kExitDomainError);
}

TEST_F(CliTest, SeedFromEnvironment) {
  ::setenv("DRUM_SEED", "41", 1);
  const auto o = run({"sample", "--corpus", corpus_, "--method", "random"});
  ::unsetenv("DRUM_SEED");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(json::parse(o.out).at("config").at("seed"), 41);
  const auto explicit_seed = run({"sample", "--corpus", corpus_, "--method", "random", "--seed", "41"});
  EXPECT_EQ(explicit_seed.out, o.out);
}

TEST_F(CliTest, TrainPersonalizeEvaluate) {
  const auto params = (dir_ / "params").string();
  const auto t = run({"--seed", "2", "train", "--corpus", corpus_, "--out", params, "--steps", "15", "--batch-size",
                      "8", "--layers", "2", "--heads", "2"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.err.find("train cosine"), std::string::npos);
  const auto ckpt = load_checkpoint(params);
  EXPECT_EQ(ckpt.info.step, 15);
  EXPECT_EQ(ckpt.info.seed, 2u);
  EXPECT_EQ(ckpt.params.config().n_layers, 2);
  const auto report = read_json(std::filesystem::path(params) / "train_report.json");
  EXPECT_EQ(report.at("loss").size(), 15u);
  EXPECT_EQ(read_json(std::filesystem::path(params) / "run_manifest.json").at("subcommand"), "train");

  const auto profile = (dir_ / "p.json").string();
  ASSERT_EQ(run({"sample", "--corpus", corpus_, "--user", "u0001", "--ratio", "0.2", "--out", profile}).code, 0);

  const auto pers = (dir_ / "pers").string();
  const auto p = run({"personalize", "--params", params, "--corpus", corpus_, "--profile", profile, "--target-id",
                      "u0001/0024", "--out", pers});
  ASSERT_EQ(p.code, 0) << p.err;
  const auto single = load_corpus(pers);
  ASSERT_EQ(single.size(), 1);
  EXPECT_EQ(single.records[0].id, "u0001/0024");
  EXPECT_EQ(single.records[0].tokens(), single.uncond.rows());
  EXPECT_TRUE(single.records[0].class_embedding.has_value());
  const auto pm = read_json(std::filesystem::path(pers) / "run_manifest.json");
  EXPECT_DOUBLE_EQ(pm.at("config").at("alpha").get<double>(), 0.3);

  const auto ev = (dir_ / "eval").string();
  const auto e = run({"evaluate", "--params", params, "--corpus", corpus_, "--out", ev});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto rj = read_json(std::filesystem::path(ev) / "report.json");
  ASSERT_EQ(rj.size(), 1u);
  EXPECT_DOUBLE_EQ(rj[0].at("config").at("alpha").get<double>(), 0.3);
  EXPECT_DOUBLE_EQ(rj[0].at("config").at("profile").at("ratio").get<double>(), 0.1);
  EXPECT_EQ(rj[0].at("users").size(), 4u);
  EXPECT_FALSE(rj[0].at("condition_target_align").is_null());
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(ev) / "report.csv"));

  const auto a = run({"sweep", "--kind", "alpha", "--params", params, "--corpus", corpus_, "--target-id",
                      "u0000/0024", "--alphas", "0,0.5,1", "--out", (dir_ / "alpha").string(), "--svg"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(read_json(dir_ / "alpha" / "sweep.json").size(), 3u);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "alpha" / "sweep.svg"));
}

TEST_F(CliTest, SamplingAndAblationSweeps) {
  const auto s = run({"sweep", "--kind", "sampling", "--corpus", corpus_, "--ratios", "0.1,0.5", "--methods",
                      "coreset,random,uniform", "--out", (dir_ / "s").string(), "--svg"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(read_json(dir_ / "s" / "sweep.json").size(), 6u);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "s" / "sweep.svg"));
  const auto m = read_json(dir_ / "s" / "run_manifest.json");
  EXPECT_EQ(m.at("config").at("kind"), "sampling");

  const auto a = run({"sweep", "--kind", "ablation", "--corpus", corpus_});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(json::parse(a.out).size(), 4u);
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  const auto cfg = dir_ / "cfg.json";
  test::write_bytes(cfg, R"({"ratio": 0.5, "method": "uniform", "seed": 8, "no_preferences": true})");
  const auto o = run({"sample", "--corpus", corpus_, "--config", cfg.string(), "--ratio", "0.2"});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto j = json::parse(o.out);
  EXPECT_EQ(j.at("ids").size(), 20u);
  EXPECT_EQ(j.at("config").at("seed"), 8);
  EXPECT_EQ(j.at("config").at("use_preferences"), false);
  EXPECT_EQ(j.at("indices")[1], 5);

  const auto cli_seed = run({"--seed", "9", "sample", "--corpus", corpus_, "--config", cfg.string()});
  EXPECT_EQ(json::parse(cli_seed.out).at("config").at("seed"), 9);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  auto o = run({"inspect", "--corpus", corpus_, "--bogus"});
  EXPECT_EQ(o.code, cli::kExitUsage);
  EXPECT_NE(o.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"sample"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"sample", "--corpus", corpus_, "--ratio", "abc"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"personalize", "--alpha", "1.5"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"sweep", "--kind", "bogus", "--corpus", corpus_}).code, cli::kExitUsage);
  const auto help = run({"--help"});
  EXPECT_EQ(help.code, cli::kExitOk);
  EXPECT_NE(help.out.find("gen-synthetic"), std::string::npos);
}

TEST_F(CliTest, DomainErrorsExitOneWithCategory) {
  auto o = run({"inspect", "--corpus", (dir_ / "missing").string()});
  EXPECT_EQ(o.code, cli::kExitDomainError);
  EXPECT_EQ(o.err.rfind("error [io]:", 0), 0u) << o.err;

  std::string bytes = test::read_bytes(std::filesystem::path(corpus_) / "tensors.bin");
  bytes[0] = 'Z';
  test::write_bytes(std::filesystem::path(corpus_) / "tensors.bin", bytes);
  o = run({"inspect", "--corpus", corpus_});
  EXPECT_EQ(o.code, cli::kExitDomainError);
  EXPECT_EQ(o.err.rfind("error [format]:", 0), 0u) << o.err;

  o = run({"sample", "--corpus", corpus_, "--method", "greedy"});
  EXPECT_EQ(o.code, cli::kExitDomainError);
}

TEST_F(CliTest, ConfigErrorsAreCategorized) {
  auto o = run({"sweep", "--kind", "alpha", "--corpus", corpus_});
  EXPECT_EQ(o.code, cli::kExitDomainError);
  EXPECT_EQ(o.err.rfind("error [config]:", 0), 0u) << o.err;
  const auto bad = dir_ / "bad.json";
  test::write_bytes(bad, "[1, 2]");
  o = run({"sample", "--corpus", corpus_, "--config", bad.string()});
  EXPECT_EQ(o.code, cli::kExitDomainError);
  const auto nested = dir_ / "nested.json";
  test::write_bytes(nested, R"({"ratio": {"x": 1}})");
  EXPECT_EQ(run({"sample", "--corpus", corpus_, "--config", nested.string()}).code, cli::kExitDomainError);
  const auto unknown = dir_ / "unknown.json";
  test::write_bytes(unknown, R"({"frobnicate": 1})");
  EXPECT_EQ(run({"sample", "--corpus", corpus_, "--config", unknown.string()}).code, cli::kExitUsage);
}

}  // namespace
}  // namespace drum
