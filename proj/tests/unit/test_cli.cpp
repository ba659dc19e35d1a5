#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hypnorm/cli.hpp"
#include "hypnorm/error.hpp"

using namespace hypnorm;
using namespace hypnorm::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = fs::temp_directory_path() / ("hypnorm_cli_" + std::to_string(rng()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string karate() { return (fs::path(HYPNORM_DATA_DIR) / "karate").string(); }

}  // namespace

TEST(ConfigFile, ParsesKeyValueWithComments) {
  TempDir d;
  std::ofstream(d / "run.cfg") << "# comment\nmodel = gcn\n\nepochs=7  # trailing\n";
  auto entries = read_config_file((d / "run.cfg").string());
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0], (std::pair<std::string, std::string>{"model", "gcn"}));
  EXPECT_EQ(entries[1].second, "7");
}

TEST(ConfigFile, MalformedLineNumber) {
  TempDir d;
  std::ofstream(d / "bad.cfg") << "model=gcn\nepochs\n";
  try {
    read_config_file((d / "bad.cfg").string());
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Precedence, FlagsOverEnvOverConfigOverDefaults) {
  const auto defaults = resolve_config({}, nullptr, {});
  EXPECT_EQ(defaults.seed, 0u);
  EXPECT_EQ(defaults.model, "ngcn");

  const auto from_file = resolve_config({{"seed", "5"}, {"model", "gat"}, {"lr", "0.2"}}, nullptr, {});
  EXPECT_EQ(from_file.seed, 5u);
  EXPECT_EQ(from_file.model, "gat");
  EXPECT_EQ(from_file.resolved_lr(), 0.2);

  const auto env = resolve_config({{"seed", "5"}}, "9", {});
  EXPECT_EQ(env.seed, 9u);

  const auto flag = resolve_config({{"seed", "5"}, {"model", "gat"}}, "9", {{"seed", "11"}, {"model", "gcn"}});
  EXPECT_EQ(flag.seed, 11u);
  EXPECT_EQ(flag.model, "gcn");

  EXPECT_THROW(resolve_config({}, "not-a-number", {}), InvalidArgument);
  EXPECT_THROW(resolve_config({{"no-such-key", "1"}}, nullptr, {}), InvalidArgument);
}

TEST(Precedence, TaskDependentDefaults) {
  const auto node = resolve_config({}, nullptr, {});
  EXPECT_EQ(node.resolved_curvature(), 0.3);
  EXPECT_EQ(node.resolved_scale(), 5.0);
  const auto kg = resolve_config({{"task", "kg"}, {"model", "nmur"}, {"dataset", "synthetic:tree-kg"}}, nullptr, {});
  EXPECT_EQ(kg.resolved_curvature(), 1.0);
  EXPECT_EQ(kg.resolved_scale(), 1.0);
}

TEST(ExitCodes, Usage) {
  EXPECT_EQ(run_cli({}).code, kUsage);
  EXPECT_EQ(run_cli({"frobnicate"}).code, kUsage);
  EXPECT_EQ(run_cli({"train", "--epochs", "abc"}).code, kUsage);
  EXPECT_EQ(run_cli({"train", "--model", "rgcn", "--dataset", karate(), "--epochs", "1"}).code, kUsage);
  EXPECT_EQ(run_cli({"train", "--dataset", "/nonexistent/dir", "--epochs", "1"}).code, kUsage);
  EXPECT_EQ(run_cli({"export-embeddings", "--out", "x.tsv"}).code, kUsage);
  EXPECT_EQ(run_cli({"bench", "--repeats", "2", "--dataset", karate()}).code, kUsage);
  auto help = run_cli({"--help"});
  EXPECT_EQ(help.code, kOk);
  EXPECT_NE(help.out.find("export-embeddings"), std::string::npos);
}

TEST(ExitCodes, NumericFailure) {
  auto r = run_cli({"train", "--dataset", karate(), "--model", "gcn", "--optimizer", "sgd", "--lr", "1e200",
                    "--epochs", "5", "--dropout", "0"});
  EXPECT_EQ(r.code, kNumeric) << r.err;
}

TEST(Train, KarateEmitsOneRecordPerEpoch) {
  auto r = run_cli({"train", "--dataset", karate(), "--model", "ngcn", "--epochs", "200"});
  ASSERT_EQ(r.code, kOk) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::size_t records = 0;
  json last;
  while (std::getline(lines, line)) {
    last = json::parse(line);
    if (last.contains("epoch")) ++records;
  }
  EXPECT_EQ(records, 200u);
  EXPECT_EQ(last["metric"], "accuracy");
  EXPECT_GE(last["test"].get<double>(), 0.0);
}

TEST(Train, EnvSeedChangesTheRun) {
  TempDir d;
  const std::vector<std::string> base{"train", "--dataset", "synthetic:tree:b=2,d=4,dim=8", "--epochs", "3"};
  auto a = run_cli(base);
  ::setenv("HYPNORM_SEED", "3", 1);
  auto b = run_cli(base);
  auto pinned = base;
  pinned.insert(pinned.end(), {"--seed", "0"});
  auto c = run_cli(pinned);
  ::unsetenv("HYPNORM_SEED");
  ASSERT_EQ(a.code, kOk);
  EXPECT_NE(b.err.find("seed 3"), std::string::npos);
  EXPECT_NE(c.err.find("seed 0"), std::string::npos);
}

TEST(Train, MetricStreamIsByteIdentical) {
  TempDir d;
  for (const char* run : {"a", "b"}) {
    auto r = run_cli({"train", "--dataset", karate(), "--model", "ngat", "--epochs", "20", "--hidden", "8", "--heads",
                      "2", "--seed", "4", "--output", (d / run).string()});
    ASSERT_EQ(r.code, kOk) << r.err;
  }
  const std::string a = slurp(d / "a" / "metrics.jsonl");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(d / "b" / "metrics.jsonl"));
  EXPECT_EQ(slurp(d / "a" / "final.json"), slurp(d / "b" / "final.json"));
}

TEST(Train, ConfigFileIsOverriddenByFlags) {
  TempDir d;
  std::ofstream(d / "run.cfg") << "dataset=" << karate() << "\nmodel=gcn\nepochs=4\n";
  auto r = run_cli({"train", "--config", (d / "run.cfg").string(), "--epochs", "2"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.err.find("training gcn"), std::string::npos);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3);
}

TEST(Export, RoundTripsCheckpointEmbeddings) {
  TempDir d;
  auto r = run_cli({"train", "--dataset", karate(), "--model", "ngcn", "--epochs", "5", "--hidden", "6", "--output",
                    (d / "run").string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto ckpt = (d / "run" / "checkpoint.json").string();
  auto e = run_cli({"export-embeddings", "--checkpoint", ckpt, "--out", (d / "emb.tsv").string()});
  ASSERT_EQ(e.code, kOk) << e.err;
  auto info = json::parse(e.out);
  EXPECT_EQ(info["rows"], 34);
  EXPECT_EQ(info["cols"], 6);

  std::ifstream in(d / "emb.tsv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::size_t id, cols = 0;
    fields >> id;
    EXPECT_EQ(id, rows);
    double v;
    while (fields >> v) ++cols;
    EXPECT_EQ(cols, 6u);
    ++rows;
  }
  EXPECT_EQ(rows, 34u);

  auto again = run_cli({"export-embeddings", "--checkpoint", ckpt, "--out", (d / "emb2.tsv").string()});
  ASSERT_EQ(again.code, kOk);
  EXPECT_EQ(slurp(d / "emb.tsv"), slurp(d / "emb2.tsv"));
  EXPECT_EQ(run_cli({"export-embeddings", "--checkpoint", (d / "missing.json").string(), "--out",
                     (d / "x.tsv").string()})
                .code,
            kUsage);
}

TEST(Bench, ReportsRatios) {
  auto r = run_cli({"bench", "--dataset", karate(), "--models", "gcn,ngcn", "--warmup", "1", "--repeats", "5"});
  ASSERT_EQ(r.code, kOk) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j["entries"].size(), 2u);
  EXPECT_TRUE(j["ratios"].contains("ngcn/gcn"));
}
