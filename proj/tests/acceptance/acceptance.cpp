// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
// Optional datasets:
//   HYPNORM_CORA_DIR    Cora in the edges/features/labels/split.tsv layout
//   HYPNORM_WN18RR_DIR  WN18RR as train/valid/test.tsv

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hypnorm/cli.hpp"
#include "hypnorm/multirel.hpp"
#include "hypnorm/training.hpp"
#include "hypnorm/verify.hpp"

using namespace hypnorm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string summary;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

const char* env(const char* name) {
  const char* v = std::getenv(name);
  return v && *v ? v : nullptr;
}

/// Folds hard checks whose names start with one of `prefixes`.
Outcome fold_checks(const std::vector<verify::Check>& checks, const std::vector<std::string>& prefixes) {
  Outcome o{true, ""};
  double worst = 0.0;
  std::size_t n = 0;
  for (const auto& c : checks) {
    bool match = false;
    for (const auto& p : prefixes) match = match || c.name.rfind(p, 0) == 0;
    if (!match || !c.hard) continue;
    ++n;
    worst = std::max(worst, c.value);
    if (!c.passed) {
      o.pass = false;
      o.summary += " " + c.name + "=" + fmt(c.value) + ">" + fmt(c.threshold);
    }
  }
  o.summary = std::to_string(n) + " checks, max statistic " + fmt(worst) + o.summary;
  if (n == 0) o = {false, "no checks matched"};
  return o;
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  std::vector<verify::Check> all;
  std::uint64_t seed = 1000;
  for (double c : {0.3, 0.5, 1.0, 1.5}) {
    auto more = verify::geometry_checks(c, 10000, ++seed);
    all.insert(all.end(), more.begin(), more.end());
  }
  const double secs = seconds_since(t0);
  Outcome o = fold_checks(all, {"geometry.exp_log_origin", "geometry.exp_log_base", "geometry.ball_membership",
                                "geometry.left_cancellation", "geometry.origin_distance"});
  o.summary += ", " + fmt(secs, 3) + " s (limit 30)";
  o.pass = o.pass && secs < 30.0;
  return o;
}

Outcome criterion2() {
  auto checks = verify::lemma_checks(100, 2000);
  return fold_checks(checks, {"lemma.collapse["});
}

Outcome criterion3() {
  auto checks = verify::gradient_checks(100, 3000);
  return fold_checks(checks, {"gradient."});
}

train::RunConfig node_config(const std::string& dataset, const std::string& model, std::uint64_t seed) {
  train::RunConfig cfg;
  cfg.task = train::Task::NodeClass;
  cfg.dataset = dataset;
  cfg.model = model;
  cfg.seed = seed;
  return cfg;
}

struct NodeRun {
  double test = 0.0;
  double val = 0.0;
};

NodeRun node_run(const train::RunConfig& cfg) {
  auto r = train::run_training(cfg);
  return {r.test.value, r.best_val};
}

Outcome criterion4() {
  if (const char* cora = env("HYPNORM_CORA_DIR")) {
    const auto t0 = Clock::now();
    auto ngcn = node_config(cora, "ngcn", 0);
    ngcn.curvature = 0.3;
    ngcn.scale = 5.0;
    ngcn.optimizer = "radam";
    ngcn.hidden = 64;
    ngcn.dropout = 0.6;
    auto ngat = ngcn;
    ngat.model = "ngat";
    ngat.heads = 8;
    const double a = node_run(ngcn).test * 100.0;
    const double b = node_run(ngat).test * 100.0;
    const double secs = seconds_since(t0);
    const bool pass = std::fabs(a - 82.4) <= 2.0 && std::fabs(b - 83.1) <= 2.0 && secs <= 600.0;
    return {pass, "Cora NGCN " + fmt(a) + "% (target 82.4 +- 2), NGAT " + fmt(b) + "% (target 83.1 +- 2), " +
                      fmt(secs, 3) + " s"};
  }
  std::vector<double> gcn, ngcn;
  for (std::uint64_t s = 0; s < 10; ++s) {
    gcn.push_back(node_run(node_config("synthetic:tree:b=3,d=6", "gcn", s)).test * 100.0);
    ngcn.push_back(node_run(node_config("synthetic:tree:b=3,d=6", "ngcn", s)).test * 100.0);
  }
  const double g = mean(gcn), n = mean(ngcn);
  return {n >= g - 1.0, "no Cora data; tree b=3 d=6 over 10 seeds: NGCN " + fmt(n) + "% vs GCN " + fmt(g) +
                            "% (need NGCN >= GCN - 1.0)"};
}

Outcome criterion5() {
  const std::string dataset = env("HYPNORM_CORA_DIR") ? env("HYPNORM_CORA_DIR") : "synthetic:tree:b=3,d=6";
  std::vector<double> radam, adam;
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto cfg = node_config(dataset, "ngat", s);
    cfg.optimizer = "radam";
    radam.push_back(node_run(cfg).val * 100.0);
    cfg.optimizer = "adam";
    adam.push_back(node_run(cfg).val * 100.0);
  }
  const double r = mean(radam), a = mean(adam);
  return {r >= a - 0.5, "NGAT mean val accuracy over 10 seeds: radam " + fmt(r) + "% vs adam " + fmt(a) +
                            "% (need radam >= adam - 0.5)"};
}

Outcome criterion6() {
  auto base = node_config(env("HYPNORM_CORA_DIR") ? env("HYPNORM_CORA_DIR") : "synthetic:citation", "gcn", 0);
  std::vector<train::BenchEntry> entries;
  for (const char* m : {"gcn", "ngcn", "hgcn", "gat", "ngat"}) {
    auto cfg = base;
    cfg.model = m;
    entries.push_back(train::bench_model(cfg, 3, 20));
  }
  auto t = [&](std::size_t i) { return entries[i].mean; };
  const double r1 = t(1) / t(0), r2 = t(1) / t(2), r3 = t(4) / t(3);
  const bool pass = r1 <= 1.5 && r2 <= 0.5 && r3 <= 1.5;
  return {pass, base.dataset + ", 20 timed epochs after 3 warmup: ngcn/gcn " + fmt(r1, 3) + " (<= 1.5), ngcn/hgcn " +
                    fmt(r2, 3) + " (<= 0.5), ngat/gat " + fmt(r3, 3) + " (<= 1.5)"};
}

train::RunConfig kg_config(const std::string& dataset, const std::string& model, std::uint64_t seed) {
  train::RunConfig cfg;
  cfg.task = train::Task::Kg;
  cfg.dataset = dataset;
  cfg.model = model;
  cfg.seed = seed;
  cfg.lr = 0.01;
  cfg.epochs = 20;
  cfg.eval_every = 5;
  cfg.nmur_mode = "embed_norm";
  return cfg;
}

bool score_norm_ranks_equal(const data::KGDataset& kg, std::uint64_t seed) {
  kg::KGConfig cfg;
  cfg.kind = kg::ScorerKind::Mure;
  kg::KGModel mure(cfg, kg.num_entities(), kg.num_relations(), seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto& p : mure.params().all())
    for (double& v : p.value.storage()) v = n(rng);
  auto sn = cfg;
  sn.kind = kg::ScorerKind::Nmur;
  sn.mode = kg::NmurMode::ScoreNorm;
  kg::KGModel nmur(sn, mure.params());
  kg::TripleSet filter;
  for (const auto* split : {&kg.train, &kg.valid, &kg.test}) filter.insert(split->begin(), split->end());
  return kg::rank_evaluate(kg.test, mure, filter).ranks == kg::rank_evaluate(kg.test, nmur, filter).ranks;
}

Outcome criterion7() {
  std::string dataset = "synthetic:tree-kg";
  std::size_t max_triples = 0;
  if (const char* wn = env("HYPNORM_WN18RR_DIR")) {
    dataset = wn;
    max_triples = 10000;
  }
  std::vector<double> nmur, mure;
  bool ranks_equal = true;
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto a = kg_config(dataset, "nmur", s);
    a.max_triples = max_triples;
    auto b = a;
    b.model = "mure";
    nmur.push_back(train::run_training(a).test.value * 100.0);
    mure.push_back(train::run_training(b).test.value * 100.0);
    auto kg = train::load_kg_dataset(dataset, s);
    if (max_triples > 0) kg = data::subsample_kg(kg, max_triples, s);
    ranks_equal = ranks_equal && score_norm_ranks_equal(kg, s);
  }
  const double x = mean(nmur), y = mean(mure);
  return {x >= y - 0.5 && ranks_equal, dataset + " over 5 seeds: NMuR(embed_norm) MRR " + fmt(x) + " vs MuRE " +
                                           fmt(y) + " (need >= MuRE - 0.5); score_norm ranks equal MuRE: " +
                                           (ranks_equal ? "yes" : "no")};
}

Outcome criterion8() { return fold_checks(verify::midpoint_checks(), {"midpoint."}); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome criterion9() {
  std::ostringstream out, err;
  const int code = cli::run({"verify"}, out, err);
  const fs::path dir = fs::temp_directory_path() / ("hypnorm_acceptance_" + std::to_string(std::random_device{}()));
  bool identical = true;
  std::string tasks;
  const std::vector<std::vector<std::string>> runs = {
      {"--task", "node_class", "--model", "ngat", "--dataset", "synthetic:tree:b=3,d=4", "--epochs", "30"},
      {"--task", "link_pred", "--model", "ngcn", "--dataset", HYPNORM_DATA_DIR "/karate", "--epochs", "20"},
      {"--task", "kg", "--model", "nmur", "--dataset", "synthetic:tree-kg:b=3,d=4", "--epochs", "3"}};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::string streams[2];
    for (int k = 0; k < 2; ++k) {
      auto args = std::vector<std::string>{"train", "--seed", "7"};
      args.insert(args.end(), runs[i].begin(), runs[i].end());
      const fs::path out_dir = dir / (std::to_string(i) + "_" + std::to_string(k));
      args.insert(args.end(), {"--output", out_dir.string()});
      std::ostringstream o, e;
      if (cli::run(args, o, e) != cli::kOk) {
        identical = false;
        tasks += " " + runs[i][1] + " failed: " + e.str();
        continue;
      }
      streams[k] = slurp(out_dir / "metrics.jsonl");
    }
    const bool same = !streams[0].empty() && streams[0] == streams[1];
    identical = identical && same;
    tasks += " " + runs[i][1] + (same ? "=identical" : "=DIFFERENT");
  }
  fs::remove_all(dir);
  return {code == cli::kOk && identical,
          "verify exit " + std::to_string(code) + "; metrics.jsonl across two seeded runs:" + tasks};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"geometry identities", criterion1},   {"collapsed layer identity", criterion2},
      {"gradient suite", criterion3},        {"node classification", criterion4},
      {"optimizer direction", criterion5},   {"timing ratios", criterion6},
      {"KG ranking", criterion7},            {"midpoint error", criterion8},
      {"verify and determinism", criterion9}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << " [" << criteria[i].first << "] "
              << o.summary << " (" << fmt(seconds_since(t0), 3) << " s)" << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
