#include "hypnorm/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "hypnorm/error.hpp"
#include "hypnorm/verify.hpp"

namespace hypnorm::cli {

using nlohmann::json;
using Entries = std::vector<std::pair<std::string, std::string>>;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Run flags shared by train and bench, one per RunConfig key.
struct RunFlags {
  std::map<std::string, std::string> values;
  std::string config_file;

  void attach(CLI::App& app, bool with_model = true) {
    for (const auto& key : train::RunConfig::keys()) {
      if (!with_model && key == "model") continue;
      app.add_option("--" + key, values[key]);
    }
    app.add_option("--config", config_file, "key=value settings file")->check(CLI::ExistingFile);
  }

  Entries given(const CLI::App& app) const {
    Entries out;
    for (const auto& [key, value] : values) {
      if (app.count("--" + key) > 0) out.emplace_back(key, value);
    }
    return out;
  }

  train::RunConfig resolve(const CLI::App& app) const {
    const Entries file = config_file.empty() ? Entries{} : read_config_file(config_file);
    return resolve_config(file, std::getenv("HYPNORM_SEED"), given(app));
  }
};

int cmd_train(const train::RunConfig& cfg, std::ostream& out, std::ostream& err) {
  err << "training " << cfg.model << " on " << cfg.dataset << " (" << train::to_string(cfg.task) << ", seed "
      << cfg.seed << ")\n";
  const auto result = train::run_training(cfg, [&](const train::EpochRecord& r) {
    out << json{{"epoch", r.epoch}, {"loss", r.loss}, {"val_metric", r.val_metric}, {"epoch_seconds", r.epoch_seconds}}
               .dump()
        << '\n'
        << std::flush;
  });
  json fin{{"metric", result.metric},
           {"best_epoch", result.best_epoch},
           {"best_val", result.best_val},
           {"test", result.test.value},
           {"test_count", result.test.count},
           {"test_ci95", result.test.half_width.value_or(0.0)},
           {"projections", result.projections}};
  for (const auto& [k, v] : result.test_details.items()) fin[k] = v;
  out << fin.dump() << '\n';
  return kOk;
}

int cmd_bench(const train::RunConfig& base, const std::string& models, std::size_t warmup, std::size_t repeats,
              std::ostream& out, std::ostream& err) {
  std::vector<train::BenchEntry> entries;
  std::stringstream ss(models);
  std::string m;
  while (std::getline(ss, m, ',')) {
    m = trim(m);
    if (m.empty()) continue;
    train::RunConfig cfg = base;
    cfg.model = m;
    err << "bench " << m << " on " << cfg.dataset << ": " << warmup << " warmup, " << repeats << " timed epochs\n";
    entries.push_back(train::bench_model(cfg, warmup, repeats));
    err << "  mean " << entries.back().mean << " s/epoch, stddev " << entries.back().stddev << "\n";
  }
  if (entries.empty()) throw InvalidArgument("--models lists no model");
  out << train::bench_report(entries).dump() << '\n';
  return kOk;
}

int cmd_verify(const std::string& profile, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  const auto report = verify::run_suite(verify::parse_profile(profile), seed);
  for (const auto& c : report.checks) {
    if (!c.hard) err << "info  " << c.name << ": " << c.detail << "\n";
    else if (!c.passed) err << "FAIL  " << c.name << ": value " << c.value << " > " << c.threshold << " " << c.detail << "\n";
  }
  err << report.checks.size() << " checks in " << report.seconds << " s\n";
  out << report.to_json().dump() << '\n';
  return report.passed() ? kOk : kVerification;
}

int cmd_export(const std::string& checkpoint, const std::string& path, std::ostream& out) {
  train::RunConfig cfg;
  auto trainer = train::load_checkpoint(checkpoint, &cfg);
  const ad::Tensor emb = trainer->embeddings();
  const auto labels = trainer->embedding_labels();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot write " + path);
  for (std::size_t r = 0; r < emb.rows(); ++r) {
    f << r;
    for (double v : emb.row(r)) f << '\t' << shortest(v);
    f << '\n';
  }
  const std::string label_path = path + ".labels.tsv";
  std::ofstream lf(label_path, std::ios::binary);
  if (!lf) throw InvalidArgument("cannot write " + label_path);
  for (std::size_t r = 0; r < labels.size(); ++r) lf << r << '\t' << labels[r] << '\n';

  out << json{{"rows", emb.rows()}, {"cols", emb.cols()}, {"embeddings", path}, {"labels", label_path}}.dump() << '\n';
  return kOk;
}

}  // namespace

Entries read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open config file");
  Entries out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path, no, "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(path, no, "empty key");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

train::RunConfig resolve_config(const Entries& file_entries, const char* env_seed, const Entries& flags) {
  train::RunConfig cfg;
  for (const auto& [k, v] : file_entries) cfg.set(k, v);
  if (env_seed != nullptr && *env_seed != '\0') {
    try {
      cfg.set("seed", env_seed);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(std::string("HYPNORM_SEED: ") + e.what());
    }
  }
  for (const auto& [k, v] : flags) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pseudo-Poincare hyperbolic graph networks: train, bench, verify, export-embeddings", "hypnorm"};
  app.require_subcommand(1);

  RunFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a model; JSON lines per epoch, then a final JSON object");
  train_flags.attach(*train_cmd);

  RunFlags bench_flags;
  std::string models = "gcn,ngcn,hgcn";
  std::size_t warmup = 3, repeats = 20;
  auto* bench_cmd = app.add_subcommand("bench", "time training epochs and report per-model means and ratios");
  bench_flags.attach(*bench_cmd, false);
  bench_cmd->add_option("--models", models, "comma-separated model list");
  bench_cmd->add_option("--warmup", warmup, "untimed epochs before timing");
  bench_cmd->add_option("--repeats", repeats, "timed epochs (at least 5)");

  std::string profile = "default";
  std::uint64_t verify_seed = 0;
  auto* verify_cmd = app.add_subcommand("verify", "run the numeric identity and gradient suite");
  verify_cmd->add_option("--profile", profile, "default or quick");
  verify_cmd->add_option("--seed", verify_seed, "sampling seed");

  std::string checkpoint, out_path;
  auto* export_cmd = app.add_subcommand("export-embeddings", "write embeddings from a checkpoint as TSV");
  export_cmd->add_option("--checkpoint", checkpoint)->required();
  export_cmd->add_option("--out", out_path)->required();

  std::vector<std::string> argv_store{"hypnorm"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "usage error: " << e.what() << "\n" << "run 'hypnorm --help' for usage\n";
    return kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags.resolve(*train_cmd), out, err);
    if (*bench_cmd) {
      train::RunConfig base = bench_flags.resolve(*bench_cmd);
      return cmd_bench(base, models, warmup, repeats, out, err);
    }
    if (*verify_cmd) return cmd_verify(profile, verify_seed, out, err);
    if (*export_cmd) return cmd_export(checkpoint, out_path, out);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace hypnorm::cli
