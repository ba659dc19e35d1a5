#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hypnorm/data.hpp"
#include "hypnorm/gnn.hpp"
#include "hypnorm/metrics.hpp"
#include "hypnorm/multirel.hpp"
#include "hypnorm/optim.hpp"

namespace hypnorm::train {

enum class Task { NodeClass, LinkPred, Kg };
Task parse_task(const std::string& text);
std::string to_string(Task t);

/// Every knob of a run. Unset optionals fall back to task-dependent defaults.
struct RunConfig {
  Task task = Task::NodeClass;
  std::string model = "ngcn";
  std::string dataset = "synthetic:tree";
  std::string output;

  std::optional<double> curvature;
  std::optional<double> scale;
  std::string placement = "per_layer";

  std::string optimizer = "radam";
  std::optional<double> lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::optional<double> weight_decay;
  double clip_norm = 0.0;

  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  std::size_t patience = 0;

  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  double dropout = 0.6;
  double hgcn_curvature = 1.0;
  bool hgcn_origin_base = false;

  std::size_t dim = 40;
  std::size_t negatives = 50;
  std::size_t batch = 128;
  std::string nmur_mode = "embed_norm";
  bool biases = true;
  std::string distance = "l1";
  std::size_t eval_every = 1;
  std::size_t eval_triples = 500;
  /// Keeps at most this many KG triples (0 keeps all).
  std::size_t max_triples = 0;
  std::size_t threads = 1;

  double resolved_curvature() const;
  double resolved_scale() const;
  double resolved_lr() const;
  double resolved_weight_decay() const;

  /// Sets the field named by a kebab-case (or snake_case) key from text.
  void set(const std::string& key, const std::string& value);
  static const std::vector<std::string>& keys();
  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_metric = 0.0;
  double epoch_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> records;
  std::string metric;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  metrics::MetricReport test;
  nlohmann::json test_details;
  /// Ball projections performed during training (hyperbolic baseline only).
  std::size_t projections = 0;
};

/// Resolves a dataset argument: a directory, or one of
/// synthetic:tree[:b=3,d=6,dim=32], synthetic:citation, synthetic:tree-kg[:b=3,d=6,sib=0.3].
data::NodeGraph load_node_dataset(const std::string& spec, std::uint64_t seed);
data::KGDataset load_kg_dataset(const std::string& spec, std::uint64_t seed);

/// One task-specific training loop over a fixed dataset.
class Trainer {
 public:
  virtual ~Trainer() = default;
  /// One optimization pass; returns the training loss.
  virtual double train_epoch(std::size_t epoch) = 0;
  virtual double validate() = 0;
  virtual metrics::MetricReport test() = 0;
  virtual std::string metric_name() const = 0;
  virtual optim::ParameterStore& params() = 0;
  virtual std::size_t projections() const { return 0; }
  /// Rows to export: node embeddings or entity embeddings, with labels.
  virtual ad::Tensor embeddings() = 0;
  virtual std::vector<std::string> embedding_labels() const = 0;
  /// Extra test metrics (e.g. Hits@K) for the final report.
  virtual nlohmann::json test_details() { return nlohmann::json::object(); }
};

std::unique_ptr<Trainer> make_trainer(const RunConfig& cfg);

/// Full loop with best-validation model selection. `on_epoch` sees each record
/// as it is produced. When the loss turns non-finite the best parameters so
/// far are restored (and checkpointed when an output directory is set) and
/// NumericError is rethrown.
TrainResult run_training(const RunConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Copies parameter values.
std::vector<ad::Tensor> snapshot(const optim::ParameterStore& params);
void restore(optim::ParameterStore& params, const std::vector<ad::Tensor>& values);

nlohmann::json checkpoint_json(const RunConfig& cfg, const optim::ParameterStore& params, std::size_t best_epoch);
void write_checkpoint(const std::filesystem::path& file, const nlohmann::json& ckpt);
/// Loads a checkpoint and rebuilds its trainer with the stored parameters.
std::unique_ptr<Trainer> load_checkpoint(const std::filesystem::path& file, RunConfig* cfg_out = nullptr);

struct BenchEntry {
  std::string model;
  std::string dataset;
  std::vector<double> seconds;
  double mean = 0.0;
  double stddev = 0.0;
};

/// Times `repeats` training epochs after `warmup` untimed ones.
BenchEntry bench_model(const RunConfig& cfg, std::size_t warmup, std::size_t repeats);

nlohmann::json bench_report(const std::vector<BenchEntry>& entries);

}  // namespace hypnorm::train
