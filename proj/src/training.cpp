#include "hypnorm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "hypnorm/error.hpp"

namespace hypnorm::train {

namespace fs = std::filesystem;
using nlohmann::json;

Task parse_task(const std::string& text) {
  if (text == "node_class" || text == "node-class") return Task::NodeClass;
  if (text == "link_pred" || text == "link-pred") return Task::LinkPred;
  if (text == "kg") return Task::Kg;
  throw InvalidArgument("unknown task '" + text + "' (node_class, link_pred, kg)");
}

std::string to_string(Task t) {
  switch (t) {
    case Task::NodeClass: return "node_class";
    case Task::LinkPred: return "link_pred";
    case Task::Kg: return "kg";
  }
  return "node_class";
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

namespace {

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || !std::isfinite(d)) throw InvalidArgument(key + ": expected a number, got '" + v + "'");
  return d;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long u = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    u = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw InvalidArgument(key + ": expected a non-negative integer, got '" + v + "'");
  return u;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidArgument(key + ": expected true or false, got '" + v + "'");
}

bool graph_model(const std::string& m) {
  return m == "gcn" || m == "gat" || m == "hgcn" || m == "ngcn" || m == "ngat";
}

bool kg_model(const std::string& m) { return m == "mure" || m == "murp" || m == "nmur"; }

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "task",      "model",        "dataset",   "output",         "curvature",        "scale",
      "placement", "optimizer",    "lr",        "beta1",          "beta2",            "eps",
      "weight-decay", "clip-norm", "epochs",    "seed",           "patience",         "hidden",
      "layers",    "heads",        "dropout",   "hgcn-curvature", "hgcn-origin-base", "dim",
      "negatives", "batch",        "nmur-mode", "biases",         "distance",         "eval-every",
      "eval-triples", "max-triples", "threads"};
  return k;
}

void RunConfig::set(const std::string& raw_key, const std::string& v) {
  const std::string key = normalize_key(raw_key);
  if (key == "task") task = parse_task(v);
  else if (key == "model") model = v;
  else if (key == "dataset") dataset = v;
  else if (key == "output") output = v;
  else if (key == "curvature") curvature = to_double(key, v);
  else if (key == "scale") scale = to_double(key, v);
  else if (key == "placement") placement = norm::to_string(norm::parse_placement(v));
  else if (key == "optimizer") optimizer = optim::to_string(optim::parse_method(v));
  else if (key == "lr") lr = to_double(key, v);
  else if (key == "beta1") beta1 = to_double(key, v);
  else if (key == "beta2") beta2 = to_double(key, v);
  else if (key == "eps") eps = to_double(key, v);
  else if (key == "weight-decay") weight_decay = to_double(key, v);
  else if (key == "clip-norm") clip_norm = to_double(key, v);
  else if (key == "epochs") epochs = to_uint(key, v);
  else if (key == "seed") seed = to_uint(key, v);
  else if (key == "patience") patience = to_uint(key, v);
  else if (key == "hidden") hidden = to_uint(key, v);
  else if (key == "layers") layers = to_uint(key, v);
  else if (key == "heads") heads = to_uint(key, v);
  else if (key == "dropout") dropout = to_double(key, v);
  else if (key == "hgcn-curvature") hgcn_curvature = to_double(key, v);
  else if (key == "hgcn-origin-base") hgcn_origin_base = to_bool(key, v);
  else if (key == "dim") dim = to_uint(key, v);
  else if (key == "negatives") negatives = to_uint(key, v);
  else if (key == "batch") batch = to_uint(key, v);
  else if (key == "nmur-mode") nmur_mode = kg::to_string(kg::parse_nmur_mode(v));
  else if (key == "biases") biases = to_bool(key, v);
  else if (key == "distance") distance = v == "L2" || v == "l2" ? "l2" : (kg::parse_distance(v), "l1");
  else if (key == "eval-every") eval_every = to_uint(key, v);
  else if (key == "eval-triples") eval_triples = to_uint(key, v);
  else if (key == "max-triples") max_triples = to_uint(key, v);
  else if (key == "threads") threads = to_uint(key, v);
  else throw InvalidArgument("unknown setting '" + raw_key + "'");
}

double RunConfig::resolved_curvature() const {
  if (curvature) return *curvature;
  return task == Task::Kg ? 1.0 : 0.3;
}

double RunConfig::resolved_scale() const {
  if (scale) return *scale;
  if (task == Task::Kg) return 1.0;
  return norm::NormConfig::default_scale(resolved_curvature());
}

double RunConfig::resolved_lr() const {
  if (lr) return *lr;
  return task == Task::Kg ? 0.001 : 0.01;
}

double RunConfig::resolved_weight_decay() const {
  if (weight_decay) return *weight_decay;
  return task == Task::Kg ? 0.0 : 5e-4;
}

void RunConfig::validate() const {
  if (task == Task::Kg && !kg_model(model)) throw InvalidArgument("task kg needs model mure, murp or nmur");
  if (task != Task::Kg && !graph_model(model)) {
    throw InvalidArgument("task " + to_string(task) + " needs model gcn, gat, hgcn, ngcn or ngat");
  }
  if (epochs == 0) throw InvalidArgument("epochs must be at least 1");
  if (eval_every == 0) throw InvalidArgument("eval-every must be at least 1");
  if (!(resolved_lr() > 0.0)) throw InvalidArgument("lr must be positive");
  if (!(resolved_curvature() > 0.0)) throw InvalidArgument("curvature must be positive");
  if (!(resolved_scale() > 0.0)) throw InvalidArgument("scale must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must lie in [0, 1)");
  if (resolved_weight_decay() < 0.0) throw InvalidArgument("weight decay must be non-negative");
}

json RunConfig::to_json() const {
  json j;
  j["task"] = to_string(task);
  j["model"] = model;
  j["dataset"] = dataset;
  j["output"] = output;
  j["curvature"] = resolved_curvature();
  j["scale"] = resolved_scale();
  j["placement"] = placement;
  j["optimizer"] = optimizer;
  j["lr"] = resolved_lr();
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["eps"] = eps;
  j["weight-decay"] = resolved_weight_decay();
  j["clip-norm"] = clip_norm;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["patience"] = patience;
  j["hidden"] = hidden;
  j["layers"] = layers;
  j["heads"] = heads;
  j["dropout"] = dropout;
  j["hgcn-curvature"] = hgcn_curvature;
  j["hgcn-origin-base"] = hgcn_origin_base;
  j["dim"] = dim;
  j["negatives"] = negatives;
  j["batch"] = batch;
  j["nmur-mode"] = nmur_mode;
  j["biases"] = biases;
  j["distance"] = distance;
  j["eval-every"] = eval_every;
  j["eval-triples"] = eval_triples;
  j["max-triples"] = max_triples;
  j["threads"] = threads;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (value.is_null()) continue;
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_boolean()) {
      text = value.get<bool>() ? "true" : "false";
    } else if (value.is_number_unsigned()) {
      text = std::to_string(value.get<std::uint64_t>());
    } else if (value.is_number_float()) {
      std::ostringstream os;
      os.precision(17);
      os << value.get<double>();
      text = os.str();
    } else {
      text = value.dump();
    }
    cfg.set(key, text);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

namespace {

/// "name:k=v,k=v" -> parameter map (name itself is returned separately).
std::map<std::string, std::string> parse_params(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InvalidArgument("dataset parameter '" + item + "' is not key=value");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

std::uint64_t param_uint(const std::map<std::string, std::string>& p, const std::string& k, std::uint64_t fallback) {
  auto it = p.find(k);
  return it == p.end() ? fallback : to_uint(k, it->second);
}

double param_double(const std::map<std::string, std::string>& p, const std::string& k, double fallback) {
  auto it = p.find(k);
  return it == p.end() ? fallback : to_double(k, it->second);
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

std::pair<std::string, std::map<std::string, std::string>> split_synthetic(const std::string& spec) {
  const std::string rest = spec.substr(std::string("synthetic:").size());
  const auto colon = rest.find(':');
  if (colon == std::string::npos) return {rest, {}};
  return {rest.substr(0, colon), parse_params(rest.substr(colon + 1))};
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

data::NodeGraph load_node_dataset(const std::string& spec, std::uint64_t seed) {
  if (starts_with(spec, "synthetic:")) {
    const auto [name, p] = split_synthetic(spec);
    if (name == "tree") {
      data::NodeGraph g = data::gen_balanced_tree(param_uint(p, "b", 3), param_uint(p, "d", 6),
                                                  param_uint(p, "dim", 32), mix(seed, 11));
      data::make_splits(g, {0.6, 0.2, 0.2}, mix(seed, 12));
      return g;
    }
    if (name == "citation") {
      data::CitationConfig c;
      c.nodes = param_uint(p, "n", c.nodes);
      c.edges = param_uint(p, "edges", c.edges);
      c.feature_dim = param_uint(p, "dim", c.feature_dim);
      c.classes = param_uint(p, "classes", c.classes);
      c.homophily = param_double(p, "homophily", c.homophily);
      return data::gen_citation_like(c, param_uint(p, "seed", 1));
    }
    throw InvalidArgument("unknown synthetic node dataset '" + name + "' (tree, citation)");
  }
  data::NodeGraph g = data::load_node_graph(spec);
  if (std::none_of(g.train.begin(), g.train.end(), [](char c) { return c != 0; })) {
    data::make_splits(g, {0.6, 0.2, 0.2}, mix(seed, 12));
  }
  return g;
}

data::KGDataset load_kg_dataset(const std::string& spec, std::uint64_t seed) {
  (void)seed;
  if (starts_with(spec, "synthetic:")) {
    const auto [name, p] = split_synthetic(spec);
    if (name == "tree-kg") {
      return data::gen_tree_kg(param_uint(p, "b", 3), param_uint(p, "d", 6), param_double(p, "sib", 0.3),
                               param_uint(p, "seed", 1));
    }
    throw InvalidArgument("unknown synthetic KG dataset '" + name + "' (tree-kg)");
  }
  return data::load_kg(spec);
}

// ---------------------------------------------------------------------------
// Trainers
// ---------------------------------------------------------------------------

namespace {

optim::OptimConfig optim_config(const RunConfig& cfg) {
  optim::OptimConfig o;
  o.method = optim::parse_method(cfg.optimizer);
  o.lr = cfg.resolved_lr();
  o.beta1 = cfg.beta1;
  o.beta2 = cfg.beta2;
  o.eps = cfg.eps;
  o.weight_decay = cfg.resolved_weight_decay();
  o.clip_norm = cfg.clip_norm;
  return o;
}

gnn::ModelSpec model_spec(const RunConfig& cfg, const data::NodeGraph& g) {
  gnn::ModelSpec s;
  s.kind = gnn::parse_model_kind(cfg.model);
  s.in_dim = g.feature_dim();
  s.hidden = cfg.hidden;
  s.out_dim = std::max<std::size_t>(1, g.num_classes());
  s.layers = cfg.layers;
  s.heads = cfg.heads;
  s.dropout = cfg.dropout;
  s.norm = {cfg.resolved_curvature(), cfg.resolved_scale(), norm::parse_placement(cfg.placement)};
  s.hgcn_curvature = cfg.hgcn_curvature;
  s.hgcn_origin_base = cfg.hgcn_origin_base;
  s.head = cfg.task == Task::LinkPred ? gnn::Head::FermiDirac : gnn::Head::Classifier;
  return s;
}

std::vector<int> argmax_rows(const ad::Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

ad::IndexPtr make_index(std::vector<std::size_t> v) { return std::make_shared<const ad::Index>(std::move(v)); }

void apply_gradients(optim::ParameterStore& params, optim::Optimizer& opt, std::map<std::string, ad::Tensor> grads) {
  params.zero_grad();
  params.accumulate(grads);
  opt.step(params);
}

class NodeClassTrainer : public Trainer {
 public:
  explicit NodeClassTrainer(const RunConfig& cfg)
      : cfg_(cfg),
        graph_(load_node_dataset(cfg.dataset, cfg.seed)),
        ctx_(gnn::GraphContext::from_edges(graph_.edges, graph_.n)),
        model_(model_spec(cfg, graph_), mix(cfg.seed, 21)),
        opt_(optim_config(cfg)) {
    if (graph_.num_classes() < 2) throw InvalidArgument("node classification needs at least two classes");
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> train_labels;
    for (std::size_t i = 0; i < graph_.n; ++i) {
      if (graph_.train[i] && graph_.labels[i] >= 0) {
        train_idx.push_back(i);
        train_labels.push_back(static_cast<std::size_t>(graph_.labels[i]));
      }
    }
    if (train_idx.empty()) throw InvalidArgument("dataset has no labelled training nodes");
    const ad::NodeId x = g_.input("X", graph_.features.shape());
    built_ = model_.build(g_, ctx_, x);
    loss_ = g_.softmax_cross_entropy(g_.gather_rows(*built_.logits, make_index(train_idx)), make_index(train_labels));
  }

  double train_epoch(std::size_t epoch) override {
    ad::Bindings b = bindings();
    const ad::Evaluation ev = ad::forward(g_, b, {true, mix(cfg_.seed, 1000 + epoch)});
    projections_ += ev.projections();
    apply_gradients(model_.params(), opt_, ad::backward(g_, ev, loss_));
    return ev.value(loss_).item();
  }

  double validate() override { return accuracy(graph_.val.empty() ? graph_.train : graph_.val).value; }
  metrics::MetricReport test() override { return accuracy(graph_.test); }
  std::string metric_name() const override { return "accuracy"; }
  optim::ParameterStore& params() override { return model_.params(); }
  std::size_t projections() const override { return projections_; }

  ad::Tensor embeddings() override {
    ad::Bindings b = bindings();
    return ad::forward(g_, b).value(built_.embedding);
  }

  std::vector<std::string> embedding_labels() const override {
    std::vector<std::string> out;
    for (int l : graph_.labels) out.push_back(std::to_string(l));
    return out;
  }

 private:
  ad::Bindings bindings() const {
    ad::Bindings b;
    b.bind("X", graph_.features);
    model_.params().bind_all(b);
    return b;
  }

  metrics::MetricReport accuracy(const std::vector<char>& mask) {
    if (std::none_of(mask.begin(), mask.end(), [](char c) { return c != 0; })) {
      throw InvalidArgument("evaluation split is empty");
    }
    ad::Bindings b = bindings();
    const ad::Evaluation ev = ad::forward(g_, b);
    return metrics::accuracy(argmax_rows(ev.value(*built_.logits)), graph_.labels, mask);
  }

  RunConfig cfg_;
  data::NodeGraph graph_;
  gnn::GraphContext ctx_;
  gnn::Model model_;
  optim::Optimizer opt_;
  ad::Graph g_;
  gnn::BuiltModel built_;
  ad::NodeId loss_ = 0;
  std::size_t projections_ = 0;
};

class LinkPredTrainer : public Trainer {
 public:
  explicit LinkPredTrainer(const RunConfig& cfg)
      : cfg_(cfg),
        graph_(load_node_dataset(cfg.dataset, cfg.seed)),
        split_(data::make_edge_splits(graph_, {0.85, 0.05, 0.10}, mix(cfg.seed, 31))),
        ctx_(gnn::GraphContext::from_edges(split_.train_pos, graph_.n)),
        model_(model_spec(cfg, graph_), mix(cfg.seed, 21)),
        opt_(optim_config(cfg)) {
    if (split_.train_pos.empty() || split_.val_pos.empty() || split_.test_pos.empty()) {
      throw InvalidArgument("graph has too few edges for an 85/5/10 link split");
    }
    const ad::NodeId x = eval_.input("X", graph_.features.shape());
    eval_built_ = model_.build(eval_, ctx_, x);
    val_pos_ = pair_logits(eval_, eval_built_.embedding, split_.val_pos);
    val_neg_ = pair_logits(eval_, eval_built_.embedding, split_.val_neg);
    test_pos_ = pair_logits(eval_, eval_built_.embedding, split_.test_pos);
    test_neg_ = pair_logits(eval_, eval_built_.embedding, split_.test_neg);
  }

  double train_epoch(std::size_t epoch) override {
    const auto negs = data::sample_non_edges(graph_, split_.train_pos.size(), mix(cfg_.seed, 2000 + epoch));
    ad::Graph g;
    const ad::NodeId x = g.input("X", graph_.features.shape());
    const gnn::BuiltModel built = model_.build(g, ctx_, x);
    const ad::NodeId pos = g.mean(g.log_sigmoid(pair_logits(g, built.embedding, split_.train_pos)));
    const ad::NodeId neg = g.mean(g.log_sigmoid(g.neg(pair_logits(g, built.embedding, negs))));
    const ad::NodeId loss = g.neg(g.add(pos, neg));
    ad::Bindings b = bindings();
    const ad::Evaluation ev = ad::forward(g, b, {true, mix(cfg_.seed, 1000 + epoch)});
    projections_ += ev.projections();
    apply_gradients(model_.params(), opt_, ad::backward(g, ev, loss));
    return ev.value(loss).item();
  }

  double validate() override { return auc(val_pos_, val_neg_).value; }
  metrics::MetricReport test() override { return auc(test_pos_, test_neg_); }
  std::string metric_name() const override { return "roc_auc"; }
  optim::ParameterStore& params() override { return model_.params(); }
  std::size_t projections() const override { return projections_; }

  ad::Tensor embeddings() override {
    ad::Bindings b = bindings();
    return ad::forward(eval_, b).value(eval_built_.embedding);
  }

  std::vector<std::string> embedding_labels() const override {
    std::vector<std::string> out;
    for (int l : graph_.labels) out.push_back(std::to_string(l));
    return out;
  }

 private:
  ad::NodeId pair_logits(ad::Graph& g, ad::NodeId emb, const std::vector<data::Edge>& edges) const {
    std::vector<std::size_t> u, v;
    for (const auto& e : edges) {
      u.push_back(e.u);
      v.push_back(e.v);
    }
    return model_.pair_logits(g, emb, make_index(u), make_index(v));
  }

  ad::Bindings bindings() const {
    ad::Bindings b;
    b.bind("X", graph_.features);
    model_.params().bind_all(b);
    return b;
  }

  metrics::MetricReport auc(ad::NodeId pos, ad::NodeId neg) {
    ad::Bindings b = bindings();
    const ad::Evaluation ev = ad::forward(eval_, b);
    std::vector<double> scores;
    std::vector<int> labels;
    for (double s : ev.value(pos).values()) {
      scores.push_back(s);
      labels.push_back(1);
    }
    for (double s : ev.value(neg).values()) {
      scores.push_back(s);
      labels.push_back(0);
    }
    return metrics::roc_auc(scores, labels);
  }

  RunConfig cfg_;
  data::NodeGraph graph_;
  data::EdgeSplit split_;
  gnn::GraphContext ctx_;
  gnn::Model model_;
  optim::Optimizer opt_;
  ad::Graph eval_;
  gnn::BuiltModel eval_built_;
  ad::NodeId val_pos_ = 0, val_neg_ = 0, test_pos_ = 0, test_neg_ = 0;
  std::size_t projections_ = 0;
};

kg::KGConfig kg_config(const RunConfig& cfg) {
  kg::KGConfig k;
  k.kind = kg::parse_scorer(cfg.model);
  k.mode = kg::parse_nmur_mode(cfg.nmur_mode);
  k.dim = cfg.dim;
  k.curvature = cfg.resolved_curvature();
  k.scale = cfg.resolved_scale();
  k.biases = cfg.biases;
  k.distance = kg::parse_distance(cfg.distance);
  k.negatives = cfg.negatives;
  k.batch = cfg.batch;
  return k;
}

class KGTrainer : public Trainer {
 public:
  explicit KGTrainer(const RunConfig& cfg)
      : cfg_(cfg),
        kg_(load_kg(cfg)),
        model_(kg_config(cfg), kg_.num_entities(), kg_.num_relations(), mix(cfg.seed, 21)),
        opt_(optim_config(cfg)),
        rng_(mix(cfg.seed, 41)) {
    if (kg_.train.empty() || kg_.test.empty()) throw InvalidArgument("KG dataset needs train and test triples");
    for (const auto* part : {&kg_.train, &kg_.valid, &kg_.test}) filter_.insert(part->begin(), part->end());
    val_ = kg_.valid.empty() ? kg_.train : kg_.valid;
    std::mt19937_64 pick(mix(cfg.seed, 42));
    std::shuffle(val_.begin(), val_.end(), pick);
    if (cfg.eval_triples > 0 && val_.size() > cfg.eval_triples) val_.resize(cfg.eval_triples);
  }

  double train_epoch(std::size_t) override {
    std::vector<data::Triple> order = kg_.train;
    std::shuffle(order.begin(), order.end(), rng_);
    const std::size_t bs = model_.config().batch;
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::vector<data::Triple> batch(order.begin() + start,
                                            order.begin() + std::min(order.size(), start + bs));
      total += kg::kg_train_step(batch, model_, opt_, rng_) * static_cast<double>(batch.size());
    }
    return total / static_cast<double>(order.size());
  }

  double validate() override { return kg::rank_evaluate(val_, model_, filter_, cfg_.threads).mrr; }

  metrics::MetricReport test() override {
    last_ = kg::rank_evaluate(kg_.test, model_, filter_, cfg_.threads);
    return {"mrr", last_.mrr, last_.ranks.size(), std::nullopt};
  }

  json test_details() override {
    return {{"hits@1", last_.hits1}, {"hits@3", last_.hits3}, {"hits@10", last_.hits10}};
  }

  std::string metric_name() const override { return "mrr"; }
  optim::ParameterStore& params() override { return model_.params(); }
  ad::Tensor embeddings() override { return model_.params().value("E"); }
  std::vector<std::string> embedding_labels() const override { return kg_.entities; }

 private:
  static data::KGDataset load_kg(const RunConfig& cfg) {
    data::KGDataset kg = load_kg_dataset(cfg.dataset, cfg.seed);
    if (cfg.max_triples > 0) kg = data::subsample_kg(kg, cfg.max_triples, mix(cfg.seed, 43));
    return kg;
  }

  RunConfig cfg_;
  data::KGDataset kg_;
  kg::KGModel model_;
  optim::Optimizer opt_;
  std::mt19937_64 rng_;
  kg::TripleSet filter_;
  std::vector<data::Triple> val_;
  kg::RankReport last_;
};

}  // namespace

std::unique_ptr<Trainer> make_trainer(const RunConfig& cfg) {
  cfg.validate();
  switch (cfg.task) {
    case Task::NodeClass: return std::make_unique<NodeClassTrainer>(cfg);
    case Task::LinkPred: return std::make_unique<LinkPredTrainer>(cfg);
    case Task::Kg: return std::make_unique<KGTrainer>(cfg);
  }
  throw InvalidArgument("unknown task");
}

std::vector<ad::Tensor> snapshot(const optim::ParameterStore& params) {
  std::vector<ad::Tensor> out;
  for (const auto& p : params.all()) out.emplace_back(p.value.shape(), p.value.storage());
  return out;
}

void restore(optim::ParameterStore& params, const std::vector<ad::Tensor>& values) {
  if (values.size() != params.size()) throw InvalidArgument("snapshot does not match parameter count");
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& dst = params.all()[i].value;
    if (!dst.same_shape(values[i])) throw ShapeError(params.all()[i].name, "snapshot shape differs");
    dst.storage() = values[i].storage();
  }
}

json checkpoint_json(const RunConfig& cfg, const optim::ParameterStore& params, std::size_t best_epoch) {
  json j;
  j["format"] = "hypnorm-checkpoint";
  j["version"] = 1;
  j["config"] = cfg.to_json();
  j["best_epoch"] = best_epoch;
  json ps = json::array();
  for (const auto& p : params.all()) {
    ps.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"values", p.value.storage()}});
  }
  j["params"] = std::move(ps);
  return j;
}

void write_checkpoint(const fs::path& file, const json& ckpt) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write checkpoint " + file.string());
  out << ckpt.dump() << '\n';
}

std::unique_ptr<Trainer> load_checkpoint(const fs::path& file, RunConfig* cfg_out) {
  std::ifstream in(file);
  if (!in) throw InvalidArgument("checkpoint not found: " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(file.string(), 0, std::string("invalid checkpoint JSON: ") + e.what());
  }
  if (j.value("format", "") != "hypnorm-checkpoint") throw ParseError(file.string(), 0, "not a checkpoint file");
  const RunConfig cfg = RunConfig::from_json(j.at("config"));
  auto trainer = make_trainer(cfg);
  auto& params = trainer->params();
  for (const auto& p : j.at("params")) {
    auto& dst = params.value(p.at("name").get<std::string>());
    const auto shape = p.at("shape").get<ad::Shape>();
    auto values = p.at("values").get<std::vector<double>>();
    if (shape != dst.shape() || values.size() != dst.size()) {
      throw ParseError(file.string(), 0, "parameter '" + p.at("name").get<std::string>() + "' has the wrong shape");
    }
    dst.storage() = std::move(values);
  }
  if (cfg_out) *cfg_out = cfg;
  return trainer;
}

namespace {

json record_json(const EpochRecord& r, bool with_time) {
  json j{{"epoch", r.epoch}, {"loss", r.loss}, {"val_metric", r.val_metric}};
  if (with_time) j["epoch_seconds"] = r.epoch_seconds;
  return j;
}

}  // namespace

TrainResult run_training(const RunConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
  auto trainer = make_trainer(cfg);
  TrainResult result;
  result.metric = trainer->metric_name();

  const bool write = !cfg.output.empty();
  const fs::path dir = cfg.output;
  std::ofstream stream;
  if (write) {
    fs::create_directories(dir);
    stream.open(dir / "metrics.jsonl", std::ios::binary);
    if (!stream) throw InvalidArgument("cannot write " + (dir / "metrics.jsonl").string());
  }

  std::vector<ad::Tensor> best = snapshot(trainer->params());
  bool have_best = false;
  double val = 0.0;
  std::size_t since_best = 0;
  using clock = std::chrono::steady_clock;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      const auto t0 = clock::now();
      rec.loss = trainer->train_epoch(epoch);
      rec.epoch_seconds = std::chrono::duration<double>(clock::now() - t0).count();
      if (!std::isfinite(rec.loss)) throw NumericError("epoch " + std::to_string(epoch), "non-finite loss");
    } catch (const NumericError&) {
      restore(trainer->params(), best);
      if (write) write_checkpoint(dir / "checkpoint.json", checkpoint_json(cfg, trainer->params(), result.best_epoch));
      throw;
    }
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) val = trainer->validate();
    rec.val_metric = val;
    result.records.push_back(rec);
    if (write) stream << record_json(rec, false).dump() << '\n';
    if (on_epoch) on_epoch(rec);

    if (!have_best || val > result.best_val) {
      have_best = true;
      result.best_val = val;
      result.best_epoch = epoch;
      best = snapshot(trainer->params());
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }

  restore(trainer->params(), best);
  result.test = trainer->test();
  result.test_details = trainer->test_details();
  result.projections = trainer->projections();

  if (write) {
    write_checkpoint(dir / "checkpoint.json", checkpoint_json(cfg, trainer->params(), result.best_epoch));
    json fin{{"metric", result.metric},
             {"best_epoch", result.best_epoch},
             {"best_val", result.best_val},
             {"test", result.test.value},
             {"test_count", result.test.count},
             {"test_ci95", result.test.half_width.value_or(0.0)},
             {"projections", result.projections}};
    for (const auto& [k, v] : result.test_details.items()) fin[k] = v;
    std::ofstream out(dir / "final.json", std::ios::binary);
    out << fin.dump() << '\n';
  }
  return result;
}

BenchEntry bench_model(const RunConfig& cfg, std::size_t warmup, std::size_t repeats) {
  if (repeats < 5) throw InvalidArgument("bench needs at least 5 repeats");
  auto trainer = make_trainer(cfg);
  BenchEntry e;
  e.model = cfg.model;
  e.dataset = cfg.dataset;
  using clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < warmup; ++i) trainer->train_epoch(i + 1);
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = clock::now();
    trainer->train_epoch(warmup + i + 1);
    e.seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
  }
  const double n = static_cast<double>(e.seconds.size());
  e.mean = std::accumulate(e.seconds.begin(), e.seconds.end(), 0.0) / n;
  double var = 0.0;
  for (double s : e.seconds) var += (s - e.mean) * (s - e.mean);
  e.stddev = e.seconds.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return e;
}

json bench_report(const std::vector<BenchEntry>& entries) {
  json j;
  j["entries"] = json::array();
  for (const auto& e : entries) {
    j["entries"].push_back({{"model", e.model},
                            {"dataset", e.dataset},
                            {"mean", e.mean},
                            {"stddev", e.stddev},
                            {"repeats", e.seconds.size()}});
  }
  json ratios = json::object();
  for (const auto& a : entries) {
    for (const auto& b : entries) {
      if (&a == &b || b.mean <= 0.0) continue;
      ratios[a.model + "/" + b.model] = a.mean / b.mean;
    }
  }
  j["ratios"] = ratios;
  return j;
}

}  // namespace hypnorm::train
