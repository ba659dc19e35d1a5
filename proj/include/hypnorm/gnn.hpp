#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hypnorm/data.hpp"
#include "hypnorm/graph.hpp"
#include "hypnorm/hypnorm.hpp"
#include "hypnorm/parameters.hpp"

namespace hypnorm::gnn {

using ad::Graph;
using ad::NodeId;
using norm::Activation;

/// D^{-1/2} (A + I) D^{-1/2} for the symmetrized, deduplicated edge list.
std::shared_ptr<const ad::SparseMatrix> normalize_adjacency(const std::vector<data::Edge>& edges, std::size_t n);

/// Directed message list (source -> target) over A + I, grouped by target.
struct AttentionIndex {
  ad::IndexPtr src;
  ad::IndexPtr dst;
  std::size_t n = 0;
  std::size_t size() const { return src ? src->size() : 0; }
};

AttentionIndex attention_index(const std::vector<data::Edge>& edges, std::size_t n);

struct GraphContext {
  std::size_t n = 0;
  std::shared_ptr<const ad::SparseMatrix> adj;
  AttentionIndex attn;

  static GraphContext from_edges(const std::vector<data::Edge>& edges, std::size_t n);
};

NodeId activate(Graph& g, NodeId x, Activation act, double slope = 0.2);

struct LayerNodes {
  NodeId w = 0;
  std::optional<NodeId> b;
  Activation act = Activation::None;
  /// Dropout keep probability on the layer input.
  double keep = 1.0;
  double slope = 0.2;
};

/// act(A_hat X W + b).
NodeId gcn_layer(Graph& g, const GraphContext& ctx, NodeId x, const LayerNodes& p);

struct HeadNodes {
  NodeId w = 0;
  NodeId a_src = 0;
  NodeId a_dst = 0;
};

struct GatNodes {
  std::vector<HeadNodes> heads;
  std::optional<NodeId> b;
  Activation act = Activation::None;
  double keep = 1.0;
  /// Keep probability for attention coefficients.
  double attn_keep = 1.0;
  double slope = 0.2;
  bool concat = true;
};

struct GatOutput {
  NodeId out = 0;
  /// Per head, the [edges, 1] attention weights in attention_index order.
  std::vector<NodeId> attention;
};

/// e_ij = leaky_relu(a_dst . W x_i + a_src . W x_j), softmax over j in N(i) + i,
/// heads concatenated or averaged.
GatOutput gat_layer(Graph& g, const GraphContext& ctx, NodeId x, const GatNodes& p);

NodeId ngcn_layer(Graph& g, const GraphContext& ctx, NodeId x, const LayerNodes& p, const norm::NormConfig& cfg);
GatOutput ngat_layer(Graph& g, const GraphContext& ctx, NodeId x, const GatNodes& p, const norm::NormConfig& cfg);

struct HgcnNodes {
  NodeId w = 0;
  std::optional<NodeId> b;
  NodeId a_self = 0;
  NodeId a_neigh = 0;
  Activation act = Activation::None;
  double keep = 1.0;
  double slope = 0.2;
  double curvature = 1.0;
  /// Aggregate in the tangent space at the origin instead of at each node.
  bool origin_base = false;
};

struct HgcnOutput {
  NodeId out = 0;
  /// Transformed points h = W (x) p (+) exp0(b), before aggregation.
  NodeId transformed = 0;
  NodeId attention = 0;
};

/// Hyperbolic linear map, tangent-space attention aggregation, and
/// exp0 o act o log0 activation, with ball projection after each step.
HgcnOutput hgcn_layer(Graph& g, const GraphContext& ctx, NodeId p, const HgcnNodes& nodes);

enum class ModelKind { Gcn, Gat, Hgcn, Ngcn, Ngat };
ModelKind parse_model_kind(const std::string& text);
std::string to_string(ModelKind k);
bool is_normalized(ModelKind k);

enum class Head { Classifier, FermiDirac };

struct ModelSpec {
  ModelKind kind = ModelKind::Ngcn;
  std::size_t in_dim = 0;
  std::size_t hidden = 64;
  /// Class count for the classifier head; ignored by the Fermi-Dirac head.
  std::size_t out_dim = 2;
  std::size_t layers = 2;
  std::size_t heads = 4;
  double dropout = 0.6;
  double slope = 0.2;
  Activation act = Activation::Relu;
  bool bias = true;
  norm::NormConfig norm{};
  /// Curvature of the hyperbolic baseline.
  double hgcn_curvature = 1.0;
  bool hgcn_origin_base = false;
  Head head = Head::Classifier;

  void validate() const;
};

struct BuiltModel {
  NodeId embedding = 0;
  /// Classifier logits, or unset for the Fermi-Dirac head.
  std::optional<NodeId> logits;
  std::vector<NodeId> layer_outputs;
  std::vector<std::vector<NodeId>> attention;
};

/// Layer stack plus head. Parameters are registered in a ParameterStore, all
/// Euclidean-tagged, and Glorot-uniform initialised from the seed.
class Model {
 public:
  Model(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const noexcept { return spec_; }
  optim::ParameterStore& params() noexcept { return params_; }
  const optim::ParameterStore& params() const noexcept { return params_; }

  /// 1-based index of the encoder layer after which the normalization is
  /// applied, for each placement; empty for un-normalized kinds.
  std::vector<std::size_t> norm_after() const;

  /// Adds parameter inputs and the encoder (and classifier head) to `g`.
  BuiltModel build(Graph& g, const GraphContext& ctx, NodeId x) const;

  /// Fermi-Dirac logits (r - d^2) / t for the node pairs (u[i], v[i]).
  NodeId pair_logits(Graph& g, NodeId embedding, const ad::IndexPtr& u, const ad::IndexPtr& v) const;

 private:
  NodeId param(Graph& g, const std::string& name) const;

  ModelSpec spec_;
  optim::ParameterStore params_;
};

}  // namespace hypnorm::gnn
