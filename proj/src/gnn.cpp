#include "hypnorm/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hypnorm/error.hpp"
#include "hypnorm/geometry_graph.hpp"

namespace hypnorm::gnn {

namespace gn = geo::nodes;

std::shared_ptr<const ad::SparseMatrix> normalize_adjacency(const std::vector<data::Edge>& edges, std::size_t n) {
  for (const auto& e : edges) {
    if (e.u >= n || e.v >= n) {
      throw InvalidArgument("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) + ") outside " +
                            std::to_string(n) + " nodes");
    }
  }
  const auto canon = data::canonical_edges(edges);
  std::vector<double> deg(n, 1.0);
  for (const auto& e : canon) {
    deg[e.u] += 1.0;
    deg[e.v] += 1.0;
  }
  std::vector<ad::SparseEntry> entries;
  entries.reserve(n + 2 * canon.size());
  for (std::size_t i = 0; i < n; ++i) entries.push_back({i, i, 1.0 / deg[i]});
  for (const auto& e : canon) {
    const double w = 1.0 / std::sqrt(deg[e.u] * deg[e.v]);
    entries.push_back({e.u, e.v, w});
    entries.push_back({e.v, e.u, w});
  }
  return std::make_shared<const ad::SparseMatrix>(n, n, std::move(entries));
}

AttentionIndex attention_index(const std::vector<data::Edge>& edges, std::size_t n) {
  for (const auto& e : edges) {
    if (e.u >= n || e.v >= n) throw InvalidArgument("edge endpoint outside the node range");
  }
  const auto canon = data::canonical_edges(edges);
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (std::size_t i = 0; i < n; ++i) nbrs[i].push_back(i);
  for (const auto& e : canon) {
    nbrs[e.u].push_back(e.v);
    nbrs[e.v].push_back(e.u);
  }
  auto src = std::make_shared<ad::Index>();
  auto dst = std::make_shared<ad::Index>();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : nbrs[i]) {
      src->push_back(j);
      dst->push_back(i);
    }
  }
  return {src, dst, n};
}

GraphContext GraphContext::from_edges(const std::vector<data::Edge>& edges, std::size_t n) {
  return {n, normalize_adjacency(edges, n), attention_index(edges, n)};
}

NodeId activate(Graph& g, NodeId x, Activation act, double slope) {
  switch (act) {
    case Activation::None: return x;
    case Activation::Tanh: return g.tanh(x);
    case Activation::Relu: return g.relu(x);
    case Activation::LeakyRelu: return g.leaky_relu(x, slope);
  }
  return x;
}

namespace {

NodeId maybe_dropout(Graph& g, NodeId x, double keep) { return keep < 1.0 ? g.dropout(x, keep) : x; }

}  // namespace

NodeId gcn_layer(Graph& g, const GraphContext& ctx, NodeId x, const LayerNodes& p) {
  NodeId h = g.spmm(ctx.adj, g.matmul(maybe_dropout(g, x, p.keep), p.w));
  if (p.b) h = g.add(h, *p.b);
  return activate(g, h, p.act, p.slope);
}

GatOutput gat_layer(Graph& g, const GraphContext& ctx, NodeId x, const GatNodes& p) {
  if (p.heads.empty()) throw InvalidArgument("gat_layer needs at least one head");
  const auto& idx = ctx.attn;
  const NodeId xd = maybe_dropout(g, x, p.keep);
  GatOutput result;
  std::vector<NodeId> outs;
  for (const auto& head : p.heads) {
    const NodeId h = g.matmul(xd, head.w);
    const NodeId s_dst = g.matmul(h, head.a_dst);
    const NodeId s_src = g.matmul(h, head.a_src);
    const NodeId e = g.leaky_relu(g.add(g.gather_rows(s_dst, idx.dst), g.gather_rows(s_src, idx.src)), p.slope);
    const NodeId alpha = g.segment_softmax(e, idx.dst, idx.n);
    result.attention.push_back(alpha);
    const NodeId msg = g.mul(g.gather_rows(h, idx.src), maybe_dropout(g, alpha, p.attn_keep));
    outs.push_back(g.scatter_add_rows(msg, idx.dst, idx.n));
  }
  NodeId out;
  if (p.concat) {
    out = outs.size() == 1 ? outs[0] : g.concat_cols(outs);
  } else {
    out = outs[0];
    for (std::size_t k = 1; k < outs.size(); ++k) out = g.add(out, outs[k]);
    if (outs.size() > 1) out = g.scale(out, 1.0 / static_cast<double>(outs.size()));
  }
  if (p.b) out = g.add(out, *p.b);
  result.out = activate(g, out, p.act, p.slope);
  return result;
}

NodeId ngcn_layer(Graph& g, const GraphContext& ctx, NodeId x, const LayerNodes& p, const norm::NormConfig& cfg) {
  return norm::apply_norm(g, gcn_layer(g, ctx, x, p), cfg);
}

GatOutput ngat_layer(Graph& g, const GraphContext& ctx, NodeId x, const GatNodes& p, const norm::NormConfig& cfg) {
  GatOutput out = gat_layer(g, ctx, x, p);
  out.out = norm::apply_norm(g, out.out, cfg);
  return out;
}

HgcnOutput hgcn_layer(Graph& g, const GraphContext& ctx, NodeId p, const HgcnNodes& nodes) {
  const double c = nodes.curvature;
  const auto& idx = ctx.attn;
  HgcnOutput out;

  const NodeId tangent_in = maybe_dropout(g, gn::log0(g, p, c), nodes.keep);
  NodeId h = gn::project(g, gn::exp0(g, g.matmul(tangent_in, nodes.w), c), c);
  if (nodes.b) h = gn::project(g, gn::mobius_add(g, h, gn::exp0(g, *nodes.b, c), c), c);
  out.transformed = h;

  const NodeId t = gn::log0(g, h, c);
  const NodeId score =
      g.add(g.gather_rows(g.matmul(t, nodes.a_self), idx.dst), g.gather_rows(g.matmul(t, nodes.a_neigh), idx.src));
  const NodeId alpha = g.segment_softmax(score, idx.dst, idx.n);
  out.attention = alpha;

  NodeId agg;
  if (nodes.origin_base) {
    const NodeId msg = g.mul(g.gather_rows(t, idx.src), alpha);
    agg = gn::exp0(g, g.scatter_add_rows(msg, idx.dst, idx.n), c);
  } else {
    const NodeId base = g.gather_rows(h, idx.dst);
    const NodeId logs = gn::log_at(g, base, g.gather_rows(h, idx.src), c);
    const NodeId tangent = g.scatter_add_rows(g.mul(logs, alpha), idx.dst, idx.n);
    agg = gn::exp_at(g, h, tangent, c);
  }
  agg = gn::project(g, agg, c);

  const NodeId act = activate(g, gn::log0(g, agg, c), nodes.act, nodes.slope);
  out.out = gn::project(g, gn::exp0(g, act, c), c);
  return out;
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "gcn") return ModelKind::Gcn;
  if (text == "gat") return ModelKind::Gat;
  if (text == "hgcn") return ModelKind::Hgcn;
  if (text == "ngcn") return ModelKind::Ngcn;
  if (text == "ngat") return ModelKind::Ngat;
  throw InvalidArgument("unknown graph model '" + text + "' (gcn, gat, hgcn, ngcn, ngat)");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Gcn: return "gcn";
    case ModelKind::Gat: return "gat";
    case ModelKind::Hgcn: return "hgcn";
    case ModelKind::Ngcn: return "ngcn";
    case ModelKind::Ngat: return "ngat";
  }
  return "gcn";
}

bool is_normalized(ModelKind k) { return k == ModelKind::Ngcn || k == ModelKind::Ngat; }

namespace {

bool is_gat(ModelKind k) { return k == ModelKind::Gat || k == ModelKind::Ngat; }

ad::Tensor glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  ad::Tensor t({rows, cols});
  for (double& v : t.values()) v = u(rng);
  return t;
}

std::string layer_name(std::size_t l, const std::string& what) { return "l" + std::to_string(l) + "." + what; }

std::string head_name(std::size_t l, std::size_t h, const std::string& what) {
  return "l" + std::to_string(l) + ".h" + std::to_string(h) + "." + what;
}

}  // namespace

void ModelSpec::validate() const {
  if (in_dim == 0 || hidden == 0) throw InvalidArgument("model dimensions must be positive");
  if (layers == 0) throw InvalidArgument("model needs at least one layer");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must lie in [0, 1)");
  if (head == Head::Classifier && out_dim == 0) throw InvalidArgument("classifier needs at least one class");
  if (is_gat(kind) && (heads == 0 || hidden % heads != 0)) {
    throw InvalidArgument("hidden size " + std::to_string(hidden) + " is not divisible by " + std::to_string(heads) +
                          " heads");
  }
  if (is_normalized(kind)) norm.validate();
  if (!(hgcn_curvature > 0.0)) throw InvalidArgument("hyperbolic baseline curvature must be positive");
}

Model::Model(ModelSpec spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < spec_.layers; ++l) {
    const std::size_t in = l == 0 ? spec_.in_dim : spec_.hidden;
    const std::size_t out = spec_.hidden;
    if (is_gat(spec_.kind)) {
      const std::size_t per = out / spec_.heads;
      for (std::size_t h = 0; h < spec_.heads; ++h) {
        params_.add(head_name(l, h, "W"), glorot(in, per, rng));
        params_.add(head_name(l, h, "a_src"), glorot(per, 1, rng));
        params_.add(head_name(l, h, "a_dst"), glorot(per, 1, rng));
      }
    } else {
      params_.add(layer_name(l, "W"), glorot(in, out, rng));
      if (spec_.kind == ModelKind::Hgcn) {
        params_.add(layer_name(l, "a_self"), glorot(out, 1, rng));
        params_.add(layer_name(l, "a_neigh"), glorot(out, 1, rng));
      }
    }
    if (spec_.bias) params_.add(layer_name(l, "b"), ad::Tensor({1, out}));
  }
  if (spec_.head == Head::Classifier) {
    params_.add("dec.W", glorot(spec_.hidden, spec_.out_dim, rng));
    params_.add("dec.b", ad::Tensor({1, spec_.out_dim}));
  } else {
    params_.add("fd.r", ad::Tensor::vector({2.0}));
    params_.add("fd.t", ad::Tensor::vector({1.0}));
  }
}

std::vector<std::size_t> Model::norm_after() const {
  if (!is_normalized(spec_.kind)) return {};
  const std::size_t L = spec_.layers;
  switch (spec_.norm.placement) {
    case norm::Placement::PerLayer: {
      std::vector<std::size_t> all(L);
      for (std::size_t l = 0; l < L; ++l) all[l] = l + 1;
      return all;
    }
    case norm::Placement::Final: return {L};
    case norm::Placement::Middle: return {L == 1 ? 1 : (L + 1) / 2};
  }
  return {};
}

NodeId Model::param(Graph& g, const std::string& name) const {
  if (auto id = g.find_input(name)) return *id;
  return g.input(name, params_.value(name).shape(), true);
}

BuiltModel Model::build(Graph& g, const GraphContext& ctx, NodeId x) const {
  BuiltModel built;
  const double keep = 1.0 - spec_.dropout;
  const auto after = norm_after();
  auto normalized_here = [&](std::size_t l) { return std::find(after.begin(), after.end(), l + 1) != after.end(); };
  auto bias = [&](std::size_t l) -> std::optional<NodeId> {
    if (!spec_.bias) return std::nullopt;
    return param(g, layer_name(l, "b"));
  };

  NodeId h = x;
  if (spec_.kind == ModelKind::Hgcn) h = gn::project(g, gn::exp0(g, x, spec_.hgcn_curvature), spec_.hgcn_curvature);

  for (std::size_t l = 0; l < spec_.layers; ++l) {
    switch (spec_.kind) {
      case ModelKind::Gcn:
      case ModelKind::Ngcn: {
        LayerNodes p{param(g, layer_name(l, "W")), bias(l), spec_.act, keep, spec_.slope};
        h = normalized_here(l) ? ngcn_layer(g, ctx, h, p, spec_.norm) : gcn_layer(g, ctx, h, p);
        break;
      }
      case ModelKind::Gat:
      case ModelKind::Ngat: {
        GatNodes p;
        for (std::size_t k = 0; k < spec_.heads; ++k) {
          p.heads.push_back({param(g, head_name(l, k, "W")), param(g, head_name(l, k, "a_src")),
                             param(g, head_name(l, k, "a_dst"))});
        }
        p.b = bias(l);
        p.act = spec_.act;
        p.keep = keep;
        p.attn_keep = keep;
        p.slope = spec_.slope;
        p.concat = true;
        GatOutput o = normalized_here(l) ? ngat_layer(g, ctx, h, p, spec_.norm) : gat_layer(g, ctx, h, p);
        built.attention.push_back(o.attention);
        h = o.out;
        break;
      }
      case ModelKind::Hgcn: {
        HgcnNodes p;
        p.w = param(g, layer_name(l, "W"));
        p.b = bias(l);
        p.a_self = param(g, layer_name(l, "a_self"));
        p.a_neigh = param(g, layer_name(l, "a_neigh"));
        p.act = spec_.act;
        p.keep = keep;
        p.slope = spec_.slope;
        p.curvature = spec_.hgcn_curvature;
        p.origin_base = spec_.hgcn_origin_base;
        HgcnOutput o = hgcn_layer(g, ctx, h, p);
        built.attention.push_back({o.attention});
        h = o.out;
        break;
      }
    }
    built.layer_outputs.push_back(h);
  }
  built.embedding = h;

  if (spec_.head == Head::Classifier) {
    NodeId z = h;
    if (spec_.kind == ModelKind::Hgcn) z = gn::log0(g, z, spec_.hgcn_curvature);
    z = maybe_dropout(g, z, keep);
    built.logits = g.add(g.matmul(z, param(g, "dec.W")), param(g, "dec.b"));
  }
  return built;
}

NodeId Model::pair_logits(Graph& g, NodeId embedding, const ad::IndexPtr& u, const ad::IndexPtr& v) const {
  if (spec_.head != Head::FermiDirac) throw InvalidArgument("pair_logits needs the Fermi-Dirac head");
  const NodeId zu = g.gather_rows(embedding, u);
  const NodeId zv = g.gather_rows(embedding, v);
  NodeId d2;
  if (spec_.kind == ModelKind::Hgcn) {
    d2 = g.square(gn::distance(g, zu, zv, spec_.hgcn_curvature));
  } else {
    d2 = g.row_sum(g.square(g.sub(zu, zv)));
  }
  return g.div(g.sub(param(g, "fd.r"), d2), param(g, "fd.t"));
}

}  // namespace hypnorm::gnn
