#include "hypnorm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hypnorm/error.hpp"
#include "hypnorm/scalar_math.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace hypnorm::ad {

namespace {

#if defined(__GLIBC__)
// Every pass frees and reallocates multi-megabyte tensors; served by mmap
// each one costs a fresh set of page faults.
const bool kAllocatorTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  return true;
}();
#endif

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Constant: return "constant";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::MatMul: return "matmul";
    case OpKind::SpMM: return "spmm";
    case OpKind::Tanh: return "tanh";
    case OpKind::Artanh: return "artanh";
    case OpKind::Relu: return "relu";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::ClampMin: return "clamp_min";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::LogSigmoid: return "log_sigmoid";
    case OpKind::Log: return "log";
    case OpKind::Exp: return "exp";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Square: return "square";
    case OpKind::Abs: return "abs";
    case OpKind::Affine: return "affine";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::RowSum: return "row_sum";
    case OpKind::NormL2: return "norm_l2";
    case OpKind::NormL1: return "norm_l1";
    case OpKind::SoftmaxRows: return "softmax";
    case OpKind::ConcatCols: return "concat";
    case OpKind::Dropout: return "dropout";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::ScatterAddRows: return "scatter_add_rows";
    case OpKind::SegmentSoftmax: return "segment_softmax";
    case OpKind::HypNormRows: return "hyp_norm_rows";
    case OpKind::LogMap0Rows: return "log_map0_rows";
    case OpKind::BallProjectRows: return "ball_project_rows";
    case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "?";
}

namespace {

struct Dims {
  std::size_t rows;
  std::size_t cols;
};

Dims dims_of(const Shape& s) {
  if (s.size() == 2) return {s[0], s[1]};
  if (s.size() == 1) return {1, s[0]};
  return {1, 1};
}

/// Shape produced by a row-wise reduction: [n, d] -> [n, 1], [d] -> [1].
Shape row_reduced(const Shape& s) {
  if (s.size() == 2) return {s[0], 1};
  return {1};
}

bool broadcast_dim(std::size_t a, std::size_t b, std::size_t& out) {
  if (a == b) {
    out = a;
  } else if (a == 1) {
    out = b;
  } else if (b == 1) {
    out = a;
  } else {
    return false;
  }
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph construction
// ---------------------------------------------------------------------------

void Graph::check_id(NodeId id) const {
  if (id >= nodes_.size()) throw InvalidArgument("graph node id " + std::to_string(id) + " does not exist");
}

NodeId Graph::push(Node node) {
  for (NodeId in : node.inputs) check_id(in);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

std::string Graph::describe(NodeId id) const {
  const Node& n = nodes_.at(id);
  std::string s = "node #" + std::to_string(id) + " (" + op_name(n.kind);
  if (!n.name.empty()) s += " '" + n.name + "'";
  return s + ")";
}

void Graph::label(NodeId id, std::string name) {
  check_id(id);
  if (nodes_[id].kind == OpKind::Input) throw InvalidArgument("input nodes are named at creation");
  nodes_[id].name = std::move(name);
}

NodeId Graph::input(std::string name, Shape shape, bool trainable) {
  if (name.empty()) throw InvalidArgument("graph inputs need a name");
  if (input_names_.count(name)) throw InvalidArgument("duplicate graph input '" + name + "'");
  if (shape.size() > 2) throw ShapeError(name, "rank above 2 is not supported");
  Node n;
  n.kind = OpKind::Input;
  n.shape = std::move(shape);
  n.name = name;
  n.trainable = trainable;
  const NodeId id = push(std::move(n));
  input_names_.emplace(std::move(name), id);
  return id;
}

NodeId Graph::constant(Tensor value, std::string name) {
  Node n;
  n.kind = OpKind::Constant;
  n.shape = value.shape();
  n.name = std::move(name);
  n.constant = std::make_shared<const Tensor>(std::move(value));
  return push(std::move(n));
}

NodeId Graph::binary(OpKind kind, NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  const Shape& sa = nodes_[a].shape;
  const Shape& sb = nodes_[b].shape;
  const Dims da = dims_of(sa);
  const Dims db = dims_of(sb);
  Dims out{};
  if (!broadcast_dim(da.rows, db.rows, out.rows) || !broadcast_dim(da.cols, db.cols, out.cols)) {
    throw ShapeError(std::string(op_name(kind)) + " of " + describe(a) + " and " + describe(b),
                     "cannot broadcast " + shape_string(sa) + " with " + shape_string(sb));
  }
  Node n;
  n.kind = kind;
  n.inputs = {a, b};
  if (sa.size() == 2 || sb.size() == 2) {
    n.shape = {out.rows, out.cols};
  } else {
    n.shape = {out.cols};
  }
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) { return binary(OpKind::Add, a, b); }
NodeId Graph::sub(NodeId a, NodeId b) { return binary(OpKind::Sub, a, b); }
NodeId Graph::mul(NodeId a, NodeId b) { return binary(OpKind::Mul, a, b); }
NodeId Graph::div(NodeId a, NodeId b) { return binary(OpKind::Div, a, b); }

NodeId Graph::matmul(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  const Shape& sa = nodes_[a].shape;
  const Shape& sb = nodes_[b].shape;
  // rank-1 left operand is a row vector, rank-1 right operand a column vector
  const std::size_t n = sa.size() == 2 ? sa[0] : 1;
  const std::size_t k = sa.size() == 2 ? sa[1] : shape_size(sa);
  const std::size_t kb = sb.size() == 2 ? sb[0] : shape_size(sb);
  const std::size_t m = sb.size() == 2 ? sb[1] : 1;
  if (k != kb) {
    throw ShapeError("matmul of " + describe(a) + " and " + describe(b),
                     "inner dimensions differ: " + shape_string(sa) + " x " + shape_string(sb));
  }
  Node node;
  node.kind = OpKind::MatMul;
  node.inputs = {a, b};
  if (sa.size() == 2 && sb.size() == 2) {
    node.shape = {n, m};
  } else if (sa.size() == 2) {
    node.shape = {n};
  } else if (sb.size() == 2) {
    node.shape = {m};
  } else {
    node.shape = {1};
  }
  return push(std::move(node));
}

NodeId Graph::spmm(std::shared_ptr<const SparseMatrix> a, NodeId x) {
  check_id(x);
  if (!a) throw InvalidArgument("spmm needs a sparse matrix");
  const Dims dx = dims_of(nodes_[x].shape);
  if (a->cols() != dx.rows || nodes_[x].shape.size() != 2) {
    throw ShapeError("spmm with " + describe(x), "sparse " + std::to_string(a->rows()) + "x" +
                                                     std::to_string(a->cols()) + " times " +
                                                     shape_string(nodes_[x].shape));
  }
  Node n;
  n.kind = OpKind::SpMM;
  n.inputs = {x};
  n.shape = {a->rows(), dx.cols};
  n.sparse = std::move(a);
  return push(std::move(n));
}

NodeId Graph::unary(OpKind kind, NodeId x, double p0, double p1) {
  check_id(x);
  Node n;
  n.kind = kind;
  n.inputs = {x};
  n.shape = nodes_[x].shape;
  n.p0 = p0;
  n.p1 = p1;
  return push(std::move(n));
}

NodeId Graph::tanh(NodeId x) { return unary(OpKind::Tanh, x); }
NodeId Graph::artanh(NodeId x) { return unary(OpKind::Artanh, x); }
NodeId Graph::relu(NodeId x) { return unary(OpKind::Relu, x); }
NodeId Graph::leaky_relu(NodeId x, double slope) { return unary(OpKind::LeakyRelu, x, slope); }
NodeId Graph::clamp_min(NodeId x, double lo) { return unary(OpKind::ClampMin, x, lo); }
NodeId Graph::sigmoid(NodeId x) { return unary(OpKind::Sigmoid, x); }
NodeId Graph::log_sigmoid(NodeId x) { return unary(OpKind::LogSigmoid, x); }
NodeId Graph::log(NodeId x) { return unary(OpKind::Log, x); }
NodeId Graph::exp(NodeId x) { return unary(OpKind::Exp, x); }
NodeId Graph::sqrt(NodeId x) { return unary(OpKind::Sqrt, x); }
NodeId Graph::square(NodeId x) { return unary(OpKind::Square, x); }
NodeId Graph::abs(NodeId x) { return unary(OpKind::Abs, x); }
NodeId Graph::affine(NodeId x, double k, double b) { return unary(OpKind::Affine, x, k, b); }

NodeId Graph::sum(NodeId x) {
  const NodeId id = unary(OpKind::Sum, x);
  nodes_[id].shape = {1};
  return id;
}

NodeId Graph::mean(NodeId x) {
  const NodeId id = unary(OpKind::Mean, x);
  nodes_[id].shape = {1};
  return id;
}

NodeId Graph::row_sum(NodeId x) {
  const NodeId id = unary(OpKind::RowSum, x);
  nodes_[id].shape = row_reduced(nodes_[x].shape);
  return id;
}

NodeId Graph::norm_l2(NodeId x, Axis axis) {
  const NodeId id = unary(OpKind::NormL2, x);
  nodes_[id].axis = axis;
  nodes_[id].shape = axis == Axis::All ? Shape{1} : row_reduced(nodes_[x].shape);
  return id;
}

NodeId Graph::norm_l1(NodeId x, Axis axis) {
  const NodeId id = unary(OpKind::NormL1, x);
  nodes_[id].axis = axis;
  nodes_[id].shape = axis == Axis::All ? Shape{1} : row_reduced(nodes_[x].shape);
  return id;
}

NodeId Graph::softmax_rows(NodeId x) { return unary(OpKind::SoftmaxRows, x); }

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw InvalidArgument("concat of zero tensors");
  for (NodeId p : parts) check_id(p);
  const bool rank2 = nodes_[parts[0]].shape.size() == 2;
  const std::size_t rows = dims_of(nodes_[parts[0]].shape).rows;
  std::size_t cols = 0;
  for (NodeId p : parts) {
    const Shape& s = nodes_[p].shape;
    if ((s.size() == 2) != rank2 || dims_of(s).rows != rows) {
      throw ShapeError("concat of " + describe(p), "row count or rank differs: " + shape_string(s));
    }
    cols += dims_of(s).cols;
  }
  Node n;
  n.kind = OpKind::ConcatCols;
  n.inputs = parts;
  n.shape = rank2 ? Shape{rows, cols} : Shape{cols};
  return push(std::move(n));
}

NodeId Graph::dropout(NodeId x, double keep) {
  if (!(keep > 0.0 && keep <= 1.0)) throw InvalidArgument("dropout keep probability must lie in (0, 1]");
  return unary(OpKind::Dropout, x, keep);
}

NodeId Graph::gather_rows(NodeId x, IndexPtr index) {
  check_id(x);
  if (!index) throw InvalidArgument("gather_rows needs an index");
  const Shape& s = nodes_[x].shape;
  if (s.size() != 2) throw ShapeError("gather_rows of " + describe(x), "needs a rank-2 input");
  for (std::size_t i : *index) {
    if (i >= s[0]) throw ShapeError("gather_rows of " + describe(x), "row " + std::to_string(i) + " out of range");
  }
  Node n;
  n.kind = OpKind::GatherRows;
  n.inputs = {x};
  n.shape = {index->size(), s[1]};
  n.index = std::move(index);
  return push(std::move(n));
}

NodeId Graph::scatter_add_rows(NodeId x, IndexPtr index, std::size_t out_rows) {
  check_id(x);
  if (!index) throw InvalidArgument("scatter_add_rows needs an index");
  const Shape& s = nodes_[x].shape;
  if (s.size() != 2 || index->size() != s[0]) {
    throw ShapeError("scatter_add_rows of " + describe(x), "index length must equal row count");
  }
  for (std::size_t i : *index) {
    if (i >= out_rows) throw ShapeError("scatter_add_rows of " + describe(x), "target row out of range");
  }
  Node n;
  n.kind = OpKind::ScatterAddRows;
  n.inputs = {x};
  n.shape = {out_rows, s[1]};
  n.index = std::move(index);
  n.count = out_rows;
  return push(std::move(n));
}

NodeId Graph::segment_softmax(NodeId x, IndexPtr segment, std::size_t segments) {
  check_id(x);
  if (!segment) throw InvalidArgument("segment_softmax needs segment ids");
  const Shape& s = nodes_[x].shape;
  if (s.size() != 2 || segment->size() != s[0]) {
    throw ShapeError("segment_softmax of " + describe(x), "segment ids must match row count");
  }
  for (std::size_t g : *segment) {
    if (g >= segments) throw ShapeError("segment_softmax of " + describe(x), "segment id out of range");
  }
  Node n;
  n.kind = OpKind::SegmentSoftmax;
  n.inputs = {x};
  n.shape = s;
  n.index = std::move(segment);
  n.count = segments;
  return push(std::move(n));
}

NodeId Graph::hyp_norm_rows(NodeId x, double c, double s) {
  if (!(c > 0.0) || !(s > 0.0)) throw InvalidArgument("hyp_norm_rows needs c > 0 and s > 0");
  return unary(OpKind::HypNormRows, x, c, s);
}

NodeId Graph::log_map0_rows(NodeId x, double c) {
  if (!(c > 0.0)) throw InvalidArgument("log_map0_rows needs c > 0");
  return unary(OpKind::LogMap0Rows, x, c);
}

NodeId Graph::ball_project_rows(NodeId x, double c) {
  if (!(c > 0.0)) throw InvalidArgument("ball_project_rows needs c > 0");
  return unary(OpKind::BallProjectRows, x, c);
}

NodeId Graph::softmax_cross_entropy(NodeId logits, IndexPtr labels) {
  check_id(logits);
  if (!labels) throw InvalidArgument("softmax_cross_entropy needs labels");
  const Shape& s = nodes_[logits].shape;
  const Dims d = dims_of(s);
  if (labels->size() != d.rows || labels->empty()) {
    throw ShapeError("softmax_cross_entropy of " + describe(logits), "one label per row required");
  }
  for (std::size_t y : *labels) {
    if (y >= d.cols) throw ShapeError("softmax_cross_entropy of " + describe(logits), "label out of range");
  }
  Node n;
  n.kind = OpKind::SoftmaxCrossEntropy;
  n.inputs = {logits};
  n.shape = {1};
  n.index = std::move(labels);
  return push(std::move(n));
}

void Graph::set_output(const std::string& name, NodeId id) {
  check_id(id);
  outputs_[name] = id;
}

NodeId Graph::output(const std::string& name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) throw InvalidArgument("graph has no output '" + name + "'");
  return it->second;
}

std::optional<NodeId> Graph::find_input(const std::string& name) const {
  auto it = input_names_.find(name);
  if (it == input_names_.end()) return std::nullopt;
  return it->second;
}

std::vector<NodeId> Graph::trainable_inputs() const {
  std::vector<NodeId> ids;
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::Input && nodes_[i].trainable) ids.push_back(i);
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Forward kernels
// ---------------------------------------------------------------------------

namespace {

constexpr double kNormFloor = 0.0;

template <class F>
void broadcast_apply(const Tensor& a, const Tensor& b, Tensor& out, F f) {
  const std::size_t R = out.rows(), C = out.cols();
  const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values().data();
  if (ar == R && ac == C && br == R && bc == C) {
    for (std::size_t i = 0; i < R * C; ++i) po[i] = f(pa[i], pb[i]);
    return;
  }
  for (std::size_t r = 0; r < R; ++r) {
    const double* ra = pa + (ar == 1 ? 0 : r) * ac;
    const double* rb = pb + (br == 1 ? 0 : r) * bc;
    for (std::size_t c = 0; c < C; ++c) {
      po[r * C + c] = f(ra[ac == 1 ? 0 : c], rb[bc == 1 ? 0 : c]);
    }
  }
}

/// Reduces a full-size gradient onto an operand's (possibly broadcast) shape.
void accumulate_broadcast(std::span<const double> g, std::size_t R, std::size_t C, std::span<double> target,
                          const Tensor& operand, const std::vector<double>* factor = nullptr) {
  const std::size_t orr = operand.rows(), oc = operand.cols();
  if (orr == R && oc == C) {
    if (factor) {
      for (std::size_t i = 0; i < R * C; ++i) target[i] += g[i] * (*factor)[i];
    } else {
      for (std::size_t i = 0; i < R * C; ++i) target[i] += g[i];
    }
    return;
  }
  for (std::size_t r = 0; r < R; ++r) {
    const std::size_t tr = orr == 1 ? 0 : r;
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t tc = oc == 1 ? 0 : c;
      const double v = factor ? g[r * C + c] * (*factor)[r * C + c] : g[r * C + c];
      target[tr * oc + tc] += v;
    }
  }
}

double log_sigmoid_value(double x) {
  // log(sigmoid(x)) = -softplus(-x)
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t node) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (node + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void matmul_kernel(const Tensor& a, const Tensor& b, Tensor& out, std::size_t n, std::size_t k, std::size_t m) {
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values().data();
  std::fill(po, po + n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = po + i * m;
    const double* arow = pa + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = pb + kk * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

struct MatDims {
  std::size_t n, k, m;
};

MatDims matmul_dims(const Shape& sa, const Shape& sb) {
  MatDims d{};
  d.n = sa.size() == 2 ? sa[0] : 1;
  d.k = sa.size() == 2 ? sa[1] : shape_size(sa);
  d.m = sb.size() == 2 ? sb[1] : 1;
  return d;
}

}  // namespace

const Tensor& Evaluation::value(NodeId id) const {
  if (id >= values_.size() || !values_[id]) throw InvalidArgument("evaluation has no value for node " + std::to_string(id));
  return *values_[id];
}

const Tensor& Evaluation::output(const std::string& name) const {
  if (!graph_) throw InvalidArgument("evaluation is empty");
  return value(graph_->output(name));
}

Evaluation forward(const Graph& graph, const Bindings& inputs, ForwardOptions options) {
  Evaluation ev;
  ev.graph_ = &graph;
  const std::size_t N = graph.size();
  ev.owned_.resize(N);
  ev.values_.assign(N, nullptr);
  ev.aux_.resize(N);

  for (NodeId id = 0; id < N; ++id) {
    const Node& node = graph.node(id);
    auto in = [&](std::size_t i) -> const Tensor& { return *ev.values_[node.inputs[i]]; };

    if (node.kind == OpKind::Input) {
      const Tensor* t = inputs.find(node.name);
      if (!t) throw ShapeError(graph.describe(id), "input is not bound");
      if (t->shape() != node.shape) {
        throw ShapeError(graph.describe(id), "bound shape " + shape_string(t->shape()) + " but graph expects " +
                                                 shape_string(node.shape));
      }
      ev.values_[id] = t;
      continue;
    }
    if (node.kind == OpKind::Constant) {
      ev.values_[id] = node.constant.get();
      continue;
    }

    Tensor& out = ev.owned_[id];
    out = Tensor(node.shape);
    auto o = out.values();

    switch (node.kind) {
      case OpKind::Add: broadcast_apply(in(0), in(1), out, [](double x, double y) { return x + y; }); break;
      case OpKind::Sub: broadcast_apply(in(0), in(1), out, [](double x, double y) { return x - y; }); break;
      case OpKind::Mul: broadcast_apply(in(0), in(1), out, [](double x, double y) { return x * y; }); break;
      case OpKind::Div: broadcast_apply(in(0), in(1), out, [](double x, double y) { return x / y; }); break;
      case OpKind::MatMul: {
        const MatDims d = matmul_dims(in(0).shape(), in(1).shape());
        matmul_kernel(in(0), in(1), out, d.n, d.k, d.m);
        break;
      }
      case OpKind::SpMM: {
        const Tensor& x = in(0);
        const std::size_t d = x.cols();
        std::fill(o.begin(), o.end(), 0.0);
        for (const auto& e : node.sparse->entries()) {
          const double* xr = x.values().data() + e.col * d;
          double* orow = o.data() + e.row * d;
          for (std::size_t j = 0; j < d; ++j) orow[j] += e.value * xr[j];
        }
        break;
      }
      case OpKind::Tanh: {
        auto x = in(0).values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(x[i]);
        break;
      }
      case OpKind::Artanh: {
        auto x = in(0).values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = math::artanh_clamped(x[i]);
        break;
      }
      case OpKind::Relu: {
        auto x = in(0).values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > 0 ? x[i] : 0.0;
        break;
      }
      case OpKind::LeakyRelu: {
        auto x = in(0).values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > 0 ? x[i] : node.p0 * x[i];
        break;
      }
      case OpKind::ClampMin: {
        auto x = in(0).values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > node.p0 ? x[i] : node.p0;
        break;
      }
      case OpKind::Sigmoid: {
        auto x = in(0).values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = sigmoid_value(x[i]);
        break;
      }
      case OpKind::LogSigmoid: {
        auto x = in(0).values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = log_sigmoid_value(x[i]);
        break;
      }
      case OpKind::Log: {
        auto x = in(0).values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::log(x[i]);
        break;
      }
      case OpKind::Exp: {
        auto x = in(0).values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::exp(x[i]);
        break;
      }
      case OpKind::Sqrt: {
        auto x = in(0).values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::sqrt(x[i]);
        break;
      }
      case OpKind::Square: {
        auto x = in(0).values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * x[i];
        break;
      }
      case OpKind::Abs: {
        auto x = in(0).values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::fabs(x[i]);
        break;
      }
      case OpKind::Affine: {
        auto x = in(0).values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = node.p0 * x[i] + node.p1;
        break;
      }
      case OpKind::Sum:
      case OpKind::Mean: {
        auto x = in(0).values();
        double s = 0.0;
        for (double v : x) s += v;
        o[0] = node.kind == OpKind::Mean ? (x.empty() ? 0.0 : s / static_cast<double>(x.size())) : s;
        break;
      }
      case OpKind::RowSum: {
        const Tensor& x = in(0);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          double s = 0.0;
          for (double v : x.row(r)) s += v;
          o[r] = s;
        }
        break;
      }
      case OpKind::NormL2:
      case OpKind::NormL1: {
        const Tensor& x = in(0);
        const bool l2 = node.kind == OpKind::NormL2;
        auto reduce = [&](std::span<const double> v) {
          double s = 0.0;
          for (double e : v) s += l2 ? e * e : std::fabs(e);
          return l2 ? std::sqrt(s) : s;
        };
        if (node.axis == Axis::All) {
          o[0] = reduce(x.values());
        } else {
          for (std::size_t r = 0; r < x.rows(); ++r) o[r] = reduce(x.row(r));
        }
        break;
      }
      case OpKind::SoftmaxRows: {
        const Tensor& x = in(0);
        const std::size_t C = x.cols();
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          const double mx = *std::max_element(xr.begin(), xr.end());
          double s = 0.0;
          for (std::size_t c = 0; c < C; ++c) {
            o[r * C + c] = std::exp(xr[c] - mx);
            s += o[r * C + c];
          }
          for (std::size_t c = 0; c < C; ++c) o[r * C + c] /= s;
        }
        break;
      }
      case OpKind::ConcatCols: {
        const std::size_t C = out.cols();
        std::size_t offset = 0;
        for (std::size_t p = 0; p < node.inputs.size(); ++p) {
          const Tensor& x = in(p);
          const std::size_t pc = x.cols();
          for (std::size_t r = 0; r < x.rows(); ++r) {
            std::copy_n(x.row(r).data(), pc, o.data() + r * C + offset);
          }
          offset += pc;
        }
        break;
      }
      case OpKind::Dropout: {
        auto x = in(0).values();
        const double keep = node.p0;
        if (!options.training || keep >= 1.0) {
          std::copy(x.begin(), x.end(), o.begin());
          break;
        }
        std::mt19937_64 rng(mix_seed(options.seed, id));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        auto& mask = ev.aux_[id];
        mask.resize(o.size());
        for (std::size_t i = 0; i < o.size(); ++i) {
          mask[i] = u(rng) < keep ? 1.0 / keep : 0.0;
          o[i] = x[i] * mask[i];
        }
        break;
      }
      case OpKind::GatherRows: {
        const Tensor& x = in(0);
        const std::size_t C = x.cols();
        const auto& idx = *node.index;
        for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(x.row(idx[i]).data(), C, o.data() + i * C);
        break;
      }
      case OpKind::ScatterAddRows: {
        const Tensor& x = in(0);
        const std::size_t C = x.cols();
        const auto& idx = *node.index;
        std::fill(o.begin(), o.end(), 0.0);
        for (std::size_t i = 0; i < idx.size(); ++i) {
          const double* xr = x.values().data() + i * C;
          double* orow = o.data() + idx[i] * C;
          for (std::size_t c = 0; c < C; ++c) orow[c] += xr[c];
        }
        break;
      }
      case OpKind::SegmentSoftmax: {
        const Tensor& x = in(0);
        const std::size_t C = x.cols();
        const auto& seg = *node.index;
        std::vector<double> mx(node.count * C, -std::numeric_limits<double>::infinity());
        std::vector<double> sum(node.count * C, 0.0);
        for (std::size_t i = 0; i < seg.size(); ++i) {
          for (std::size_t c = 0; c < C; ++c) mx[seg[i] * C + c] = std::max(mx[seg[i] * C + c], x.at(i, c));
        }
        for (std::size_t i = 0; i < seg.size(); ++i) {
          for (std::size_t c = 0; c < C; ++c) {
            o[i * C + c] = std::exp(x.at(i, c) - mx[seg[i] * C + c]);
            sum[seg[i] * C + c] += o[i * C + c];
          }
        }
        for (std::size_t i = 0; i < seg.size(); ++i) {
          for (std::size_t c = 0; c < C; ++c) o[i * C + c] /= sum[seg[i] * C + c];
        }
        break;
      }
      case OpKind::HypNormRows: {
        const Tensor& x = in(0);
        const double sc = std::sqrt(node.p0);
        const std::size_t C = x.cols();
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          const double f = node.p1 * math::tanh_ratio(sc * math::norm(xr));
          for (std::size_t c = 0; c < C; ++c) o[r * C + c] = f * xr[c];
        }
        break;
      }
      case OpKind::LogMap0Rows: {
        const Tensor& x = in(0);
        const double sc = std::sqrt(node.p0);
        const std::size_t C = x.cols();
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          const double f = math::artanh_ratio(sc * math::norm(xr));
          for (std::size_t c = 0; c < C; ++c) o[r * C + c] = f * xr[c];
        }
        break;
      }
      case OpKind::BallProjectRows: {
        const Tensor& x = in(0);
        const double sc = std::sqrt(node.p0);
        const double max_norm = (1.0 - math::kBallMargin) / sc;
        const std::size_t C = x.cols();
        auto& factors = ev.aux_[id];
        factors.assign(x.rows(), 1.0);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          const double nr = math::norm(xr);
          double f = 1.0;
          if (nr >= max_norm) {
            f = max_norm / nr;
            // nudge below the margin so the strict membership test holds after rounding
            while (sc * nr * f >= 1.0 - math::kBallMargin) f *= 1.0 - 1e-15;
            ++ev.projections_;
          }
          factors[r] = f;
          for (std::size_t c = 0; c < C; ++c) o[r * C + c] = f * xr[c];
        }
        break;
      }
      case OpKind::SoftmaxCrossEntropy: {
        const Tensor& x = in(0);
        const auto& labels = *node.index;
        double loss = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          const double mx = *std::max_element(xr.begin(), xr.end());
          double s = 0.0;
          for (double v : xr) s += std::exp(v - mx);
          loss += std::log(s) + mx - xr[labels[r]];
        }
        o[0] = loss / static_cast<double>(x.rows());
        break;
      }
      case OpKind::Input:
      case OpKind::Constant:
        break;
    }

    if (!out.all_finite()) throw NumericError(graph.describe(id), "non-finite output");
    ev.values_[id] = &ev.owned_[id];
  }
  ev.complete_ = true;
  return ev;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

std::map<std::string, Tensor> backward(const Graph& graph, const Evaluation& ev, NodeId seed) {
  if (!ev.complete_ || ev.graph_ != &graph) throw InvalidArgument("backward requires a completed forward pass of this graph");
  if (seed >= graph.size()) throw InvalidArgument("backward seed node does not exist");
  if (shape_size(graph.shape(seed)) != 1) {
    throw ShapeError(graph.describe(seed), "backward seed must be scalar, got " + shape_string(graph.shape(seed)));
  }

  const std::size_t N = seed + 1;
  std::vector<char> needs(N, 0);
  for (NodeId id = 0; id < N; ++id) {
    const Node& n = graph.node(id);
    if (n.kind == OpKind::Input) {
      needs[id] = n.trainable;
    } else {
      for (NodeId in : n.inputs) needs[id] = needs[id] || needs[in];
    }
  }

  std::vector<std::vector<double>> grads(N);
  auto grad_of = [&](NodeId id) -> std::span<double> {
    auto& g = grads[id];
    if (g.empty()) g.assign(shape_size(graph.shape(id)), 0.0);
    return g;
  };
  grad_of(seed)[0] = 1.0;

  for (NodeId id = seed + 1; id-- > 0;) {
    const Node& node = graph.node(id);
    if (!needs[id] || grads[id].empty() || node.kind == OpKind::Input || node.kind == OpKind::Constant) continue;
    const std::span<const double> g = grads[id];
    const Tensor& y = ev.value(id);
    auto x_of = [&](std::size_t i) -> const Tensor& { return ev.value(node.inputs[i]); };
    auto want = [&](std::size_t i) { return static_cast<bool>(needs[node.inputs[i]]); };

    switch (node.kind) {
      case OpKind::Add:
      case OpKind::Sub:
      case OpKind::Mul:
      case OpKind::Div: {
        const Tensor& a = x_of(0);
        const Tensor& b = x_of(1);
        const std::size_t R = y.rows(), C = y.cols();
        for (std::size_t side = 0; side < 2; ++side) {
          if (!want(side)) continue;
          std::vector<double> factor;
          const std::vector<double>* fp = nullptr;
          if (node.kind != OpKind::Add && !(node.kind == OpKind::Sub && side == 0)) {
            factor.resize(R * C);
            for (std::size_t r = 0; r < R; ++r) {
              for (std::size_t c = 0; c < C; ++c) {
                const double av = a.at(a.rows() == 1 ? 0 : r, a.cols() == 1 ? 0 : c);
                const double bv = b.at(b.rows() == 1 ? 0 : r, b.cols() == 1 ? 0 : c);
                double f = 0.0;
                switch (node.kind) {
                  case OpKind::Sub: f = -1.0; break;
                  case OpKind::Mul: f = side == 0 ? bv : av; break;
                  case OpKind::Div: f = side == 0 ? 1.0 / bv : -av / (bv * bv); break;
                  default: break;
                }
                factor[r * C + c] = f;
              }
            }
            fp = &factor;
          }
          accumulate_broadcast(g, R, C, grad_of(node.inputs[side]), side == 0 ? a : b, fp);
        }
        break;
      }
      case OpKind::MatMul: {
        const Tensor& a = x_of(0);
        const Tensor& b = x_of(1);
        const MatDims d = matmul_dims(a.shape(), b.shape());
        const double* pa = a.values().data();
        const double* pb = b.values().data();
        if (want(0)) {
          auto ga = grad_of(node.inputs[0]);
          for (std::size_t i = 0; i < d.n; ++i) {
            const double* gr = g.data() + i * d.m;
            for (std::size_t kk = 0; kk < d.k; ++kk) {
              const double* br = pb + kk * d.m;
              double s = 0.0;
              for (std::size_t j = 0; j < d.m; ++j) s += gr[j] * br[j];
              ga[i * d.k + kk] += s;
            }
          }
        }
        if (want(1)) {
          auto gb = grad_of(node.inputs[1]);
          for (std::size_t i = 0; i < d.n; ++i) {
            const double* gr = g.data() + i * d.m;
            const double* ar = pa + i * d.k;
            for (std::size_t kk = 0; kk < d.k; ++kk) {
              const double av = ar[kk];
              if (av == 0.0) continue;
              double* gbr = gb.data() + kk * d.m;
              for (std::size_t j = 0; j < d.m; ++j) gbr[j] += av * gr[j];
            }
          }
        }
        break;
      }
      case OpKind::SpMM: {
        if (!want(0)) break;
        const std::size_t d = y.cols();
        auto gx = grad_of(node.inputs[0]);
        for (const auto& e : node.sparse->entries()) {
          const double* gr = g.data() + e.row * d;
          double* gxr = gx.data() + e.col * d;
          for (std::size_t j = 0; j < d; ++j) gxr[j] += e.value * gr[j];
        }
        break;
      }
      case OpKind::Tanh:
      case OpKind::Artanh:
      case OpKind::Relu:
      case OpKind::LeakyRelu:
      case OpKind::ClampMin:
      case OpKind::Sigmoid:
      case OpKind::LogSigmoid:
      case OpKind::Log:
      case OpKind::Exp:
      case OpKind::Sqrt:
      case OpKind::Square:
      case OpKind::Abs:
      case OpKind::Affine: {
        if (!want(0)) break;
        auto x = x_of(0).values();
        auto yv = y.values();
        auto gx = grad_of(node.inputs[0]);
        for (std::size_t i = 0; i < gx.size(); ++i) {
          double d = 0.0;
          switch (node.kind) {
            case OpKind::Tanh: d = 1.0 - yv[i] * yv[i]; break;
            case OpKind::Artanh: {
              const double lim = 1.0 - math::kArtanhMargin;
              const double xc = std::clamp(x[i], -lim, lim);
              d = 1.0 / (1.0 - xc * xc);
              break;
            }
            case OpKind::Relu: d = x[i] > 0 ? 1.0 : 0.0; break;
            case OpKind::LeakyRelu: d = x[i] > 0 ? 1.0 : node.p0; break;
            case OpKind::ClampMin: d = x[i] > node.p0 ? 1.0 : 0.0; break;
            case OpKind::Sigmoid: d = yv[i] * (1.0 - yv[i]); break;
            case OpKind::LogSigmoid: d = sigmoid_value(-x[i]); break;
            case OpKind::Log: d = 1.0 / x[i]; break;
            case OpKind::Exp: d = yv[i]; break;
            case OpKind::Sqrt: d = yv[i] > 0 ? 0.5 / yv[i] : 0.0; break;
            case OpKind::Square: d = 2.0 * x[i]; break;
            case OpKind::Abs: d = x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0); break;
            case OpKind::Affine: d = node.p0; break;
            default: break;
          }
          gx[i] += g[i] * d;
        }
        break;
      }
      case OpKind::Sum:
      case OpKind::Mean: {
        if (!want(0)) break;
        auto gx = grad_of(node.inputs[0]);
        const double k = node.kind == OpKind::Mean ? g[0] / static_cast<double>(gx.size()) : g[0];
        for (double& v : gx) v += k;
        break;
      }
      case OpKind::RowSum: {
        if (!want(0)) break;
        const Tensor& x = x_of(0);
        auto gx = grad_of(node.inputs[0]);
        const std::size_t C = x.cols();
        for (std::size_t r = 0; r < x.rows(); ++r) {
          for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g[r];
        }
        break;
      }
      case OpKind::NormL2:
      case OpKind::NormL1: {
        if (!want(0)) break;
        const Tensor& x = x_of(0);
        auto gx = grad_of(node.inputs[0]);
        const bool l2 = node.kind == OpKind::NormL2;
        const std::size_t R = node.axis == Axis::All ? 1 : x.rows();
        const std::size_t C = node.axis == Axis::All ? x.size() : x.cols();
        for (std::size_t r = 0; r < R; ++r) {
          const double nr = y[r];
          for (std::size_t c = 0; c < C; ++c) {
            const double xv = x.values()[r * C + c];
            double d;
            if (l2) {
              d = nr > kNormFloor ? xv / nr : 0.0;
            } else {
              d = xv > 0 ? 1.0 : (xv < 0 ? -1.0 : 0.0);
            }
            gx[r * C + c] += g[r] * d;
          }
        }
        break;
      }
      case OpKind::SoftmaxRows: {
        if (!want(0)) break;
        auto gx = grad_of(node.inputs[0]);
        const std::size_t C = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < C; ++c) dot += g[r * C + c] * y.at(r, c);
          for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += y.at(r, c) * (g[r * C + c] - dot);
        }
        break;
      }
      case OpKind::ConcatCols: {
        const std::size_t C = y.cols();
        std::size_t offset = 0;
        for (std::size_t p = 0; p < node.inputs.size(); ++p) {
          const Tensor& x = x_of(p);
          const std::size_t pc = x.cols();
          if (want(p)) {
            auto gx = grad_of(node.inputs[p]);
            for (std::size_t r = 0; r < x.rows(); ++r) {
              for (std::size_t c = 0; c < pc; ++c) gx[r * pc + c] += g[r * C + offset + c];
            }
          }
          offset += pc;
        }
        break;
      }
      case OpKind::Dropout: {
        if (!want(0)) break;
        auto gx = grad_of(node.inputs[0]);
        const auto& mask = ev.aux_[id];
        if (mask.empty()) {
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
        } else {
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * mask[i];
        }
        break;
      }
      case OpKind::GatherRows: {
        if (!want(0)) break;
        auto gx = grad_of(node.inputs[0]);
        const std::size_t C = y.cols();
        const auto& idx = *node.index;
        for (std::size_t i = 0; i < idx.size(); ++i) {
          double* gr = gx.data() + idx[i] * C;
          for (std::size_t c = 0; c < C; ++c) gr[c] += g[i * C + c];
        }
        break;
      }
      case OpKind::ScatterAddRows: {
        if (!want(0)) break;
        auto gx = grad_of(node.inputs[0]);
        const std::size_t C = y.cols();
        const auto& idx = *node.index;
        for (std::size_t i = 0; i < idx.size(); ++i) {
          const double* gr = g.data() + idx[i] * C;
          for (std::size_t c = 0; c < C; ++c) gx[i * C + c] += gr[c];
        }
        break;
      }
      case OpKind::SegmentSoftmax: {
        if (!want(0)) break;
        auto gx = grad_of(node.inputs[0]);
        const std::size_t C = y.cols();
        const auto& seg = *node.index;
        std::vector<double> dot(node.count * C, 0.0);
        for (std::size_t i = 0; i < seg.size(); ++i) {
          for (std::size_t c = 0; c < C; ++c) dot[seg[i] * C + c] += g[i * C + c] * y.at(i, c);
        }
        for (std::size_t i = 0; i < seg.size(); ++i) {
          for (std::size_t c = 0; c < C; ++c) gx[i * C + c] += y.at(i, c) * (g[i * C + c] - dot[seg[i] * C + c]);
        }
        break;
      }
      case OpKind::HypNormRows:
      case OpKind::LogMap0Rows: {
        if (!want(0)) break;
        const Tensor& x = x_of(0);
        auto gx = grad_of(node.inputs[0]);
        const double c = node.p0;
        const double sc = std::sqrt(c);
        const double s = node.kind == OpKind::HypNormRows ? node.p1 : 1.0;
        const std::size_t C = x.cols();
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          const double t = sc * math::norm(xr);
          double f, slope;
          if (node.kind == OpKind::HypNormRows) {
            f = math::tanh_ratio(t);
            slope = math::tanh_ratio_slope(t);
          } else {
            f = math::artanh_ratio(t);
            slope = math::artanh_ratio_slope(t);
          }
          // d/dx [f(t) x] applied to g: f g + c * slope * (x . g) x
          double xg = 0.0;
          for (std::size_t k = 0; k < C; ++k) xg += xr[k] * g[r * C + k];
          for (std::size_t k = 0; k < C; ++k) gx[r * C + k] += s * (f * g[r * C + k] + c * slope * xg * xr[k]);
        }
        break;
      }
      case OpKind::BallProjectRows: {
        if (!want(0)) break;
        const Tensor& x = x_of(0);
        auto gx = grad_of(node.inputs[0]);
        const auto& factors = ev.aux_[id];
        const std::size_t C = x.cols();
        for (std::size_t r = 0; r < x.rows(); ++r) {
          const double f = factors[r];
          if (f == 1.0) {
            for (std::size_t k = 0; k < C; ++k) gx[r * C + k] += g[r * C + k];
            continue;
          }
          // y = R x / |x|: dy^T g = (R/|x|) (g - (u.g) u), u = x/|x|
          auto xr = x.row(r);
          const double nr = math::norm(xr);
          double ug = 0.0;
          for (std::size_t k = 0; k < C; ++k) ug += xr[k] / nr * g[r * C + k];
          for (std::size_t k = 0; k < C; ++k) gx[r * C + k] += f * (g[r * C + k] - ug * xr[k] / nr);
        }
        break;
      }
      case OpKind::SoftmaxCrossEntropy: {
        if (!want(0)) break;
        const Tensor& x = x_of(0);
        auto gx = grad_of(node.inputs[0]);
        const auto& labels = *node.index;
        const std::size_t C = x.cols();
        const double k = g[0] / static_cast<double>(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          const double mx = *std::max_element(xr.begin(), xr.end());
          double s = 0.0;
          for (double v : xr) s += std::exp(v - mx);
          for (std::size_t c = 0; c < C; ++c) {
            const double p = std::exp(xr[c] - mx) / s;
            gx[r * C + c] += k * (p - (c == labels[r] ? 1.0 : 0.0));
          }
        }
        break;
      }
      case OpKind::Input:
      case OpKind::Constant:
        break;
    }
  }

  std::map<std::string, Tensor> result;
  for (NodeId id = 0; id < N; ++id) {
    const Node& n = graph.node(id);
    if (n.kind != OpKind::Input || !n.trainable) continue;
    std::vector<double> g = grads[id].empty() ? std::vector<double>(shape_size(n.shape), 0.0) : std::move(grads[id]);
    result.emplace(n.name, Tensor(n.shape, std::move(g)));
  }
  return result;
}

}  // namespace hypnorm::ad
