#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hypnorm/tensor.hpp"

namespace hypnorm::ad {

using NodeId = std::size_t;
using Index = std::vector<std::size_t>;
using IndexPtr = std::shared_ptr<const Index>;

enum class OpKind {
  Input,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  MatMul,
  SpMM,
  Tanh,
  Artanh,
  Relu,
  LeakyRelu,
  ClampMin,
  Sigmoid,
  LogSigmoid,
  Log,
  Exp,
  Sqrt,
  Square,
  Abs,
  Affine,
  Sum,
  Mean,
  RowSum,
  NormL2,
  NormL1,
  SoftmaxRows,
  ConcatCols,
  Dropout,
  GatherRows,
  ScatterAddRows,
  SegmentSoftmax,
  HypNormRows,
  LogMap0Rows,
  BallProjectRows,
  SoftmaxCrossEntropy,
};

const char* op_name(OpKind kind);

/// Reduction axis for the norm primitives.
enum class Axis { All, Rows };

struct Node {
  OpKind kind = OpKind::Input;
  std::vector<NodeId> inputs;
  Shape shape;
  std::string name;
  bool trainable = false;
  double p0 = 0.0;
  double p1 = 0.0;
  Axis axis = Axis::All;
  std::size_t count = 0;
  std::shared_ptr<const Tensor> constant;
  std::shared_ptr<const SparseMatrix> sparse;
  IndexPtr index;
};

/// Static computation graph. Nodes are appended in topological order: every
/// builder call validates shapes against existing nodes and returns the id of
/// the new node. A built graph is never mutated by evaluation, so one graph
/// may be evaluated concurrently against distinct bindings.
class Graph {
 public:
  NodeId input(std::string name, Shape shape, bool trainable = false);
  NodeId constant(Tensor value, std::string name = {});

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId spmm(std::shared_ptr<const SparseMatrix> a, NodeId x);

  NodeId tanh(NodeId x);
  /// Input is clamped to [-1+1e-15, 1-1e-15].
  NodeId artanh(NodeId x);
  NodeId relu(NodeId x);
  NodeId leaky_relu(NodeId x, double slope);
  /// max(x, lo); the gradient is passed only where x > lo.
  NodeId clamp_min(NodeId x, double lo);
  NodeId sigmoid(NodeId x);
  NodeId log_sigmoid(NodeId x);
  NodeId log(NodeId x);
  NodeId exp(NodeId x);
  NodeId sqrt(NodeId x);
  NodeId square(NodeId x);
  NodeId abs(NodeId x);
  NodeId neg(NodeId x) { return affine(x, -1.0, 0.0); }
  NodeId scale(NodeId x, double k) { return affine(x, k, 0.0); }
  NodeId shift(NodeId x, double b) { return affine(x, 1.0, b); }
  NodeId affine(NodeId x, double k, double b);

  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  NodeId row_sum(NodeId x);
  NodeId norm_l2(NodeId x, Axis axis = Axis::All);
  NodeId norm_l1(NodeId x, Axis axis = Axis::All);

  NodeId softmax_rows(NodeId x);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  /// Inverted dropout: train mode keeps each value with probability `keep`
  /// and divides by `keep`; eval mode is the identity.
  NodeId dropout(NodeId x, double keep);

  NodeId gather_rows(NodeId x, IndexPtr index);
  NodeId scatter_add_rows(NodeId x, IndexPtr index, std::size_t out_rows);
  /// Softmax over the rows sharing a segment id, independently per column.
  NodeId segment_softmax(NodeId x, IndexPtr segment, std::size_t segments);

  /// Row-wise s * tanh(sqrt(c)|x|)/(sqrt(c)|x|) * x. With s = 1 this is the
  /// exponential map at the origin of the Poincare ball.
  NodeId hyp_norm_rows(NodeId x, double c, double s);
  /// Row-wise artanh(sqrt(c)|x|)/(sqrt(c)|x|) * x (logarithmic map at origin).
  NodeId log_map0_rows(NodeId x, double c);
  /// Rows with sqrt(c)|x| >= 1 - 1e-12 are pulled back to that radius.
  NodeId ball_project_rows(NodeId x, double c);

  /// Mean negative log-likelihood of `labels` under row-wise softmax(logits).
  NodeId softmax_cross_entropy(NodeId logits, IndexPtr labels);

  void set_output(const std::string& name, NodeId id);
  NodeId output(const std::string& name) const;
  bool has_output(const std::string& name) const { return outputs_.count(name) != 0; }
  std::optional<NodeId> find_input(const std::string& name) const;
  void label(NodeId id, std::string name);

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }
  const Shape& shape(NodeId id) const { return nodes_.at(id).shape; }
  /// Ids of the trainable input nodes, in creation order.
  std::vector<NodeId> trainable_inputs() const;
  std::string describe(NodeId id) const;

 private:
  NodeId push(Node node);
  NodeId unary(OpKind kind, NodeId x, double p0 = 0.0, double p1 = 0.0);
  NodeId binary(OpKind kind, NodeId a, NodeId b);
  void check_id(NodeId id) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> outputs_;
  std::unordered_map<std::string, NodeId> input_names_;
};

/// Named input tensors. Stores non-owning pointers: bound tensors must outlive
/// the forward pass that uses them.
class Bindings {
 public:
  Bindings& bind(const std::string& name, const Tensor& value) {
    map_[name] = &value;
    return *this;
  }
  const Tensor* find(const std::string& name) const {
    auto it = map_.find(name);
    return it == map_.end() ? nullptr : it->second;
  }

 private:
  std::unordered_map<std::string, const Tensor*> map_;
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t seed = 0;
};

/// Per-binding result of a forward pass.
class Evaluation {
 public:
  Evaluation() = default;
  Evaluation(Evaluation&&) = default;
  Evaluation& operator=(Evaluation&&) = default;
  Evaluation(const Evaluation&) = delete;
  Evaluation& operator=(const Evaluation&) = delete;

  bool complete() const noexcept { return complete_; }
  const Tensor& value(NodeId id) const;
  const Tensor& output(const std::string& name) const;
  /// Number of ball rows clipped by ball_project_rows nodes in this pass.
  std::size_t projections() const noexcept { return projections_; }

 private:
  friend Evaluation forward(const Graph&, const Bindings&, ForwardOptions);
  friend std::map<std::string, Tensor> backward(const Graph&, const Evaluation&, NodeId);

  const Graph* graph_ = nullptr;
  std::vector<Tensor> owned_;
  std::vector<const Tensor*> values_;
  std::vector<std::vector<double>> aux_;
  std::size_t projections_ = 0;
  bool complete_ = false;
};

/// Evaluates every node. Throws ShapeError for a missing or mis-shaped binding
/// and NumericError for a node that produces NaN/Inf.
Evaluation forward(const Graph& graph, const Bindings& inputs, ForwardOptions options = {});

/// Reverse-mode pass seeded at the scalar node `seed`. Returns the gradient of
/// the seed with respect to every trainable input, keyed by input name.
std::map<std::string, Tensor> backward(const Graph& graph, const Evaluation& eval, NodeId seed);

}  // namespace hypnorm::ad
