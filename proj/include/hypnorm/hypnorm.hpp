#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hypnorm/graph.hpp"

namespace hypnorm::norm {

using Vec = std::vector<double>;

enum class Placement { PerLayer, Final, Middle };

Placement parse_placement(const std::string& text);
std::string to_string(Placement p);

struct NormConfig {
  double curvature = 1.0;
  double scale = 1.0;
  Placement placement = Placement::PerLayer;

  /// Throws InvalidArgument unless c > 0 and s > 0.
  void validate() const;
  /// 5 for c in [0.3, 0.5], 3 for c = 1.5, otherwise 1.
  static double default_scale(double curvature);
};

/// omega(x) = tanh(sqrt(c)|x|) / (sqrt(c)|x|), with omega(0) = 1.
double omega(std::span<const double> x, double c);

/// s * omega(x) * x.
Vec apply_norm(std::span<const double> x, const NormConfig& cfg);
/// Row-wise apply_norm as a graph node.
ad::NodeId apply_norm(ad::Graph& g, ad::NodeId x, const NormConfig& cfg);

/// Product of omega over the given layer outputs. Throws on an empty list.
double omega_cascade(const std::vector<Vec>& layer_outputs, double c);

enum class Activation { None, Tanh, Relu, LeakyRelu };

/// Dense map y = act(W x + b) with W stored row-major as out x in.
struct DenseMap {
  std::size_t in = 0;
  std::size_t out = 0;
  Vec weight;
  Vec bias;
  Activation act = Activation::None;

  Vec apply(std::span<const double> x) const;
  bool linear() const;
  static DenseMap random(std::size_t in, std::size_t out, double weight_scale, std::uint64_t seed,
                         Activation act = Activation::None, bool with_bias = false);
};

struct Lemma2Report {
  std::size_t layers = 0;
  std::size_t inputs = 0;
  double max_deviation = 0.0;
};

/// Compares the chain exp0 o f_n o log0 o ... o exp0 o f_1 o log0 applied to
/// ball points against the collapsed exp0 o F_n o log0.
Lemma2Report verify_lemma2(const std::vector<DenseMap>& layers, const std::vector<Vec>& ball_points, double c);

struct Theorem1Sample {
  /// Per-layer normalization chained on normalized outputs.
  Vec chain;
  /// Product of omega(F_i(x)) over cascade prefixes, times F_n(x).
  Vec cascade;
  /// Product of omega(f_i(x)) with each layer applied to x directly, times
  /// F_n(x); only when every layer is square.
  std::optional<Vec> literal;
  double deviation_cascade = 0.0;
  std::optional<double> deviation_literal;
};

struct Theorem1Report {
  std::size_t layers = 0;
  std::vector<Theorem1Sample> samples;
  double max_deviation_cascade = 0.0;
  std::optional<double> max_deviation_literal;
};

/// Requires every layer to be linear (no bias, no activation).
Theorem1Report verify_theorem1(const std::vector<DenseMap>& layers, const std::vector<Vec>& inputs, double c);

}  // namespace hypnorm::norm
