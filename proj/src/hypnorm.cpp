#include "hypnorm/hypnorm.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hypnorm/error.hpp"
#include "hypnorm/geometry.hpp"
#include "hypnorm/scalar_math.hpp"

namespace hypnorm::norm {

Placement parse_placement(const std::string& text) {
  if (text == "per_layer" || text == "per-layer") return Placement::PerLayer;
  if (text == "final") return Placement::Final;
  if (text == "middle") return Placement::Middle;
  throw InvalidArgument("unknown placement '" + text + "' (per_layer, final, middle)");
}

std::string to_string(Placement p) {
  switch (p) {
    case Placement::PerLayer: return "per_layer";
    case Placement::Final: return "final";
    case Placement::Middle: return "middle";
  }
  return "per_layer";
}

void NormConfig::validate() const {
  if (!(curvature > 0.0) || !std::isfinite(curvature)) throw InvalidArgument("curvature must be positive");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidArgument("scale must be positive");
}

double NormConfig::default_scale(double curvature) {
  if (curvature >= 0.3 && curvature <= 0.5) return 5.0;
  if (curvature == 1.5) return 3.0;
  return 1.0;
}

double omega(std::span<const double> x, double c) {
  return math::tanh_ratio(std::sqrt(c) * math::norm(x));
}

Vec apply_norm(std::span<const double> x, const NormConfig& cfg) {
  cfg.validate();
  const double f = cfg.scale * omega(x, cfg.curvature);
  Vec out(x.begin(), x.end());
  for (double& v : out) v *= f;
  return out;
}

ad::NodeId apply_norm(ad::Graph& g, ad::NodeId x, const NormConfig& cfg) {
  cfg.validate();
  return g.hyp_norm_rows(x, cfg.curvature, cfg.scale);
}

double omega_cascade(const std::vector<Vec>& layer_outputs, double c) {
  if (layer_outputs.empty()) throw InvalidArgument("omega_cascade needs at least one layer output");
  double prod = 1.0;
  for (const auto& y : layer_outputs) prod *= omega(y, c);
  return prod;
}

Vec DenseMap::apply(std::span<const double> x) const {
  if (x.size() != in) {
    throw ShapeError("DenseMap::apply", "expected " + std::to_string(in) + " inputs, got " + std::to_string(x.size()));
  }
  Vec y(out, 0.0);
  for (std::size_t i = 0; i < out; ++i) {
    double s = bias.empty() ? 0.0 : bias[i];
    for (std::size_t j = 0; j < in; ++j) s += weight[i * in + j] * x[j];
    switch (act) {
      case Activation::None: break;
      case Activation::Tanh: s = std::tanh(s); break;
      case Activation::Relu: s = std::max(s, 0.0); break;
      case Activation::LeakyRelu: s = s > 0 ? s : 0.2 * s; break;
    }
    y[i] = s;
  }
  return y;
}

bool DenseMap::linear() const {
  return act == Activation::None && std::all_of(bias.begin(), bias.end(), [](double b) { return b == 0.0; });
}

DenseMap DenseMap::random(std::size_t in, std::size_t out, double weight_scale, std::uint64_t seed, Activation act,
                          bool with_bias) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, weight_scale / std::sqrt(static_cast<double>(in)));
  DenseMap m;
  m.in = in;
  m.out = out;
  m.act = act;
  m.weight.resize(in * out);
  for (double& w : m.weight) w = n(rng);
  if (with_bias) {
    m.bias.resize(out);
    for (double& b : m.bias) b = n(rng);
  }
  return m;
}

namespace {

void check_chain(const std::vector<DenseMap>& layers, std::size_t input_dim) {
  if (layers.empty()) throw InvalidArgument("layer list is empty");
  std::size_t d = input_dim;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].in != d) {
      throw ShapeError("layer " + std::to_string(i), "expects " + std::to_string(layers[i].in) + " inputs, previous layer gives " +
                                                         std::to_string(d));
    }
    if (layers[i].weight.size() != layers[i].in * layers[i].out) throw ShapeError("layer " + std::to_string(i), "weight size");
    d = layers[i].out;
  }
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

Vec scaled(Vec v, double k) {
  for (double& e : v) e *= k;
  return v;
}

}  // namespace

Lemma2Report verify_lemma2(const std::vector<DenseMap>& layers, const std::vector<Vec>& ball_points, double c) {
  const geo::Curvature curv(c);
  Lemma2Report report;
  report.layers = layers.size();
  report.inputs = ball_points.size();
  for (const auto& p0 : ball_points) {
    check_chain(layers, p0.size());
    const geo::PoincarePoint start(p0, curv);

    geo::PoincarePoint chained = start;
    for (const auto& f : layers) {
      chained = geo::exp_map_origin(f.apply(geo::log_map_origin(chained)), curv);
    }

    Vec y = geo::log_map_origin(start);
    for (const auto& f : layers) y = f.apply(y);
    const geo::PoincarePoint collapsed = geo::exp_map_origin(y, curv);

    report.max_deviation = std::max(report.max_deviation, max_abs_diff(chained.coords(), collapsed.coords()));
  }
  return report;
}

Theorem1Report verify_theorem1(const std::vector<DenseMap>& layers, const std::vector<Vec>& inputs, double c) {
  Theorem1Report report;
  report.layers = layers.size();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].linear()) {
      throw InvalidArgument("verify_theorem1: layer " + std::to_string(i) + " is not linear (bias or activation present)");
    }
  }
  const bool square = std::all_of(layers.begin(), layers.end(), [](const DenseMap& f) { return f.in == f.out; });

  for (const auto& x : inputs) {
    check_chain(layers, x.size());
    Theorem1Sample s;

    Vec y(x);
    for (const auto& f : layers) {
      const Vec fy = f.apply(y);
      y = scaled(fy, omega(fy, c));
    }
    s.chain = y;

    std::vector<Vec> prefixes;
    Vec fx(x);
    for (const auto& f : layers) {
      fx = f.apply(fx);
      prefixes.push_back(fx);
    }
    s.cascade = scaled(fx, omega_cascade(prefixes, c));
    s.deviation_cascade = max_abs_diff(s.chain, s.cascade);
    report.max_deviation_cascade = std::max(report.max_deviation_cascade, s.deviation_cascade);

    if (square) {
      std::vector<Vec> direct;
      for (const auto& f : layers) direct.push_back(f.apply(x));
      s.literal = scaled(fx, omega_cascade(direct, c));
      s.deviation_literal = max_abs_diff(s.chain, *s.literal);
      report.max_deviation_literal = std::max(report.max_deviation_literal.value_or(0.0), *s.deviation_literal);
    }
    report.samples.push_back(std::move(s));
  }
  return report;
}

}  // namespace hypnorm::norm
