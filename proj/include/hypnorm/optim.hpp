#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hypnorm/parameters.hpp"

namespace hypnorm::optim {

enum class Method { Sgd, Adam, RiemannianAdam };

Method parse_method(const std::string& text);
std::string to_string(Method m);

struct OptimConfig {
  Method method = Method::RiemannianAdam;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;
};

/// p <- p - lr (g + lambda p).
void sgd_step(std::span<double> p, std::span<const double> g, const OptimConfig& cfg, const std::string& name = "param");

/// Bias-corrected Adam; weight decay enters as an L2 gradient term.
void adam_step(std::span<double> p, std::span<const double> g, AdamState& state, const OptimConfig& cfg,
               const std::string& name = "param");

/// Euclidean tags defer to adam_step. Ball tags treat each row of `p` (width
/// `row_width`) as a ball point: the gradient is rescaled by (1 - c|p|^2)^2/4,
/// Adam moments run on it in ambient coordinates, and the row moves along
/// exp_p(-lr * m_hat / (sqrt(v_hat) + eps)).
void riemannian_adam_step(std::span<double> p, std::span<const double> g, AdamState& state, const OptimConfig& cfg,
                          const ManifoldTag& tag, std::size_t row_width, const std::string& name = "param");

/// Owns per-parameter state and steps a whole ParameterStore from its grad buffers.
class Optimizer {
 public:
  explicit Optimizer(OptimConfig cfg);

  void step(ParameterStore& params);
  const OptimConfig& config() const noexcept { return cfg_; }
  const AdamState* state(const std::string& name) const;

 private:
  OptimConfig cfg_;
  std::unordered_map<std::string, AdamState> states_;
};

}  // namespace hypnorm::optim
