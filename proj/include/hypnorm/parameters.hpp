#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "hypnorm/graph.hpp"

namespace hypnorm::optim {

struct ManifoldTag {
  enum class Kind { Euclidean, PoincareBall };
  Kind kind = Kind::Euclidean;
  double curvature = 0.0;

  static ManifoldTag euclidean() { return {}; }
  static ManifoldTag ball(double c) { return {Kind::PoincareBall, c}; }
  bool is_ball() const noexcept { return kind == Kind::PoincareBall; }
};

struct Parameter {
  std::string name;
  ad::Tensor value;
  ManifoldTag tag;
};

/// Named trainable tensors in registration order. The gradient of each lives
/// in the tensor's own grad buffer.
class ParameterStore {
 public:
  ad::Tensor& add(const std::string& name, ad::Tensor value, ManifoldTag tag = ManifoldTag::euclidean());

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  ad::Tensor& value(const std::string& name) { return at(name).value; }
  const ad::Tensor& value(const std::string& name) const { return at(name).value; }

  std::vector<Parameter>& all() noexcept { return params_; }
  const std::vector<Parameter>& all() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;

  void bind_all(ad::Bindings& b) const;
  /// Adds each named gradient into the matching parameter's grad buffer.
  void accumulate(const std::map<std::string, ad::Tensor>& grads);
  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace hypnorm::optim
