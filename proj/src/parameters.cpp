#include "hypnorm/parameters.hpp"

#include "hypnorm/error.hpp"

namespace hypnorm::optim {

ad::Tensor& ParameterStore::add(const std::string& name, ad::Tensor value, ManifoldTag tag) {
  if (index_.count(name)) throw InvalidArgument("duplicate parameter '" + name + "'");
  if (tag.is_ball() && !(tag.curvature > 0.0)) throw InvalidArgument("ball parameter '" + name + "' needs c > 0");
  index_.emplace(name, params_.size());
  params_.push_back({name, std::move(value), tag});
  return params_.back().value;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return params_[it->second];
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return params_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::bind_all(ad::Bindings& b) const {
  for (const auto& p : params_) b.bind(p.name, p.value);
}

void ParameterStore::accumulate(const std::map<std::string, ad::Tensor>& grads) {
  for (const auto& [name, g] : grads) {
    auto it = index_.find(name);
    if (it == index_.end()) continue;
    auto& param = params_[it->second];
    if (!param.value.same_shape(g)) throw ShapeError("gradient of " + name, "shape differs from parameter");
    auto dst = param.value.grad();
    auto src = g.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

}  // namespace hypnorm::optim
