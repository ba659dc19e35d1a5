#include "hypnorm/optim.hpp"

#include <cmath>

#include "hypnorm/error.hpp"
#include "hypnorm/geometry.hpp"
#include "hypnorm/scalar_math.hpp"

namespace hypnorm::optim {

Method parse_method(const std::string& text) {
  if (text == "sgd") return Method::Sgd;
  if (text == "adam") return Method::Adam;
  if (text == "radam" || text == "riemannian_adam") return Method::RiemannianAdam;
  throw InvalidArgument("unknown optimizer '" + text + "' (adam, radam, sgd)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Sgd: return "sgd";
    case Method::Adam: return "adam";
    case Method::RiemannianAdam: return "radam";
  }
  return "radam";
}

namespace {

void check_step(std::span<double> p, std::span<const double> g, const OptimConfig& cfg, const std::string& name) {
  if (p.size() != g.size()) throw ShapeError(name, "gradient size differs from parameter size");
  if (!(cfg.lr > 0.0)) throw InvalidArgument("learning rate must be positive");
  for (double v : g) {
    if (!std::isfinite(v)) throw NumericError(name, "non-finite gradient");
  }
}

void ensure_state(AdamState& s, std::size_t n) {
  if (s.m.size() != n) {
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.t = 0;
  }
}

}  // namespace

void sgd_step(std::span<double> p, std::span<const double> g, const OptimConfig& cfg, const std::string& name) {
  check_step(p, g, cfg, name);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.lr * (g[i] + cfg.weight_decay * p[i]);
}

void adam_step(std::span<double> p, std::span<const double> g, AdamState& state, const OptimConfig& cfg,
               const std::string& name) {
  check_step(p, g, cfg, name);
  ensure_state(state, p.size());
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i] + cfg.weight_decay * p[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * gi;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

void riemannian_adam_step(std::span<double> p, std::span<const double> g, AdamState& state, const OptimConfig& cfg,
                          const ManifoldTag& tag, std::size_t row_width, const std::string& name) {
  if (!tag.is_ball()) {
    adam_step(p, g, state, cfg, name);
    return;
  }
  check_step(p, g, cfg, name);
  if (row_width == 0 || p.size() % row_width != 0) throw ShapeError(name, "row width does not divide parameter size");
  ensure_state(state, p.size());
  ++state.t;
  const geo::Curvature curv(tag.curvature);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

  std::vector<double> step(row_width);
  for (std::size_t r = 0; r < p.size() / row_width; ++r) {
    const std::size_t off = r * row_width;
    std::span<double> row = p.subspan(off, row_width);
    const double x2 = math::dot(row, row);
    const double k = 1.0 - tag.curvature * x2;
    const double metric = k * k / 4.0;
    for (std::size_t j = 0; j < row_width; ++j) {
      const std::size_t i = off + j;
      const double gi = metric * (g[i] + cfg.weight_decay * p[i]);
      state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * gi;
      state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
      step[j] = -cfg.lr * (state.m[i] / bc1) / (std::sqrt(state.v[i] / bc2) + cfg.eps);
    }
    const geo::PoincarePoint base = geo::PoincarePoint::projected({row.begin(), row.end()}, curv);
    const geo::PoincarePoint moved = geo::exp_map_at(base, step);
    std::copy(moved.coords().begin(), moved.coords().end(), row.begin());
  }
}

Optimizer::Optimizer(OptimConfig cfg) : cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw InvalidArgument("learning rate must be positive");
}

const AdamState* Optimizer::state(const std::string& name) const {
  auto it = states_.find(name);
  return it == states_.end() ? nullptr : &it->second;
}

void Optimizer::step(ParameterStore& params) {
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (auto& p : params.all()) {
      for (double v : p.value.grad()) sq += v * v;
    }
    const double nrm = std::sqrt(sq);
    if (nrm > cfg_.clip_norm) scale = cfg_.clip_norm / nrm;
  }
  std::vector<double> clipped;
  for (auto& p : params.all()) {
    std::span<const double> g = p.value.grad();
    if (scale != 1.0) {
      clipped.assign(g.begin(), g.end());
      for (double& v : clipped) v *= scale;
      g = clipped;
    }
    AdamState& st = states_[p.name];
    switch (cfg_.method) {
      case Method::Sgd: sgd_step(p.value.values(), g, cfg_, p.name); break;
      case Method::Adam: adam_step(p.value.values(), g, st, cfg_, p.name); break;
      case Method::RiemannianAdam:
        riemannian_adam_step(p.value.values(), g, st, cfg_, p.tag, p.value.cols(), p.name);
        break;
    }
    if (p.tag.is_ball() && cfg_.method != Method::RiemannianAdam) {
      const geo::Curvature curv(p.tag.curvature);
      for (std::size_t r = 0; r < p.value.rows(); ++r) geo::project_to_ball(p.value.row(r), curv);
    }
  }
}

}  // namespace hypnorm::optim
