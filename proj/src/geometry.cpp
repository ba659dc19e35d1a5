#include "hypnorm/geometry.hpp"

#include <atomic>
#include <cmath>

#include "hypnorm/error.hpp"
#include "hypnorm/scalar_math.hpp"

namespace hypnorm::geo {

namespace {

std::atomic<std::size_t> g_projections{0};

void require_same_ball(const PoincarePoint& a, const PoincarePoint& b, const char* op) {
  if (a.dim() != b.dim()) {
    throw InvalidArgument(std::string(op) + ": dimension mismatch " + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()));
  }
  if (!(a.curvature() == b.curvature())) throw InvalidArgument(std::string(op) + ": curvature mismatch");
}

double sq_norm(std::span<const double> x) { return math::dot(x, x); }

}  // namespace

Curvature::Curvature(double c) : c_(c), sqrt_c_(std::sqrt(c)) {
  if (!(c > 0.0) || !std::isfinite(c)) throw InvalidArgument("curvature must be positive and finite");
}

bool in_ball(std::span<const double> x, Curvature c) {
  return c.sqrt() * math::norm(x) < 1.0 - math::kBallMargin;
}

bool project_to_ball(std::span<double> x, Curvature c) {
  const double nr = math::norm(x);
  if (c.sqrt() * nr < 1.0 - math::kBallMargin) return false;
  double f = (1.0 - math::kBallMargin) / (c.sqrt() * nr);
  for (;;) {
    double s = 0.0;
    for (double v : x) s += (v * f) * (v * f);
    if (c.sqrt() * std::sqrt(s) < 1.0 - math::kBallMargin) break;
    f *= 1.0 - 1e-15;
  }
  for (double& v : x) v *= f;
  g_projections.fetch_add(1, std::memory_order_relaxed);
  return true;
}

std::size_t projection_count() { return g_projections.load(std::memory_order_relaxed); }

PoincarePoint::PoincarePoint(Vec coords, Curvature c) : coords_(std::move(coords)), c_(c) {
  for (double v : coords_) {
    if (!std::isfinite(v)) throw InvalidArgument("ball point has non-finite coordinate");
  }
  if (!in_ball(coords_, c_)) throw InvalidArgument("point lies outside the Poincare ball");
}

PoincarePoint PoincarePoint::projected(Vec coords, Curvature c) {
  for (double v : coords) {
    if (!std::isfinite(v)) throw NumericError("PoincarePoint::projected", "non-finite coordinate");
  }
  project_to_ball(coords, c);
  return PoincarePoint(std::move(coords), c, Unchecked{});
}

PoincarePoint PoincarePoint::origin(std::size_t dim, Curvature c) { return PoincarePoint(Vec(dim, 0.0), c, Unchecked{}); }

double PoincarePoint::norm() const { return math::norm(coords_); }

bool PoincarePoint::is_origin() const {
  for (double v : coords_) {
    if (v != 0.0) return false;
  }
  return true;
}

PoincarePoint PoincarePoint::operator-() const {
  Vec n(coords_.size());
  for (std::size_t i = 0; i < n.size(); ++i) n[i] = -coords_[i];
  return PoincarePoint(std::move(n), c_, Unchecked{});
}

PoincarePoint mobius_add(const PoincarePoint& a, const PoincarePoint& b) {
  require_same_ball(a, b, "mobius_add");
  const double c = a.curvature().value();
  const auto& x = a.coords();
  const auto& y = b.coords();
  const double xy = math::dot(x, y);
  const double x2 = sq_norm(x);
  const double y2 = sq_norm(y);
  const double ka = 1.0 + 2.0 * c * xy + c * y2;
  const double kb = 1.0 - c * x2;
  const double den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
  Vec out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (ka * x[i] + kb * y[i]) / den;
  return PoincarePoint::projected(std::move(out), a.curvature());
}

PoincarePoint mobius_scalar_mul(double r, const PoincarePoint& p) {
  const double sc = p.curvature().sqrt();
  const double nr = p.norm();
  if (nr == 0.0 || r == 0.0) return PoincarePoint::origin(p.dim(), p.curvature());
  const double f = std::tanh(r * math::artanh_clamped(sc * nr)) / (sc * nr);
  Vec out(p.coords());
  for (double& v : out) v *= f;
  return PoincarePoint::projected(std::move(out), p.curvature());
}

double conformal_factor(const PoincarePoint& v) {
  return 2.0 / (1.0 - v.curvature().value() * sq_norm(v.coords()));
}

PoincarePoint exp_map_origin(std::span<const double> x, Curvature c) {
  const double f = math::tanh_ratio(c.sqrt() * math::norm(x));
  Vec out(x.begin(), x.end());
  for (double& v : out) v *= f;
  return PoincarePoint::projected(std::move(out), c);
}

Vec log_map_origin(const PoincarePoint& p, bool* saturated) {
  const double t = p.curvature().sqrt() * p.norm();
  if (saturated) *saturated = t >= 1.0 - 2.0 * math::kBallMargin;
  const double f = math::artanh_ratio(t);
  Vec out(p.coords());
  for (double& v : out) v *= f;
  return out;
}

PoincarePoint exp_map_at(const PoincarePoint& v, std::span<const double> x) {
  if (x.size() != v.dim()) throw InvalidArgument("exp_map_at: dimension mismatch");
  if (v.is_origin()) return exp_map_origin(x, v.curvature());
  const double half_lambda = conformal_factor(v) / 2.0;
  Vec scaled(x.begin(), x.end());
  for (double& e : scaled) e *= half_lambda;
  return mobius_add(v, exp_map_origin(scaled, v.curvature()));
}

Vec log_map_at(const PoincarePoint& v, const PoincarePoint& p) {
  require_same_ball(v, p, "log_map_at");
  if (v.is_origin()) return log_map_origin(p);
  const double k = 2.0 / conformal_factor(v);
  Vec u = log_map_origin(mobius_add(-v, p));
  for (double& e : u) e *= k;
  return u;
}

Vec parallel_transport_from_origin(const PoincarePoint& v, std::span<const double> x) {
  if (x.size() != v.dim()) throw InvalidArgument("parallel_transport_from_origin: dimension mismatch");
  const double k = 1.0 - v.curvature().value() * sq_norm(v.coords());
  Vec out(x.begin(), x.end());
  for (double& e : out) e *= k;
  return out;
}

Vec parallel_transport_to_origin(const PoincarePoint& v, std::span<const double> x) {
  if (x.size() != v.dim()) throw InvalidArgument("parallel_transport_to_origin: dimension mismatch");
  const double k = 1.0 - v.curvature().value() * sq_norm(v.coords());
  Vec out(x.begin(), x.end());
  for (double& e : out) e /= k;
  return out;
}

double hyperbolic_distance(const PoincarePoint& a, const PoincarePoint& b) {
  require_same_ball(a, b, "hyperbolic_distance");
  const double sc = a.curvature().sqrt();
  const PoincarePoint u = mobius_add(-a, b);
  return 2.0 / sc * math::artanh_clamped(sc * u.norm());
}

}  // namespace hypnorm::geo
