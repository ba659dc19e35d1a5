#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hypnorm::geo {

using Vec = std::vector<double>;

/// Ball curvature magnitude c > 0; the ball has radius 1/sqrt(c).
class Curvature {
 public:
  explicit Curvature(double c);
  double value() const noexcept { return c_; }
  double sqrt() const noexcept { return sqrt_c_; }
  double radius() const noexcept { return 1.0 / sqrt_c_; }
  bool operator==(const Curvature& o) const noexcept { return c_ == o.c_; }

 private:
  double c_;
  double sqrt_c_;
};

/// A point of the open Poincare ball with sqrt(c)|p| < 1 - 1e-12.
class PoincarePoint {
 public:
  /// Throws InvalidArgument unless coords lie strictly inside the ball margin.
  PoincarePoint(Vec coords, Curvature c);

  /// Clips coords onto radius (1 - 1e-12)/sqrt(c) when they reach the margin.
  static PoincarePoint projected(Vec coords, Curvature c);
  static PoincarePoint origin(std::size_t dim, Curvature c);

  const Vec& coords() const noexcept { return coords_; }
  Curvature curvature() const noexcept { return c_; }
  std::size_t dim() const noexcept { return coords_.size(); }
  double norm() const;
  bool is_origin() const;
  PoincarePoint operator-() const;

 private:
  struct Unchecked {};
  PoincarePoint(Vec coords, Curvature c, Unchecked) : coords_(std::move(coords)), c_(c) {}

  Vec coords_;
  Curvature c_;
};

/// Scales x in place onto the margin radius if needed. Returns true when clipped.
bool project_to_ball(std::span<double> x, Curvature c);
bool in_ball(std::span<const double> x, Curvature c);
/// Number of clips performed by geometry operations since process start.
std::size_t projection_count();

PoincarePoint mobius_add(const PoincarePoint& a, const PoincarePoint& b);
PoincarePoint mobius_scalar_mul(double r, const PoincarePoint& p);
/// lambda_v = 2 / (1 - c|v|^2).
double conformal_factor(const PoincarePoint& v);

PoincarePoint exp_map_origin(std::span<const double> x, Curvature c);
/// `saturated` (optional) reports whether p sits at the ball margin, where
/// artanh has lost most of its precision.
Vec log_map_origin(const PoincarePoint& p, bool* saturated = nullptr);

PoincarePoint exp_map_at(const PoincarePoint& v, std::span<const double> x);
Vec log_map_at(const PoincarePoint& v, const PoincarePoint& p);

/// P_{0->v}(x) = (1 - c|v|^2) x, and its inverse.
Vec parallel_transport_from_origin(const PoincarePoint& v, std::span<const double> x);
Vec parallel_transport_to_origin(const PoincarePoint& v, std::span<const double> x);

/// d(a, b) = (2/sqrt(c)) artanh(sqrt(c) |-a (+) b|).
double hyperbolic_distance(const PoincarePoint& a, const PoincarePoint& b);

}  // namespace hypnorm::geo
