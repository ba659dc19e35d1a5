#include "hypnorm/geometry_graph.hpp"

#include <cmath>

namespace hypnorm::geo::nodes {

namespace {
constexpr double kMinDenominator = 1e-15;
}

NodeId exp0(Graph& g, NodeId x, double c) { return g.hyp_norm_rows(x, c, 1.0); }

NodeId log0(Graph& g, NodeId p, double c) { return g.log_map0_rows(p, c); }

NodeId mobius_add(Graph& g, NodeId a, NodeId b, double c) {
  const NodeId xy = g.row_sum(g.mul(a, b));
  const NodeId x2 = g.row_sum(g.square(a));
  const NodeId y2 = g.row_sum(g.square(b));
  // (1 + 2c<a,b> + c|b|^2) a + (1 - c|a|^2) b over 1 + 2c<a,b> + c^2 |a|^2 |b|^2
  const NodeId ka = g.add(g.affine(xy, 2.0 * c, 1.0), g.scale(y2, c));
  const NodeId kb = g.affine(x2, -c, 1.0);
  const NodeId num = g.add(g.mul(ka, a), g.mul(kb, b));
  const NodeId den = g.add(g.affine(xy, 2.0 * c, 1.0), g.scale(g.mul(x2, y2), c * c));
  // the denominator is >= (1 - c|a||b|)^2 but cancels to <= 0 at the boundary
  return g.div(num, g.clamp_min(den, kMinDenominator));
}

NodeId inverse_half_conformal(Graph& g, NodeId v, double c) {
  return g.clamp_min(g.affine(g.row_sum(g.square(v)), -c, 1.0), kMinDenominator);
}

NodeId exp_at(Graph& g, NodeId v, NodeId x, double c) {
  // v (+) exp0((lambda_v / 2) x)
  const NodeId scaled = g.div(x, inverse_half_conformal(g, v, c));
  return mobius_add(g, v, exp0(g, scaled, c), c);
}

NodeId log_at(Graph& g, NodeId v, NodeId p, double c) {
  const NodeId u = mobius_add(g, g.neg(v), p, c);
  return g.mul(inverse_half_conformal(g, v, c), log0(g, u, c));
}

NodeId distance(Graph& g, NodeId a, NodeId b, double c) {
  const double sc = std::sqrt(c);
  const NodeId u = mobius_add(g, g.neg(a), b, c);
  return g.scale(g.artanh(g.scale(g.norm_l2(u, ad::Axis::Rows), sc)), 2.0 / sc);
}

NodeId matvec(Graph& g, NodeId p, NodeId w, double c) { return exp0(g, g.matmul(log0(g, p, c), w), c); }

NodeId diag_matvec(Graph& g, NodeId p, NodeId r, double c) { return exp0(g, g.mul(r, log0(g, p, c)), c); }

NodeId project(Graph& g, NodeId p, double c) { return g.ball_project_rows(p, c); }

}  // namespace hypnorm::geo::nodes
