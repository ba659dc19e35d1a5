#pragma once

#include "hypnorm/graph.hpp"

// Poincare-ball operations as differentiable graph nodes. Every function
// works row-wise on an [n, d] node; a [1, d] operand broadcasts over rows.
namespace hypnorm::geo::nodes {

using ad::Graph;
using ad::NodeId;

NodeId exp0(Graph& g, NodeId x, double c);
NodeId log0(Graph& g, NodeId p, double c);
NodeId mobius_add(Graph& g, NodeId a, NodeId b, double c);
/// 2 / lambda_v per row, shape [n, 1].
NodeId inverse_half_conformal(Graph& g, NodeId v, double c);
NodeId exp_at(Graph& g, NodeId v, NodeId x, double c);
NodeId log_at(Graph& g, NodeId v, NodeId p, double c);
/// Geodesic distance per row pair, shape [n, 1].
NodeId distance(Graph& g, NodeId a, NodeId b, double c);
/// M (x) p = exp0(log0(p) W) for a dense [d_in, d_out] weight.
NodeId matvec(Graph& g, NodeId p, NodeId w, double c);
/// diag(r) (x) p = exp0(r * log0(p)) for a row-aligned diagonal r.
NodeId diag_matvec(Graph& g, NodeId p, NodeId r, double c);
NodeId project(Graph& g, NodeId p, double c);

}  // namespace hypnorm::geo::nodes
