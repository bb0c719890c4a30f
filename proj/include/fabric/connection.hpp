#pragma once

#include <utility>
#include <vector>

#include "fabric/graph.hpp"

namespace fabric {

/// Graph with a d x d transform per canonical edge. For edge (i -> j) the transform T_ij maps
/// the frame of j into the frame of i; traversing the edge backwards uses T_ij^{-1}.
struct ConnectionGraph {
  WeightedGraph base;
  Index d = 1;
  std::vector<MatrixXd> transforms;

  /// All transforms identity.
  static ConnectionGraph trivial(WeightedGraph g, Index d);
  void validate() const;
  /// Transform taking the frame of the other endpoint of edge e into the frame of endpoint a.
  MatrixXd transform_between(Index e, Index a) const;
};

/// Stacked Laplacian sum_e w_e (E_i - T_ij E_j)^T (E_i - T_ij E_j).
MatrixXd assemble_connection_laplacian(const ConnectionGraph& cg);

/// 1/2 sum_e w_e ||T_ij f_j - f_i||^2.
double consistency_energy(const ConnectionGraph& cg, const VectorXd& f);

struct GaugeAnchor {
  MatrixXd A;
  VectorXd a;

  /// Clamp the block of the smallest-id vertex to `value`.
  static GaugeAnchor clamp_first(const ConnectionGraph& cg, const VectorXd& value);
};

enum class SaddleOrdering { Natural, Reversed };

struct AnchoredSolution {
  VectorXd f;
  VectorXd multiplier;
  double stationarity_residual = 0.0;  // ||L f + A^T lambda - b||
  double anchor_residual = 0.0;        // ||A f - a||
};

/// Solves [[L, A^T], [A, 0]] [f; lambda] = [b; a].
AnchoredSolution solve_anchored(const ConnectionGraph& cg, const GaugeAnchor& anchor, const VectorXd& b,
                                SaddleOrdering ordering = SaddleOrdering::Natural);

/// Gauge action: T'_ij = g_i T_ij g_j^{-1}, f'_i = g_i f_i. Every g_i must be orthogonal.
std::pair<ConnectionGraph, VectorXd> apply_gauge(const ConnectionGraph& cg, const VectorXd& f,
                                                 const std::vector<MatrixXd>& g);

}  // namespace fabric
