#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <vector>

#include "fabric/error.hpp"

namespace fabric {

using Index = Eigen::Index;
using VertexId = std::int64_t;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Eigen::MatrixXd;
using VectorXd = Eigen::VectorXd;

/// Edge as supplied by the caller, in vertex-id space.
struct EdgeSpec {
  VertexId u;
  VertexId v;
  double w = 1.0;
};

/// Stored edge, in vertex-index space. Orientation is tail -> head.
struct Edge {
  Index tail;
  Index head;
  double weight;
};

enum class EdgeOrder {
  Canonical,  // sorted by (min id, max id), tail = smaller id
  AsGiven,    // input order and orientation preserved
};

struct GraphOptions {
  bool allow_disconnected = false;
  EdgeOrder order = EdgeOrder::Canonical;
};

class WeightedGraph {
 public:
  WeightedGraph() = default;
  WeightedGraph(std::vector<VertexId> vertices, const std::vector<EdgeSpec>& edges,
                const std::map<VertexId, double>& vertex_weights = {}, GraphOptions options = {});

  Index num_vertices() const { return static_cast<Index>(vertices_.size()); }
  Index num_edges() const { return static_cast<Index>(edges_.size()); }

  const std::vector<VertexId>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(Index e) const { return edges_[static_cast<size_t>(e)]; }
  VertexId id(Index i) const { return vertices_[static_cast<size_t>(i)]; }
  Index index_of(VertexId id) const;
  bool contains(VertexId id) const;

  const VectorXd& vertex_weights() const { return vertex_weights_; }
  VectorXd edge_weights() const;

  /// Edge indices incident to vertex index i, ascending.
  const std::vector<Index>& incident(Index i) const { return incident_[static_cast<size_t>(i)]; }
  Index degree(Index i) const { return static_cast<Index>(incident(i).size()); }
  Index other_end(Index e, Index i) const;

  /// Canonical index of input edge k, and whether its orientation was flipped.
  const std::vector<std::pair<Index, bool>>& input_edge_map() const { return input_map_; }

  /// Component label per vertex index (labels 0..c-1 in order of first vertex).
  const std::vector<Index>& component_labels() const { return component_; }
  Index num_components() const { return num_components_; }
  bool connected() const { return num_components_ <= 1; }

  const GraphOptions& options() const { return options_; }

  /// Edge list in id space (for rebuilding modified copies).
  std::vector<EdgeSpec> edge_specs() const;
  std::map<VertexId, double> vertex_weight_map() const;

 private:
  std::vector<VertexId> vertices_;
  std::vector<Edge> edges_;
  VectorXd vertex_weights_;
  std::vector<std::vector<Index>> incident_;
  std::vector<std::pair<Index, bool>> input_map_;
  std::vector<Index> component_;
  Index num_components_ = 0;
  GraphOptions options_;
};

/// Signed incidence: row per edge, -1 at tail, +1 at head.
template <typename Scalar = double>
Mat<Scalar> boundary_operator(const WeightedGraph& g) {
  Mat<Scalar> B = Mat<Scalar>::Zero(g.num_edges(), g.num_vertices());
  for (Index e = 0; e < g.num_edges(); ++e) {
    B(e, g.edge(e).tail) = Scalar(-1);
    B(e, g.edge(e).head) = Scalar(1);
  }
  return B;
}

template <typename Derived>
Mat<typename Derived::Scalar> edge_laplacian(const Eigen::MatrixBase<Derived>& B1) {
  return B1 * B1.transpose();
}

/// Weighted vertex Laplacian  sum_e w_e (e_t - e_h)(e_t - e_h)^T.
template <typename Scalar = double>
Mat<Scalar> vertex_laplacian(const WeightedGraph& g) {
  const Index n = g.num_vertices();
  Mat<Scalar> L = Mat<Scalar>::Zero(n, n);
  for (const Edge& e : g.edges()) {
    const Scalar w(e.weight);
    L(e.tail, e.tail) += w;
    L(e.head, e.head) += w;
    L(e.tail, e.head) -= w;
    L(e.head, e.tail) -= w;
  }
  return L;
}

struct CycleBasis {
  std::vector<Index> tree_edges;
  std::vector<Index> chords;
  /// Edge indices of each cycle (chord first, then the tree path).
  std::vector<std::vector<Index>> cycles;
  /// q x m, entries in {-1, 0, +1}; row r traverses the chord tail -> head.
  MatrixXd signature;
};

CycleBasis fundamental_cycle_basis(const WeightedGraph& g);

double algebraic_connectivity(const WeightedGraph& g);

/// Moore-Penrose pseudoinverse of a symmetric matrix; eigenvalues below tol * max|eig| dropped.
MatrixXd symmetric_pinv(const MatrixXd& A, double rel_tol = 1e-12);

double effective_resistance(const WeightedGraph& g, VertexId i, VertexId j);

/// Orthogonal projectors onto Im(B1) and ker(L1) in edge space.
MatrixXd gradient_projector(const MatrixXd& B1);
MatrixXd harmonic_projector(const MatrixXd& B1);

}  // namespace fabric
