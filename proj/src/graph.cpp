#include "fabric/graph.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

namespace fabric {

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(Index n) : parent_(static_cast<size_t>(n)) {
    std::iota(parent_.begin(), parent_.end(), Index{0});
  }
  Index find(Index x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  bool unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<Index> parent_;
};

}  // namespace

WeightedGraph::WeightedGraph(std::vector<VertexId> vertices, const std::vector<EdgeSpec>& edges,
                             const std::map<VertexId, double>& vertex_weights, GraphOptions options)
    : vertices_(std::move(vertices)), options_(options) {
  std::sort(vertices_.begin(), vertices_.end());
  if (std::adjacent_find(vertices_.begin(), vertices_.end()) != vertices_.end())
    throw InvalidArgument("duplicate vertex id");

  const Index n = num_vertices();
  vertex_weights_ = VectorXd::Ones(n);
  for (const auto& [id, w] : vertex_weights) {
    if (!contains(id)) throw InvalidArgument("vertex weight for unknown vertex " + std::to_string(id));
    if (!(w > 0.0)) throw InvalidArgument("vertex weight must be positive (vertex " + std::to_string(id) + ")");
    vertex_weights_(index_of(id)) = w;
  }

  struct Pending {
    Index tail, head;
    double w;
    size_t input;
    bool flipped;
  };
  std::vector<Pending> pending;
  pending.reserve(edges.size());
  std::set<std::pair<Index, Index>> seen;
  for (size_t k = 0; k < edges.size(); ++k) {
    const EdgeSpec& s = edges[k];
    if (!contains(s.u) || !contains(s.v))
      throw InvalidArgument("edge " + std::to_string(k) + " references an unknown vertex");
    if (s.u == s.v) throw InvalidArgument("self-loop at vertex " + std::to_string(s.u));
    if (!(s.w > 0.0)) throw InvalidArgument("edge " + std::to_string(k) + " has non-positive weight");
    Index a = index_of(s.u), b = index_of(s.v);
    auto key = std::minmax(a, b);
    if (!seen.insert({key.first, key.second}).second)
      throw InvalidArgument("multiple edges between " + std::to_string(s.u) + " and " + std::to_string(s.v));
    if (options.order == EdgeOrder::Canonical)
      pending.push_back({key.first, key.second, s.w, k, a > b});
    else
      pending.push_back({a, b, s.w, k, false});
  }
  if (options.order == EdgeOrder::Canonical) {
    std::sort(pending.begin(), pending.end(), [](const Pending& x, const Pending& y) {
      return std::tie(x.tail, x.head) < std::tie(y.tail, y.head);
    });
  }

  input_map_.assign(edges.size(), {0, false});
  incident_.assign(static_cast<size_t>(n), {});
  for (size_t e = 0; e < pending.size(); ++e) {
    edges_.push_back({pending[e].tail, pending[e].head, pending[e].w});
    input_map_[pending[e].input] = {static_cast<Index>(e), pending[e].flipped};
    incident_[pending[e].tail].push_back(static_cast<Index>(e));
    incident_[pending[e].head].push_back(static_cast<Index>(e));
  }

  DisjointSet ds(n);
  for (const Edge& e : edges_) ds.unite(e.tail, e.head);
  component_.assign(static_cast<size_t>(n), -1);
  std::map<Index, Index> label_of_root;
  for (Index i = 0; i < n; ++i) {
    Index r = ds.find(i);
    auto it = label_of_root.find(r);
    if (it == label_of_root.end()) it = label_of_root.emplace(r, static_cast<Index>(label_of_root.size())).first;
    component_[i] = it->second;
  }
  num_components_ = static_cast<Index>(label_of_root.size());

  if (!options.allow_disconnected && num_components_ > 1) {
    std::ostringstream msg;
    msg << "graph is disconnected (" << num_components_ << " components):";
    for (Index c = 0; c < num_components_; ++c) {
      msg << " {";
      bool first = true;
      for (Index i = 0; i < n; ++i)
        if (component_[i] == c) {
          msg << (first ? "" : ",") << vertices_[i];
          first = false;
        }
      msg << "}";
    }
    throw InvalidArgument(msg.str());
  }
}

Index WeightedGraph::index_of(VertexId id) const {
  auto it = std::lower_bound(vertices_.begin(), vertices_.end(), id);
  if (it == vertices_.end() || *it != id) throw InvalidArgument("unknown vertex " + std::to_string(id));
  return static_cast<Index>(it - vertices_.begin());
}

bool WeightedGraph::contains(VertexId id) const {
  return std::binary_search(vertices_.begin(), vertices_.end(), id);
}

VectorXd WeightedGraph::edge_weights() const {
  VectorXd w(num_edges());
  for (Index e = 0; e < num_edges(); ++e) w(e) = edges_[e].weight;
  return w;
}

Index WeightedGraph::other_end(Index e, Index i) const {
  const Edge& ed = edge(e);
  return ed.tail == i ? ed.head : ed.tail;
}

std::vector<EdgeSpec> WeightedGraph::edge_specs() const {
  std::vector<EdgeSpec> out;
  out.reserve(edges_.size());
  for (const Edge& e : edges_) out.push_back({id(e.tail), id(e.head), e.weight});
  return out;
}

std::map<VertexId, double> WeightedGraph::vertex_weight_map() const {
  std::map<VertexId, double> out;
  for (Index i = 0; i < num_vertices(); ++i) out[id(i)] = vertex_weights_(i);
  return out;
}

CycleBasis fundamental_cycle_basis(const WeightedGraph& g) {
  if (!g.connected()) {
    std::ostringstream msg;
    msg << "cycle basis needs a connected graph; found " << g.num_components() << " components:";
    for (Index c = 0; c < g.num_components(); ++c) {
      msg << " {";
      bool first = true;
      for (Index i = 0; i < g.num_vertices(); ++i)
        if (g.component_labels()[i] == c) {
          msg << (first ? "" : ",") << g.id(i);
          first = false;
        }
      msg << "}";
    }
    throw InvalidArgument(msg.str());
  }

  const Index n = g.num_vertices(), m = g.num_edges();
  std::vector<Index> order(static_cast<size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return g.edge(a).weight < g.edge(b).weight; });

  CycleBasis basis;
  std::vector<bool> in_tree(static_cast<size_t>(m), false);
  DisjointSet ds(n);
  for (Index e : order) {
    if (ds.unite(g.edge(e).tail, g.edge(e).head)) {
      in_tree[e] = true;
      basis.tree_edges.push_back(e);
    }
  }
  std::sort(basis.tree_edges.begin(), basis.tree_edges.end());

  // Root the tree at vertex 0 and record parent edges and depths.
  std::vector<Index> parent_edge(static_cast<size_t>(n), -1), depth(static_cast<size_t>(n), -1);
  std::vector<Index> stack{0};
  if (n > 0) depth[0] = 0;
  while (!stack.empty()) {
    Index v = stack.back();
    stack.pop_back();
    for (Index e : g.incident(v)) {
      if (!in_tree[e]) continue;
      Index u = g.other_end(e, v);
      if (depth[u] >= 0) continue;
      depth[u] = depth[v] + 1;
      parent_edge[u] = e;
      stack.push_back(u);
    }
  }

  for (Index e = 0; e < m; ++e)
    if (!in_tree[e]) basis.chords.push_back(e);

  basis.signature = MatrixXd::Zero(static_cast<Index>(basis.chords.size()), m);
  for (size_t r = 0; r < basis.chords.size(); ++r) {
    const Index chord = basis.chords[r];
    std::vector<Index> cycle{chord};
    basis.signature(static_cast<Index>(r), chord) = 1.0;
    // Walk from head back to tail through the tree: head -> ... -> lca <- ... <- tail.
    Index a = g.edge(chord).head, b = g.edge(chord).tail;
    std::vector<Index> from_b;
    auto step_up = [&](Index& v, bool forward) {
      Index e = parent_edge[v];
      Index up = g.other_end(e, v);
      // forward: traversal v -> up; otherwise up -> v (the b side is reversed later)
      Index from = forward ? v : up;
      double sign = (g.edge(e).tail == from) ? 1.0 : -1.0;
      basis.signature(static_cast<Index>(r), e) = sign;
      v = up;
      return e;
    };
    while (depth[a] > depth[b]) cycle.push_back(step_up(a, true));
    while (depth[b] > depth[a]) from_b.push_back(step_up(b, false));
    while (a != b) {
      cycle.push_back(step_up(a, true));
      from_b.push_back(step_up(b, false));
    }
    cycle.insert(cycle.end(), from_b.rbegin(), from_b.rend());
    basis.cycles.push_back(std::move(cycle));
  }
  return basis;
}

double algebraic_connectivity(const WeightedGraph& g) {
  if (g.num_vertices() < 2) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(vertex_laplacian(g), Eigen::EigenvaluesOnly);
  return std::max(0.0, es.eigenvalues()(1));
}

MatrixXd symmetric_pinv(const MatrixXd& A, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(A);
  const VectorXd& lam = es.eigenvalues();
  const double cutoff = rel_tol * lam.cwiseAbs().maxCoeff();
  VectorXd inv = VectorXd::Zero(lam.size());
  for (Index k = 0; k < lam.size(); ++k)
    if (std::abs(lam(k)) > cutoff) inv(k) = 1.0 / lam(k);
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

double effective_resistance(const WeightedGraph& g, VertexId i, VertexId j) {
  const Index a = g.index_of(i), b = g.index_of(j);
  if (g.component_labels()[a] != g.component_labels()[b])
    throw InvalidArgument("vertices " + std::to_string(i) + " and " + std::to_string(j) +
                          " lie in different components");
  if (a == b) return 0.0;
  const MatrixXd Lp = symmetric_pinv(vertex_laplacian(g));
  return std::max(0.0, Lp(a, a) + Lp(b, b) - 2.0 * Lp(a, b));
}

MatrixXd gradient_projector(const MatrixXd& B1) {
  // B1 (B1^T B1)^+ B1^T
  return B1 * symmetric_pinv(B1.transpose() * B1) * B1.transpose();
}

MatrixXd harmonic_projector(const MatrixXd& B1) {
  return MatrixXd::Identity(B1.rows(), B1.rows()) - gradient_projector(B1);
}

}  // namespace fabric
