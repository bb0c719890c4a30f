#include "fabric/topology.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace fabric {

VectorXd forman_ricci(const WeightedGraph& g) {
  const VectorXd& wv = g.vertex_weights();
  VectorXd ric(g.num_edges());
  for (Index e = 0; e < g.num_edges(); ++e) {
    const Edge& ed = g.edge(e);
    const double we = ed.weight;
    double s = (wv(ed.tail) + wv(ed.head)) / we;
    for (Index k : g.incident(ed.tail))
      if (k != e) s -= wv(ed.tail) / std::sqrt(we * g.edge(k).weight);
    for (Index k : g.incident(ed.head))
      if (k != e) s -= wv(ed.head) / std::sqrt(we * g.edge(k).weight);
    ric(e) = we * s;
  }
  return ric;
}

double curvature_variance_loss(const WeightedGraph& g) {
  if (g.num_edges() == 0) return 0.0;
  const VectorXd ric = forman_ricci(g);
  return (ric.array() - ric.mean()).square().sum();
}

Filtration filtration_values(const WeightedGraph& g, const MatrixXd& states, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0) throw InvalidArgument("filtration weights must be nonnegative");
  if (states.rows() != g.num_vertices())
    throw InvalidArgument("state matrix has " + std::to_string(states.rows()) + " rows for " +
                          std::to_string(g.num_vertices()) + " vertices");
  Filtration f;
  f.edge_values = VectorXd::Zero(g.num_edges());
  const VectorXd ric = beta != 0.0 ? forman_ricci(g) : VectorXd::Zero(g.num_edges());
  for (Index e = 0; e < g.num_edges(); ++e) {
    const Edge& ed = g.edge(e);
    double v = 0.0;
    if (alpha != 0.0) v += alpha * (states.row(ed.tail) - states.row(ed.head)).norm();
    if (beta != 0.0) v += beta * std::abs(ric(e));
    f.edge_values(e) = v;
  }
  return f;
}

std::vector<PersistencePoint> PersistenceDiagram::finite_points() const {
  std::vector<PersistencePoint> out;
  for (const auto& p : points)
    if (!p.essential()) out.push_back(p);
  return out;
}

std::vector<double> PersistenceDiagram::essential_births() const {
  std::vector<double> out;
  for (const auto& p : points)
    if (p.essential()) out.push_back(p.birth);
  std::sort(out.begin(), out.end());
  return out;
}

std::string PersistenceDiagram::to_json() const {
  nlohmann::json j;
  j["dim"] = dim;
  j["points"] = nlohmann::json::array();
  j["essential"] = nlohmann::json::array();
  for (const auto& p : points) {
    if (p.essential()) {
      j["points"].push_back({p.birth, nullptr});
      j["essential"].push_back(p.birth);
    } else {
      j["points"].push_back({p.birth, p.death});
    }
  }
  return j.dump();
}

PersistenceDiagram persistence_diagram(const WeightedGraph& g, const Filtration& f, int dim) {
  if (dim != 0 && dim != 1) throw InvalidArgument("only dimensions 0 and 1 exist on graphs");
  const Index n = g.num_vertices(), m = g.num_edges();
  if (f.edge_values.size() != m)
    throw InvalidArgument("filtration has " + std::to_string(f.edge_values.size()) + " values for " +
                          std::to_string(m) + " edges");
  if (!f.edge_values.allFinite() || !std::isfinite(f.vertex_value))
    throw InvalidArgument("filtration values must be finite");

  std::vector<Index> order(static_cast<size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  auto value = [&](Index e) { return std::max(f.edge_values(e), f.vertex_value); };
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return value(a) < value(b); });

  // Union-find with the component root kept at its smallest vertex index (the elder).
  std::vector<Index> parent(static_cast<size_t>(n));
  std::iota(parent.begin(), parent.end(), Index{0});
  std::function<Index(Index)> find = [&](Index x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };

  PersistenceDiagram d;
  d.dim = dim;
  for (Index e : order) {
    Index a = find(g.edge(e).tail), b = find(g.edge(e).head);
    if (a == b) {
      if (dim == 1) d.points.push_back({value(e), kInf});
      continue;
    }
    if (b < a) std::swap(a, b);
    parent[b] = a;
    if (dim == 0) d.points.push_back({f.vertex_value, value(e)});
  }
  if (dim == 0) {
    for (Index i = 0; i < n; ++i)
      if (find(i) == i) d.points.push_back({f.vertex_value, kInf});
  }
  return d;
}

namespace {

double linf(const PersistencePoint& p, const PersistencePoint& q) {
  return std::max(std::abs(p.birth - q.birth), std::abs(p.death - q.death));
}

double diag_cost(const PersistencePoint& p) { return 0.5 * (p.death - p.birth); }

bool has_perfect_matching(const std::vector<std::vector<int>>& adj, int right_size) {
  const int left = static_cast<int>(adj.size());
  std::vector<int> match_right(static_cast<size_t>(right_size), -1);
  std::vector<char> seen;
  std::function<bool(int)> augment = [&](int u) {
    for (int v : adj[u]) {
      if (seen[v]) continue;
      seen[v] = 1;
      if (match_right[v] < 0 || augment(match_right[v])) {
        match_right[v] = u;
        return true;
      }
    }
    return false;
  };
  for (int u = 0; u < left; ++u) {
    seen.assign(static_cast<size_t>(right_size), 0);
    if (!augment(u)) return false;
  }
  return true;
}

double finite_bottleneck(const std::vector<PersistencePoint>& A, const std::vector<PersistencePoint>& B) {
  const int p = static_cast<int>(A.size()), q = static_cast<int>(B.size());
  if (p == 0 && q == 0) return 0.0;
  std::vector<double> cand{0.0};
  for (const auto& a : A) cand.push_back(diag_cost(a));
  for (const auto& b : B) cand.push_back(diag_cost(b));
  for (const auto& a : A)
    for (const auto& b : B) cand.push_back(linf(a, b));
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

  // Left: A_0..A_{p-1}, diag(B)_0..; right: B_0..B_{q-1}, diag(A)_0..
  auto feasible = [&](double t) {
    std::vector<std::vector<int>> adj(static_cast<size_t>(p + q));
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < q; ++j)
        if (linf(A[i], B[j]) <= t) adj[i].push_back(j);
      if (diag_cost(A[i]) <= t) adj[i].push_back(q + i);
    }
    for (int j = 0; j < q; ++j) {
      if (diag_cost(B[j]) <= t) adj[p + j].push_back(j);
      for (int i = 0; i < p; ++i) adj[p + j].push_back(q + i);
    }
    return has_perfect_matching(adj, p + q);
  };

  size_t lo = 0, hi = cand.size() - 1;
  while (lo < hi) {
    const size_t mid = (lo + hi) / 2;
    if (feasible(cand[mid]))
      hi = mid;
    else
      lo = mid + 1;
  }
  return cand[lo];
}

}  // namespace

double bottleneck_distance(const PersistenceDiagram& a, const PersistenceDiagram& b) {
  if (a.dim != b.dim) throw InvalidArgument("bottleneck distance between diagrams of different dimension");
  const std::vector<double> ea = a.essential_births(), eb = b.essential_births();
  if (ea.size() != eb.size()) return kInf;
  double ess = 0.0;
  for (size_t k = 0; k < ea.size(); ++k) ess = std::max(ess, std::abs(ea[k] - eb[k]));
  return std::max(ess, finite_bottleneck(a.finite_points(), b.finite_points()));
}

void ScalePolicy::validate() const {
  if (scales.empty()) throw InvalidArgument("scale policy needs at least one scale");
  if (weights.size() != scales.size()) throw InvalidArgument("scale policy needs one weight per scale");
  for (size_t k = 0; k < scales.size(); ++k) {
    if (scales[k] < 0.0) throw InvalidArgument("scales must be nonnegative");
    if (k > 0 && !(scales[k] > scales[k - 1])) throw InvalidArgument("scales must be strictly ascending");
    if (!(weights[k] > 0.0)) throw InvalidArgument("scale weights must be positive");
  }
  const double s = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(s - 1.0) > 1e-9) throw InvalidArgument("scale weights must sum to 1");
}

Filtration smooth_filtration(const WeightedGraph& g, const Filtration& f, double sigma) {
  if (sigma < 0.0) throw InvalidArgument("scale must be nonnegative");
  if (f.edge_values.size() != g.num_edges()) throw InvalidArgument("filtration does not match graph");
  const double lambda = sigma / (1.0 + sigma);
  Filtration out = f;
  if (lambda == 0.0) return out;
  for (Index e = 0; e < g.num_edges(); ++e) {
    double sum = 0.0;
    int count = 0;
    for (Index end : {g.edge(e).tail, g.edge(e).head})
      for (Index k : g.incident(end))
        if (k != e) {
          sum += f.edge_values(k);
          ++count;
        }
    if (count > 0) out.edge_values(e) = (1.0 - lambda) * f.edge_values(e) + lambda * (sum / count);
  }
  return out;
}

MultiscaleResult multiscale_analysis(const WeightedGraph& g, const Filtration& f, const ScalePolicy& p,
                                     const Filtration* other) {
  p.validate();
  MultiscaleResult res;
  double drift = 0.0;
  for (double sigma : p.scales) {
    const Filtration fs = smooth_filtration(g, f, sigma);
    ScaleDiagrams sd{sigma, persistence_diagram(g, fs, 0), persistence_diagram(g, fs, 1)};
    if (other) {
      const Filtration gs = smooth_filtration(g, *other, sigma);
      drift = std::max({drift, bottleneck_distance(sd.h0, persistence_diagram(g, gs, 0)),
                        bottleneck_distance(sd.h1, persistence_diagram(g, gs, 1))});
    }
    res.per_scale.push_back(std::move(sd));
  }
  if (other) res.sup_drift = drift;
  return res;
}

namespace {

CurvatureStats curvature_stats(const WeightedGraph& g) {
  CurvatureStats s;
  if (g.num_edges() > 0) {
    const VectorXd ric = forman_ricci(g);
    s.mean = ric.mean();
    s.variance_loss = (ric.array() - s.mean).square().sum();
    s.stddev = std::sqrt(s.variance_loss / static_cast<double>(ric.size()));
  }
  s.algebraic_connectivity = algebraic_connectivity(g);
  return s;
}

WeightedGraph subgraph(const WeightedGraph& g, const std::vector<bool>& alive) {
  std::vector<EdgeSpec> specs;
  const std::vector<EdgeSpec> all = g.edge_specs();
  for (size_t e = 0; e < all.size(); ++e)
    if (alive[e]) specs.push_back(all[e]);
  GraphOptions opts = g.options();
  opts.allow_disconnected = true;
  return WeightedGraph(g.vertices(), specs, g.vertex_weight_map(), opts);
}

}  // namespace

SurgeryResult neck_surgery(const WeightedGraph& g, const Filtration& f, const SurgeryOptions& opts) {
  if (!(opts.eps_neck > 0.0)) throw InvalidArgument("neck threshold must be positive");
  if (f.edge_values.size() != g.num_edges()) throw InvalidArgument("filtration does not match graph");
  const Index m = g.num_edges();
  SurgeryResult res;
  res.log.before = curvature_stats(g);
  std::vector<bool> alive(static_cast<size_t>(m), true);

  if (g.connected() && m > 0) {
    const VectorXd ric = forman_ricci(g);
    const double threshold = res.log.before.mean + opts.z * res.log.before.stddev;
    const CycleBasis basis = fundamental_cycle_basis(g);
    double loss = res.log.before.variance_loss;

    for (const auto& cycle : basis.cycles) {
      ++res.log.cycles_examined;
      if (std::any_of(cycle.begin(), cycle.end(), [&](Index e) { return !alive[e]; })) continue;

      std::vector<double> vals;
      double abs_ric = 0.0;
      for (Index e : cycle) {
        vals.push_back(f.edge_values(e));
        abs_ric += std::abs(ric(e));
      }
      abs_ric /= static_cast<double>(cycle.size());
      std::sort(vals.begin(), vals.end(), std::greater<>());
      const double proxy = vals.size() > 1 ? vals[0] - vals[1] : vals[0];
      if (!(proxy < opts.eps_neck && abs_ric > threshold)) continue;
      ++res.log.cycles_validated;

      Index victim = cycle.front();
      for (Index e : cycle)
        if (f.edge_values(e) > f.edge_values(victim) || (f.edge_values(e) == f.edge_values(victim) && e < victim))
          victim = e;

      std::vector<bool> trial = alive;
      trial[victim] = false;
      WeightedGraph candidate = subgraph(g, trial);
      std::optional<Index> restored;
      if (!candidate.connected()) {
        // Reconnect with the lightest removed edge that joins two components.
        const auto& lab = candidate.component_labels();
        for (Index e = 0; e < m; ++e) {
          if (trial[e]) continue;
          if (lab[g.edge(e).tail] == lab[g.edge(e).head]) continue;
          if (!restored || g.edge(e).weight < g.edge(*restored).weight) restored = e;
        }
        if (restored) {
          trial[*restored] = true;
          candidate = subgraph(g, trial);
        }
      }
      const CurvatureStats after = curvature_stats(candidate);
      bool accept = candidate.connected() && after.variance_loss <= loss;
      if (restored && after.algebraic_connectivity < res.log.before.algebraic_connectivity * (1.0 - 1e-9))
        accept = false;
      if (restored && *restored == victim) accept = false;
      if (!accept) {
        ++res.log.removals_rejected;
        continue;
      }
      alive = std::move(trial);
      loss = after.variance_loss;
      const Edge& ev = g.edge(victim);
      res.log.removed_edges.push_back({g.id(ev.tail), g.id(ev.head), ev.weight});
      if (restored) {
        const Edge& er = g.edge(*restored);
        res.log.restored_edges.push_back({g.id(er.tail), g.id(er.head), er.weight});
      }
    }
  }

  res.graph = subgraph(g, alive);
  if (g.connected()) {
    GraphOptions o = g.options();
    res.graph = WeightedGraph(res.graph.vertices(), res.graph.edge_specs(), res.graph.vertex_weight_map(), o);
  }
  res.filtration.vertex_value = f.vertex_value;
  res.filtration.edge_values.resize(res.graph.num_edges());
  Index k = 0;
  for (Index e = 0; e < m; ++e)
    if (alive[e]) res.filtration.edge_values(k++) = f.edge_values(e);
  res.log.after = curvature_stats(res.graph);
  return res;
}

StabilityRatio ph_stability_ratio(const Filtration& f, const Filtration& g, const WeightedGraph& graph) {
  if (f.edge_values.size() != graph.num_edges() || g.edge_values.size() != graph.num_edges())
    throw InvalidArgument("filtrations must match the graph");
  StabilityRatio r;
  r.sup_norm = std::abs(f.vertex_value - g.vertex_value);
  if (graph.num_edges() > 0)
    r.sup_norm = std::max(r.sup_norm, (f.edge_values - g.edge_values).cwiseAbs().maxCoeff());
  r.bottleneck = std::max(bottleneck_distance(persistence_diagram(graph, f, 0), persistence_diagram(graph, g, 0)),
                          bottleneck_distance(persistence_diagram(graph, f, 1), persistence_diagram(graph, g, 1)));
  if (r.sup_norm > 0.0)
    r.ratio = r.bottleneck / r.sup_norm;
  else
    r.ratio = r.bottleneck == 0.0 ? 0.0 : kInf;
  return r;
}

double ph_distance(const WeightedGraph& ga, const Filtration& fa, const WeightedGraph& gb, const Filtration& fb,
                   double alpha0, double alpha1) {
  return alpha0 * bottleneck_distance(persistence_diagram(ga, fa, 0), persistence_diagram(gb, fb, 0)) +
         alpha1 * bottleneck_distance(persistence_diagram(ga, fa, 1), persistence_diagram(gb, fb, 1));
}

}  // namespace fabric
