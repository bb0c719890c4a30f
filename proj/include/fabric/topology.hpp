#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fabric/graph.hpp"

namespace fabric {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

VectorXd forman_ricci(const WeightedGraph& g);

/// Sum of squared deviations of the curvature from its mean.
double curvature_variance_loss(const WeightedGraph& g);

struct Filtration {
  VectorXd edge_values;
  double vertex_value = 0.0;
};

/// f(e_ij) = alpha ||S_i - S_j|| + beta |Ric_F(e_ij)|; `states` holds one row per vertex index.
Filtration filtration_values(const WeightedGraph& g, const MatrixXd& states, double alpha, double beta);

struct PersistencePoint {
  double birth;
  double death;  // +inf for essential classes
  bool essential() const { return death == kInf; }
};

struct PersistenceDiagram {
  int dim = 0;
  std::vector<PersistencePoint> points;

  std::vector<PersistencePoint> finite_points() const;
  std::vector<double> essential_births() const;
  /// {"dim":k,"points":[[b,d],...],"essential":[b,...]}, finite points only in "points".
  std::string to_json() const;
};

PersistenceDiagram persistence_diagram(const WeightedGraph& g, const Filtration& f, int dim);

/// Exact bottleneck distance. Returns +inf when the essential counts differ.
double bottleneck_distance(const PersistenceDiagram& a, const PersistenceDiagram& b);

struct ScalePolicy {
  std::vector<double> scales;
  std::vector<double> weights;
  void validate() const;
};

/// f_sigma(e) = (1 - lambda) f(e) + lambda * mean over edges sharing a vertex with e, lambda = sigma/(1+sigma).
Filtration smooth_filtration(const WeightedGraph& g, const Filtration& f, double sigma);

struct ScaleDiagrams {
  double sigma;
  PersistenceDiagram h0;
  PersistenceDiagram h1;
};

struct MultiscaleResult {
  std::vector<ScaleDiagrams> per_scale;
  /// sup over scales of max(d_B^0, d_B^1) against the second filtration, when one was given.
  std::optional<double> sup_drift;
};

MultiscaleResult multiscale_analysis(const WeightedGraph& g, const Filtration& f, const ScalePolicy& p,
                                     const Filtration* other = nullptr);

struct CurvatureStats {
  double mean = 0.0;
  double stddev = 0.0;
  double variance_loss = 0.0;
  double algebraic_connectivity = 0.0;
};

struct SurgeryLog {
  std::vector<EdgeSpec> removed_edges;
  std::vector<EdgeSpec> restored_edges;
  int cycles_examined = 0;
  int cycles_validated = 0;
  int removals_rejected = 0;
  CurvatureStats before;
  CurvatureStats after;
};

struct SurgeryOptions {
  double eps_neck = 0.1;
  double z = 2.0;
};

struct SurgeryResult {
  WeightedGraph graph;
  Filtration filtration;
  SurgeryLog log;
};

SurgeryResult neck_surgery(const WeightedGraph& g, const Filtration& f, const SurgeryOptions& opts = {});

struct StabilityRatio {
  double bottleneck = 0.0;
  double sup_norm = 0.0;
  double ratio = 0.0;
};

/// Bottleneck taken as the max over H0 and H1.
StabilityRatio ph_stability_ratio(const Filtration& f, const Filtration& g, const WeightedGraph& graph);

/// alpha0 d_B^0 + alpha1 d_B^1 between the diagrams of two filtered graphs.
double ph_distance(const WeightedGraph& ga, const Filtration& fa, const WeightedGraph& gb, const Filtration& fb,
                   double alpha0 = 0.5, double alpha1 = 0.5);

}  // namespace fabric
