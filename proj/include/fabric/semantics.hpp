#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fabric/cochain_opt.hpp"
#include "fabric/connection.hpp"
#include "fabric/graph.hpp"
#include "fabric/topology.hpp"

namespace fabric {

/// Split of a d-dimensional state into the L, B, F, I blocks. The blocks are opaque payloads.
struct BlockLayout {
  std::array<Index, 4> dims{0, 0, 0, 0};

  /// d/4 per block, remainder added to the last one.
  static BlockLayout uniform(Index d);
  Index total() const { return dims[0] + dims[1] + dims[2] + dims[3]; }
  Index offset(int block) const;
};

using Relations = std::map<std::string, std::vector<std::pair<VertexId, VertexId>>>;

struct SceneState {
  double t = 0.0;
  WeightedGraph graph;
  /// One row per vertex index.
  MatrixXd states;
  std::vector<std::string> labels;
  /// Constraint on the edge cochain x_e = ||S_head - S_tail||.
  AffineConstraint constraint;
  /// Per canonical edge; empty means identity.
  std::vector<MatrixXd> transforms;
  Relations relations;
  BlockLayout layout;

  Index dim() const { return states.cols(); }
  void validate() const;
  ConnectionGraph connection() const;
};

/// x_e = ||S_head - S_tail|| for every canonical edge.
VectorXd edge_cochain(const WeightedGraph& g, const MatrixXd& states);

struct OnnWeights {
  double task = 1.0;
  double consensus = 1.0;
  double connection = 1.0;
  double context = 1.0;
};

struct OnnOptions {
  OnnWeights weights;
  double eta0 = 1.0;           // initial (and maximal) step; backtracking shrinks it
  double loss_tol = 1e-10;     // relative loss change
  double grad_tol = 1e-9;      // projected gradient norm
  int k_max = 5000;
  double penalty_rho = 10.0;   // used when the constraint is inconsistent
  double projection_tol = 1e-12;
  double collapse_tol = 1e-7;  // edges shorter than this are treated as merged
};

struct LossComponents {
  double task = 0.0;
  double consensus = 0.0;
  double connection = 0.0;
  double context = 0.0;  // ||C x - tau||^2, unweighted
  /// consensus + connection + context, without the data term.
  double total() const { return consensus + connection + context; }
};

/// Total loss over stacked states s = [S_0; S_1; ...] with observations z:
///   task/2 ||s - z||^2 + consensus/2 x^T L1 x + connection/2 s^T L_conn s + context ||C x - tau||^2.
/// When `penalized`, the context term is replaced by rho ||C x - tau||.
/// Vertex clusters joined by collapsed edges; empty when no edge is collapsed.
/// Restricting to a face keeps every cluster rigid, where the loss is smooth.
struct Face {
  std::vector<Index> cluster;  // cluster id per vertex
  Index clusters = 0;
  bool empty() const { return cluster.empty(); }
};

class OnnProblem {
 public:
  OnnProblem(const SceneState& scene, const OnnOptions& opts, bool penalized = false);

  double value(const VectorXd& s) const;
  LossComponents components(const VectorXd& s) const;
  /// With a face, the gradient of the loss restricted to it.
  VectorXd gradient(const VectorXd& s, const Face* face = nullptr) const;
  /// Gauss-Newton projection onto {s : C x(s) = tau}; identity without constraint rows.
  VectorXd project(const VectorXd& s, const Face* face = nullptr) const;
  double residual(const VectorXd& s) const;
  /// Gradient component tangent to the constraint manifold (and to the face, if given).
  VectorXd tangent_gradient(const VectorXd& s, const Face* face = nullptr) const;
  double stationarity(const VectorXd& s, const Face* face = nullptr) const;
  Face face(const VectorXd& s) const;
  /// Orthogonal projection onto directions that move each cluster of the face rigidly.
  VectorXd restrict(const Face& face, const VectorXd& v) const;
  bool penalized() const { return penalized_; }

  VectorXd stack(const MatrixXd& states) const;
  MatrixXd unstack(const VectorXd& s) const;
  const VectorXd& observations() const { return z_; }

 private:
  /// d x / d s, m x (n d).
  MatrixXd cochain_jacobian(const VectorXd& s, const Face* face = nullptr) const;
  VectorXd cochain(const VectorXd& s) const;

  WeightedGraph g_;
  Index n_, d_;
  OnnWeights w_;
  bool penalized_;
  double rho_;
  double projection_tol_;
  double collapse_tol_;
  MatrixXd C_;
  VectorXd tau_;
  MatrixXd L1_;
  MatrixXd Lconn_;
  VectorXd z_;
};

struct OnnResult {
  SceneState scene;
  std::vector<double> loss_history;
  std::vector<double> constraint_residuals;
  int iterations = 0;
  bool converged = false;
  bool penalty_path = false;
  double stationarity = 0.0;
  double residual = 0.0;
  double loss = 0.0;
  LossComponents components;
};

/// Projected-gradient solve of the total loss starting from the observed states.
OnnResult onn_solve(const SceneState& scene, const OnnOptions& opts = {});

struct TraceOptions {
  double alpha = 1.0;  // filtration weight on the state distance
  double beta = 0.0;   // filtration weight on |Ric_F|
};

struct ReasoningTrace {
  double t = 0.0;
  MatrixXd states;
  /// Row e: [S_tail - T_e S_head, w_e].
  MatrixXd interactions;
  std::vector<EdgeSpec> edges;
  MatrixXd constraint_matrix;
  VectorXd constraint_target;
  PersistenceDiagram h0;
  PersistenceDiagram h1;
  double loss = 0.0;

  /// Residual block (m x d) and weights (m), the inputs of the control transform.
  MatrixXd residuals() const;
  VectorXd weights() const;
  std::string to_json() const;
};

ReasoningTrace build_reasoning_trace(const OnnResult& solved, const TraceOptions& opts = {});

struct ContextOptions {
  double alpha0 = 0.5;
  double alpha1 = 0.5;
  TraceOptions filtration;
};

/// alpha0 d_B^0 + alpha1 d_B^1 + ||C_a - C_b||_F + ||tau_a - tau_b||.
double contextual_distance(const SceneState& a, const SceneState& b, const ContextOptions& opts = {});

struct SemanticMap {
  std::vector<Eigen::Vector3d> points;
  std::vector<std::string> classes;
  void validate() const;
};

struct RigidTransform {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  /// q_W = R q + t.
  Eigen::Vector3d apply(const Eigen::Vector3d& q) const { return R * q + t; }
};

/// Least-squares rotation (det +1) and translation mapping src onto dst.
RigidTransform rigid_align(const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst);

struct FusionOptions {
  double eps = 0.5;
  double lambda = 1.0;
  bool strict = false;  // drop label-mismatched pairs
  int max_rounds = 50;
  RigidTransform initial;
  /// Fixed correspondences (index in A, index in B); disables the nearest-neighbour search.
  std::optional<std::vector<std::pair<size_t, size_t>>> correspondences;
};

struct FusionResult {
  RigidTransform transform;
  std::vector<std::pair<size_t, size_t>> correspondences;
  double geometric = 0.0;
  double label_penalty = 0.0;
  double objective = 0.0;
  int rounds = 0;
};

/// Aligns A onto B.
FusionResult fuse_maps(const SemanticMap& a, const SemanticMap& b, const FusionOptions& opts = {});

/// Normalized geometric mean of the per-frame class distributions.
VectorXd fuse_class_posteriors(const std::vector<VectorXd>& frames);

struct Atom {
  std::string predicate;
  std::vector<std::string> args;
  bool operator<(const Atom& o) const { return std::tie(predicate, args) < std::tie(o.predicate, o.args); }
  bool operator==(const Atom& o) const { return predicate == o.predicate && args == o.args; }
};

struct OntologyRule {
  std::vector<Atom> body;
  Atom head;

  /// "Table(y) & Book(x) & On(x,y) -> CandidateForPickUp(x)".
  static OntologyRule parse(const std::string& text);
  void validate() const;
};

/// Ground facts; unary facts have one argument, relations two.
using FactSet = std::set<Atom>;

/// Facts from vertex labels (Label(id)) and relations (Rel(a,b)), ids printed in decimal.
FactSet scene_facts(const SceneState& scene);

struct RuleOutcome {
  std::vector<Atom> derived;  // sorted
  int rounds = 0;
};

/// Forward chaining to the fixpoint.
RuleOutcome apply_ontology_rules(const FactSet& facts, const std::vector<OntologyRule>& rules);
RuleOutcome apply_ontology_rules(const SceneState& scene, const std::vector<OntologyRule>& rules);

struct TrackingBoundary {
  VectorXd before;  // c at t_k^-
  VectorXd after;   // c at t_k^+
  MatrixXd transition;
};

struct TrackingParams {
  double lipschitz = 1.0;  // L_phi
  double speed = 1.0;      // M
  double decay = 1.0;      // mu
  double horizon = 1.0;    // T
};

struct TrackingReport {
  std::vector<double> errors;
  double cumulative = 0.0;
  double bound = 0.0;
  bool violated = false;
};

TrackingReport tracking_report(const std::vector<TrackingBoundary>& boundaries, const TrackingParams& p);

}  // namespace fabric
