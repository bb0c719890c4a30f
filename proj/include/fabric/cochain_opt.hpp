#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "fabric/graph.hpp"

namespace fabric {

/// Affine set {x : C x = tau}. Zero rows means no constraint.
class AffineConstraint {
 public:
  AffineConstraint() = default;
  AffineConstraint(MatrixXd C, VectorXd tau, double rank_tol = 1e-10);
  static AffineConstraint none(Index m);

  const MatrixXd& matrix() const { return C_; }
  const VectorXd& target() const { return tau_; }
  Index rows() const { return C_.rows(); }
  Index cols() const { return C_.cols(); }
  bool empty() const { return C_.rows() == 0; }
  /// False when C x = tau has no solution; such constraints can only be handled by exact_penalty_solve.
  bool consistent() const { return consistent_; }
  /// ||C x - tau||_2 at the least-squares point (0 when consistent).
  double inconsistency() const { return inconsistency_; }

  VectorXd residual_vector(const VectorXd& x) const;
  double residual(const VectorXd& x) const { return residual_vector(x).norm(); }

  /// Orthogonal projection x - C^T (C C^T)^{-1} (C x - tau).
  VectorXd project(const VectorXd& x) const;

  /// Minimum-norm feasible point and an orthonormal basis of ker C (m x (m - q)).
  const VectorXd& particular() const { return x0_; }
  const MatrixXd& null_basis() const { return N_; }

 private:
  void require_consistent() const;

  MatrixXd C_;
  VectorXd tau_;
  bool consistent_ = true;
  double inconsistency_ = 0.0;
  MatrixXd Q_;  // orthonormal basis of range(C^T), m x q
  MatrixXd R_;  // C^T = Q R
  VectorXd x0_;
  MatrixXd N_;
};

struct EnergySpec {
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> gradient;
  std::function<MatrixXd(const VectorXd&)> hessian;  // optional
  double smoothness = 1.0;        // L
  double strong_convexity = 1.0;  // mu
  /// Set by `quadratic`; lets solvers factor the Hessian once.
  bool is_quadratic = false;
  MatrixXd quad_Q;
  VectorXd quad_c;

  /// 1/2 x^T Q x + c^T x + c0; L and mu taken from the spectrum of Q.
  static EnergySpec quadratic(const MatrixXd& Q, const VectorXd& c, double c0 = 0.0);

  /// Checks mu <= L and the gradient against central differences on `probes` random points.
  void validate(Index m, int probes = 5, unsigned long long seed = 0) const;
};

double consensus_energy(const EnergySpec& e, const MatrixXd& L1, const VectorXd& x);

struct KmOptions {
  std::optional<double> eta;  // default 1/(L + ||L1||)
  double tol = 1e-9;
  int k_max = 10000;
};

struct IterationReport {
  std::vector<double> step_norms;
  /// Distance of each iterate x_k (k >= 1) to the final iterate.
  std::vector<double> distances;
  std::vector<double> constraint_residuals;
  double contraction_estimate = 0.0;
  double eta = 0.0;
  int iterations = 0;
  bool converged = false;

  void write_csv(std::ostream& os) const;
};

struct KmResult {
  VectorXd x;
  IterationReport report;
};

/// Admissible step interval (0, 2/(L + ||L1||)).
double km_step_limit(const EnergySpec& e, const MatrixXd& L1);

KmResult km_iterate(const EnergySpec& e, const MatrixXd& L1, const AffineConstraint& c, const VectorXd& x0,
                    const KmOptions& opts = {});

/// Dense KKT solve of min L(x) + 1/2 x^T L1 x s.t. C x = tau (Newton iterations when L is not quadratic).
struct KktSolution {
  VectorXd x;
  VectorXd multiplier;
};
KktSolution constrained_minimizer(const EnergySpec& e, const AffineConstraint& c,
                                  const MatrixXd* L1 = nullptr);

/// 2 ||lambda||, lambda the constraint multiplier at the constrained minimizer of L.
double estimate_penalty_threshold(const EnergySpec& e, const AffineConstraint& c);

struct PenaltyOptions {
  double tol = 1e-9;
  int max_iterations = 200000;
};

struct PenaltyResult {
  VectorXd x;
  double residual = 0.0;
  int iterations = 0;
};

/// Minimizes L(x) + rho ||C x - tau||_2.
PenaltyResult exact_penalty_solve(const EnergySpec& e, const AffineConstraint& c, double rho,
                                  const PenaltyOptions& opts = {});

struct LexOptions {
  double eps_lex = 1e-8;
  int max_outer = 60;
};

/// Minimizes each level over the (eps_lex-thickened) argmin set of the previous levels and C x = tau.
VectorXd lexicographic_solve(const std::vector<EnergySpec>& levels, const AffineConstraint& c,
                             const LexOptions& opts = {});

}  // namespace fabric
