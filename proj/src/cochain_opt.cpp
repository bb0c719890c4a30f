#include "fabric/cochain_opt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "fabric/minimize.hpp"
#include "fabric/random.hpp"

namespace fabric {

AffineConstraint::AffineConstraint(MatrixXd C, VectorXd tau, double rank_tol)
    : C_(std::move(C)), tau_(std::move(tau)) {
  if (C_.rows() != tau_.size())
    throw InvalidArgument("constraint matrix has " + std::to_string(C_.rows()) + " rows but target has " +
                          std::to_string(tau_.size()) + " entries");
  const Index q = C_.rows(), m = C_.cols();
  if (!C_.allFinite() || !tau_.allFinite()) throw InvalidArgument("constraint contains non-finite entries");
  if (q == 0) {
    x0_ = VectorXd::Zero(m);
    N_ = MatrixXd::Identity(m, m);
    Q_.resize(m, 0);
    R_.resize(0, 0);
    return;
  }

  Eigen::JacobiSVD<MatrixXd> svd(C_);
  const VectorXd& sv = svd.singularValues();
  const double cutoff = rank_tol * std::max(1.0, sv(0));
  Index rank = 0;
  for (Index k = 0; k < sv.size(); ++k)
    if (sv(k) > cutoff) ++rank;

  if (rank < q) {
    const VectorXd x_ls = C_.completeOrthogonalDecomposition().solve(tau_);
    inconsistency_ = (C_ * x_ls - tau_).norm();
    if (inconsistency_ > 1e-9 * std::max(1.0, tau_.norm())) {
      consistent_ = false;
      return;
    }
    throw InvalidArgument("constraint rows are linearly dependent (rank " + std::to_string(rank) + " < " +
                          std::to_string(q) + ")");
  }

  Eigen::HouseholderQR<MatrixXd> qr(C_.transpose());
  const MatrixXd Qfull = qr.householderQ();
  Q_ = Qfull.leftCols(q);
  R_ = qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();
  x0_ = Q_ * R_.transpose().triangularView<Eigen::Lower>().solve(tau_);
  N_ = Qfull.rightCols(m - q);
}

AffineConstraint AffineConstraint::none(Index m) { return AffineConstraint(MatrixXd(0, m), VectorXd(0)); }

VectorXd AffineConstraint::residual_vector(const VectorXd& x) const {
  if (x.size() != C_.cols())
    throw InvalidArgument("vector of length " + std::to_string(x.size()) + " does not match constraint width " +
                          std::to_string(C_.cols()));
  return C_ * x - tau_;
}

void AffineConstraint::require_consistent() const {
  if (!consistent_) {
    std::ostringstream msg;
    msg << "constraint is inconsistent (least-squares residual " << inconsistency_
        << "); use exact_penalty_solve";
    throw InvalidArgument(msg.str());
  }
}

VectorXd AffineConstraint::project(const VectorXd& x) const {
  require_consistent();
  if (empty()) {
    if (x.size() != C_.cols()) throw InvalidArgument("dimension mismatch in projection");
    return x;
  }
  auto correct = [&](const VectorXd& y) -> VectorXd {
    const VectorXd h = residual_vector(y);
    return y - Q_ * R_.transpose().triangularView<Eigen::Lower>().solve(h);
  };
  return correct(correct(x));
}

EnergySpec EnergySpec::quadratic(const MatrixXd& Q, const VectorXd& c, double c0) {
  if (Q.rows() != Q.cols() || Q.rows() != c.size()) throw InvalidArgument("quadratic energy: shape mismatch");
  const MatrixXd S = 0.5 * (Q + Q.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
  EnergySpec e;
  e.value = [S, c, c0](const VectorXd& x) { return 0.5 * x.dot(S * x) + c.dot(x) + c0; };
  e.gradient = [S, c](const VectorXd& x) -> VectorXd { return S * x + c; };
  e.hessian = [S](const VectorXd&) -> MatrixXd { return S; };
  e.smoothness = es.eigenvalues().maxCoeff();
  e.strong_convexity = es.eigenvalues().minCoeff();
  e.is_quadratic = true;
  e.quad_Q = S;
  e.quad_c = c;
  return e;
}

void EnergySpec::validate(Index m, int probes, unsigned long long seed) const {
  if (!value || !gradient) throw InvalidArgument("energy needs both value and gradient");
  if (!(strong_convexity > 0.0)) throw InvalidArgument("strong convexity constant must be positive");
  if (strong_convexity > smoothness * (1.0 + 1e-12))
    throw InvalidArgument("strong convexity constant exceeds smoothness constant");
  Rng rng(seed, 17);
  for (int p = 0; p < probes; ++p) {
    const VectorXd x = rng.normal_vector(m);
    const VectorXd g = gradient(x);
    VectorXd fd(m);
    const double h = 1e-6 * std::max(1.0, x.norm());
    for (Index i = 0; i < m; ++i) {
      VectorXd xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      fd(i) = (value(xp) - value(xm)) / (2.0 * h);
    }
    if ((fd - g).norm() > 1e-5 * std::max(1.0, g.norm()))
      throw InvalidArgument("gradient does not match finite differences of the energy");
  }
}

double consensus_energy(const EnergySpec& e, const MatrixXd& L1, const VectorXd& x) {
  return e.value(x) + 0.5 * x.dot(L1 * x);
}

void IterationReport::write_csv(std::ostream& os) const {
  os << "iteration,residual,distance\n";
  char buf[96];
  for (size_t k = 0; k < constraint_residuals.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.6e,%.6e\n", k + 1, constraint_residuals[k],
                  k < distances.size() ? distances[k] : 0.0);
    os << buf;
  }
}

namespace {

double spectral_norm_sym(const MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (A + A.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

double km_step_limit(const EnergySpec& e, const MatrixXd& L1) {
  return 2.0 / (e.smoothness + spectral_norm_sym(L1));
}

KmResult km_iterate(const EnergySpec& e, const MatrixXd& L1, const AffineConstraint& c, const VectorXd& x0,
                    const KmOptions& opts) {
  const Index m = x0.size();
  if (L1.rows() != m || L1.cols() != m || c.cols() != m)
    throw InvalidArgument("km_iterate: dimensions of energy, L1 and constraint disagree");
  if (!c.consistent())
    throw InvalidArgument("km_iterate: constraint is inconsistent; use exact_penalty_solve");
  const double limit = km_step_limit(e, L1);
  const double eta = opts.eta.value_or(0.5 * limit);
  if (!(eta > 0.0 && eta < limit)) {
    std::ostringstream msg;
    msg << "step size " << eta << " outside the admissible interval (0, " << limit << ")";
    throw InvalidArgument(msg.str());
  }

  KmResult out;
  IterationReport& rep = out.report;
  rep.eta = eta;
  std::vector<VectorXd> iterates;
  VectorXd x = x0;
  for (int k = 0; k < opts.k_max; ++k) {
    VectorXd next = c.project(x - eta * (e.gradient(x) + L1 * x));
    const double step = (next - x).norm();
    rep.step_norms.push_back(step);
    rep.constraint_residuals.push_back(c.empty() ? 0.0 : c.residual(next));
    iterates.push_back(next);
    x = std::move(next);
    rep.iterations = k + 1;
    if (!std::isfinite(step)) throw NumericError("km_iterate diverged (non-finite iterate)");
    if (step < opts.tol) {
      rep.converged = true;
      break;
    }
  }

  rep.distances.reserve(iterates.size());
  for (const VectorXd& it : iterates) rep.distances.push_back((it - x).norm());
  const double floor = std::max(1e3 * opts.tol, 1e-12);
  for (size_t k = 0; k + 1 < rep.distances.size(); ++k) {
    if (rep.distances[k + 1] <= floor) break;
    rep.contraction_estimate = std::max(rep.contraction_estimate, rep.distances[k + 1] / rep.distances[k]);
  }
  out.x = std::move(x);
  return out;
}

KktSolution constrained_minimizer(const EnergySpec& e, const AffineConstraint& c, const MatrixXd* L1) {
  if (!c.consistent()) throw InvalidArgument("constrained_minimizer: constraint is inconsistent");
  const VectorXd& x0 = c.particular();
  const MatrixXd& N = c.null_basis();
  const Index m = c.cols();
  auto full_grad = [&](const VectorXd& x) -> VectorXd {
    VectorXd g = e.gradient(x);
    if (L1) g += (*L1) * x;
    return g;
  };

  VectorXd x = x0;
  if (N.cols() > 0) {
    Objective f;
    f.value = [&](const VectorXd& z) {
      VectorXd xx = x0 + N * z;
      return e.value(xx) + (L1 ? 0.5 * xx.dot((*L1) * xx) : 0.0);
    };
    f.gradient = [&](const VectorXd& z) -> VectorXd { return N.transpose() * full_grad(x0 + N * z); };
    if (e.hessian) {
      f.hessian = [&](const VectorXd& z) -> MatrixXd {
        MatrixXd H = e.hessian(x0 + N * z);
        if (L1) H += *L1;
        return N.transpose() * H * N;
      };
    }
    MinimizeOptions mo;
    mo.gradient_tol = 1e-13;
    mo.max_iterations = 2000;
    const MinimizeResult r = minimize(f, VectorXd::Zero(N.cols()), mo);
    x = x0 + N * r.x;
  }
  KktSolution sol;
  sol.x = x;
  if (c.rows() > 0) {
    const MatrixXd& C = c.matrix();
    sol.multiplier = -(C * C.transpose()).ldlt().solve(C * full_grad(x));
  } else {
    sol.multiplier.resize(0);
  }
  (void)m;
  return sol;
}

double estimate_penalty_threshold(const EnergySpec& e, const AffineConstraint& c) {
  return 2.0 * constrained_minimizer(e, c).multiplier.norm();
}

PenaltyResult exact_penalty_solve(const EnergySpec& e, const AffineConstraint& c, double rho,
                                  const PenaltyOptions& opts) {
  if (!(rho > 0.0)) throw InvalidArgument("penalty parameter must be positive");
  const MatrixXd& C = c.matrix();
  const VectorXd& tau = c.target();
  const Index m = C.cols(), q = C.rows();
  PenaltyResult out;

  // Inner minimizer x(y) = argmin L(x) + y^T C x.
  Eigen::LDLT<MatrixXd> quad_ldlt;
  if (e.is_quadratic) quad_ldlt.compute(e.quad_Q);
  VectorXd x_warm = VectorXd::Zero(m);
  auto inner = [&](const VectorXd& y) -> VectorXd {
    if (e.is_quadratic) return quad_ldlt.solve(-(e.quad_c + C.transpose() * y));
    Objective f;
    f.value = [&](const VectorXd& x) { return e.value(x) + y.dot(C * x); };
    f.gradient = [&](const VectorXd& x) -> VectorXd { return e.gradient(x) + C.transpose() * y; };
    if (e.hessian) f.hessian = e.hessian;
    MinimizeOptions mo;
    mo.gradient_tol = 1e-13;
    x_warm = minimize(f, x_warm, mo).x;
    return x_warm;
  };

  if (q == 0) {
    out.x = inner(VectorXd(0));
    return out;
  }

  if (e.is_quadratic) {
    // Dual is max_{|y| <= rho} -1/2 y^T H y - y^T b + const, a trust-region subproblem: y = (H + lambda I)^+ (-b)
    // with lambda = 0 if that lies inside the ball, else the lambda that puts it on the sphere.
    const MatrixXd QiCt = quad_ldlt.solve(C.transpose());
    const MatrixXd H = C * QiCt;
    const VectorXd b = QiCt.transpose() * e.quad_c + tau;  // H y = -b at the unconstrained dual optimum
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (H + H.transpose()));
    const VectorXd lam = es.eigenvalues().cwiseMax(0.0);
    const VectorXd beta = -(es.eigenvectors().transpose() * b);
    const double zero = 1e-12 * std::max(1.0, lam.maxCoeff());
    auto y_of = [&](double l) {
      VectorXd w(q);
      for (Index i = 0; i < q; ++i) w(i) = lam(i) + l > zero ? beta(i) / (lam(i) + l) : 0.0;
      return VectorXd(es.eigenvectors() * w);
    };
    bool inside = true;
    for (Index i = 0; i < q; ++i) inside = inside && (lam(i) > zero || std::abs(beta(i)) <= 1e-12 * std::max(1.0, beta.norm()));
    VectorXd y = y_of(0.0);
    if (!inside || y.norm() > rho) {
      double lo = 0.0, hi = beta.norm() / rho + 1.0;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (y_of(mid).norm() > rho ? lo : hi) = mid;
      }
      y = y_of(hi);
    }
    out.x = inner(y);
    out.residual = (C * out.x - tau).norm();
    out.iterations = 1;
    return out;
  }

  auto project_ball = [rho](VectorXd y) {
    const double n = y.norm();
    if (n > rho) y *= rho / n;
    return y;
  };
  const double Cnorm2 = std::pow(Eigen::JacobiSVD<MatrixXd>(C).singularValues()(0), 2);
  const double step = e.strong_convexity / Cnorm2;

  VectorXd y = VectorXd::Zero(q), y_prev = y, z = y;
  double t = 1.0;
  VectorXd x = inner(y);
  double gmap = 0.0;
  for (int k = 0; k < opts.max_iterations; ++k) {
    const VectorXd xz = inner(z);
    const VectorXd grad = C * xz - tau;
    VectorXd y_next = project_ball(z + step * grad);
    gmap = (y_next - z).norm() / step;
    out.iterations = k + 1;
    if (gmap <= opts.tol * std::max(1.0, tau.norm())) {
      out.x = inner(y_next);
      out.residual = (C * out.x - tau).norm();
      return out;
    }
    // Restart momentum when it points against the ascent direction.
    if (grad.dot(y_next - y) < 0.0) {
      t = 1.0;
      z = y;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = y_next + ((t - 1.0) / t_next) * (y_next - y);
    y_prev = y;
    y = std::move(y_next);
    t = t_next;
    if ((y - y_prev).norm() <= 1e-16 * std::max(1.0, rho)) {
      x = inner(y);
      out.x = x;
      out.residual = (C * x - tau).norm();
      return out;
    }
  }
  x = inner(y);
  std::ostringstream msg;
  msg << "exact_penalty_solve did not converge in " << opts.max_iterations
      << " iterations; constraint residual " << (C * x - tau).norm() << ", dual gradient mapping " << gmap;
  throw NumericError(msg.str());
}

VectorXd lexicographic_solve(const std::vector<EnergySpec>& levels, const AffineConstraint& c,
                             const LexOptions& opts) {
  if (levels.empty()) throw InvalidArgument("lexicographic_solve needs at least one level");
  if (!c.consistent()) throw InvalidArgument("lexicographic_solve: feasible set is empty (inconsistent constraint)");
  const VectorXd& x0 = c.particular();
  const MatrixXd& N = c.null_basis();
  const Index p = N.cols();
  if (p == 0) return x0;

  bool all_hessians = true;
  for (const EnergySpec& e : levels) all_hessians = all_hessians && static_cast<bool>(e.hessian);

  auto lift = [&](const VectorXd& z) -> VectorXd { return x0 + N * z; };
  auto val = [&](size_t i, const VectorXd& z) { return levels[i].value(lift(z)); };
  auto grad = [&](size_t i, const VectorXd& z) -> VectorXd { return N.transpose() * levels[i].gradient(lift(z)); };
  auto hess = [&](size_t i, const VectorXd& z) -> MatrixXd { return N.transpose() * levels[i].hessian(lift(z)) * N; };

  MinimizeOptions mo;
  mo.gradient_tol = 1e-13;
  mo.max_iterations = 1000;

  std::vector<double> best(levels.size(), 0.0);
  VectorXd z = VectorXd::Zero(p);
  {
    Objective f;
    f.value = [&](const VectorXd& v) { return val(0, v); };
    f.gradient = [&](const VectorXd& v) { return grad(0, v); };
    if (all_hessians) f.hessian = [&](const VectorXd& v) { return hess(0, v); };
    z = minimize(f, z, mo).x;
    best[0] = val(0, z);
  }

  for (size_t i = 1; i < levels.size(); ++i) {
    std::vector<double> lambda(i, 0.0);
    double r = 10.0;
    double prev_violation = std::numeric_limits<double>::infinity();
    auto slack = [&](size_t j, const VectorXd& v) { return val(j, v) - best[j] - opts.eps_lex; };

    Objective f;
    f.value = [&](const VectorXd& v) {
      double s = val(i, v);
      for (size_t j = 0; j < i; ++j) {
        const double a = std::max(0.0, lambda[j] + r * slack(j, v));
        s += (a * a - lambda[j] * lambda[j]) / (2.0 * r);
      }
      return s;
    };
    f.gradient = [&](const VectorXd& v) -> VectorXd {
      VectorXd g = grad(i, v);
      for (size_t j = 0; j < i; ++j) {
        const double a = std::max(0.0, lambda[j] + r * slack(j, v));
        if (a > 0.0) g += a * grad(j, v);
      }
      return g;
    };
    if (all_hessians) {
      f.hessian = [&](const VectorXd& v) -> MatrixXd {
        MatrixXd H = hess(i, v);
        for (size_t j = 0; j < i; ++j) {
          const double a = std::max(0.0, lambda[j] + r * slack(j, v));
          if (a > 0.0) {
            const VectorXd gj = grad(j, v);
            H += r * gj * gj.transpose() + a * hess(j, v);
          }
        }
        return H;
      };
    }

    bool done = false;
    for (int outer = 0; outer < opts.max_outer && !done; ++outer) {
      const VectorXd z_prev = z;
      z = minimize(f, z, mo).x;
      double violation = 0.0;
      for (size_t j = 0; j < i; ++j) {
        const double s = slack(j, z);
        violation = std::max(violation, std::max(0.0, s));
        lambda[j] = std::max(0.0, lambda[j] + r * s);
      }
      const double tol = 1e-3 * opts.eps_lex;
      if (violation <= tol && (z - z_prev).norm() <= 1e-10 * std::max(1.0, z.norm())) done = true;
      if (violation > 0.25 * prev_violation) r = std::min(r * 10.0, 1e14);
      prev_violation = violation;
    }
    for (size_t j = 0; j < i; ++j) {
      if (slack(j, z) > 10.0 * opts.eps_lex)
        throw NumericError("lexicographic_solve: level " + std::to_string(i) +
                           " could not satisfy the argmin constraint of level " + std::to_string(j));
    }
    best[i] = val(i, z);
  }
  return lift(z);
}

}  // namespace fabric
