#include "fabric/minimize.hpp"

#include <cmath>

namespace fabric {

namespace {

VectorXd newton_direction(const MatrixXd& H, const VectorXd& g) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(H);
  const VectorXd& lam = es.eigenvalues();
  const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  // Clamp curvature from below so the step is a descent direction even on flat or indefinite parts.
  VectorXd inv(lam.size());
  for (Index k = 0; k < lam.size(); ++k) inv(k) = 1.0 / std::max(lam(k), 1e-10 * scale);
  return -(es.eigenvectors() * (inv.asDiagonal() * (es.eigenvectors().transpose() * g)));
}

}  // namespace

MinimizeResult minimize(const Objective& f, VectorXd x, const MinimizeOptions& opts) {
  MinimizeResult res;
  const Index n = x.size();
  double fx = f.value(x);
  VectorXd g = f.gradient(x);
  MatrixXd Hinv = MatrixXd::Identity(n, n);

  for (int it = 0; it < opts.max_iterations; ++it) {
    res.iterations = it;
    if (g.norm() <= opts.gradient_tol * std::max(1.0, std::abs(fx))) {
      res.converged = true;
      break;
    }
    VectorXd d = f.hessian ? newton_direction(f.hessian(x), g) : VectorXd(-Hinv * g);
    if (g.dot(d) >= 0.0) {
      d = -g;
      Hinv.setIdentity();
    }
    double t = 1.0, fnew = 0.0;
    VectorXd xnew;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      xnew = x + t * d;
      fnew = f.value(xnew);
      if (std::isfinite(fnew) && fnew <= fx + 1e-4 * t * g.dot(d)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No decrease representable in floating point: treat as stationary.
      res.converged = g.norm() <= 1e-6 * std::max(1.0, std::abs(fx));
      break;
    }
    VectorXd gnew = f.gradient(xnew);
    if (!f.hessian) {
      VectorXd s = xnew - x, y = gnew - g;
      const double sy = s.dot(y);
      if (sy > 1e-14 * s.norm() * y.norm()) {
        const double r = 1.0 / sy;
        MatrixXd I = MatrixXd::Identity(n, n);
        Hinv = (I - r * s * y.transpose()) * Hinv * (I - r * y * s.transpose()) + r * s * s.transpose();
      }
    }
    const bool stalled = (xnew - x).norm() <= 1e-15 * std::max(1.0, x.norm());
    x = std::move(xnew);
    fx = fnew;
    g = std::move(gnew);
    if (stalled) {
      res.converged = true;
      break;
    }
    res.iterations = it + 1;
  }
  if (g.norm() <= opts.gradient_tol * std::max(1.0, std::abs(fx))) res.converged = true;
  res.x = std::move(x);
  res.value = fx;
  res.gradient_norm = g.norm();
  return res;
}

}  // namespace fabric
