#pragma once

#include <functional>

#include "fabric/graph.hpp"

namespace fabric {

struct Objective {
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> gradient;
  /// Optional; Newton steps are used when present, BFGS otherwise.
  std::function<MatrixXd(const VectorXd&)> hessian;
};

struct MinimizeOptions {
  double gradient_tol = 1e-11;
  int max_iterations = 500;
};

struct MinimizeResult {
  VectorXd x;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Unconstrained smooth minimization with Armijo backtracking.
MinimizeResult minimize(const Objective& f, VectorXd x0, const MinimizeOptions& opts = {});

}  // namespace fabric
