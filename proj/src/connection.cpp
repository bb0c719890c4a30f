#include "fabric/connection.hpp"

#include <string>

namespace fabric {

ConnectionGraph ConnectionGraph::trivial(WeightedGraph g, Index d) {
  ConnectionGraph cg;
  cg.d = d;
  cg.transforms.assign(static_cast<size_t>(g.num_edges()), MatrixXd::Identity(d, d));
  cg.base = std::move(g);
  return cg;
}

void ConnectionGraph::validate() const {
  if (d < 1) throw InvalidArgument("block dimension must be positive");
  if (static_cast<Index>(transforms.size()) != base.num_edges())
    throw InvalidArgument("expected one transform per edge (" + std::to_string(base.num_edges()) + "), got " +
                          std::to_string(transforms.size()));
  for (size_t e = 0; e < transforms.size(); ++e) {
    if (transforms[e].rows() != d || transforms[e].cols() != d)
      throw InvalidArgument("transform of edge " + std::to_string(e) + " is not " + std::to_string(d) + "x" +
                            std::to_string(d));
    if (!transforms[e].allFinite()) throw InvalidArgument("transform of edge " + std::to_string(e) + " is not finite");
  }
}

MatrixXd ConnectionGraph::transform_between(Index e, Index a) const {
  const MatrixXd& T = transforms[static_cast<size_t>(e)];
  return base.edge(e).tail == a ? T : MatrixXd(T.inverse());
}

MatrixXd assemble_connection_laplacian(const ConnectionGraph& cg) {
  cg.validate();
  const Index d = cg.d, n = cg.base.num_vertices();
  MatrixXd L = MatrixXd::Zero(d * n, d * n);
  for (Index e = 0; e < cg.base.num_edges(); ++e) {
    const Edge& ed = cg.base.edge(e);
    const MatrixXd& T = cg.transforms[e];
    const double w = ed.weight;
    const Index i = ed.tail * d, j = ed.head * d;
    L.block(i, i, d, d) += w * MatrixXd::Identity(d, d);
    L.block(j, j, d, d) += w * T.transpose() * T;
    L.block(i, j, d, d) -= w * T;
    L.block(j, i, d, d) -= w * T.transpose();
  }
  return L;
}

double consistency_energy(const ConnectionGraph& cg, const VectorXd& f) {
  cg.validate();
  const Index d = cg.d;
  if (f.size() != d * cg.base.num_vertices())
    throw InvalidArgument("stacked vector has length " + std::to_string(f.size()) + ", expected " +
                          std::to_string(d * cg.base.num_vertices()));
  double phi = 0.0;
  for (Index e = 0; e < cg.base.num_edges(); ++e) {
    const Edge& ed = cg.base.edge(e);
    phi += ed.weight * (cg.transforms[e] * f.segment(ed.head * d, d) - f.segment(ed.tail * d, d)).squaredNorm();
  }
  return 0.5 * phi;
}

GaugeAnchor GaugeAnchor::clamp_first(const ConnectionGraph& cg, const VectorXd& value) {
  if (value.size() != cg.d) throw InvalidArgument("anchor value must have length d");
  GaugeAnchor an;
  an.A = MatrixXd::Zero(cg.d, cg.d * cg.base.num_vertices());
  an.A.leftCols(cg.d).setIdentity();
  an.a = value;
  return an;
}

AnchoredSolution solve_anchored(const ConnectionGraph& cg, const GaugeAnchor& anchor, const VectorXd& b,
                                SaddleOrdering ordering) {
  const MatrixXd L = assemble_connection_laplacian(cg);
  const Index N = L.rows(), r = anchor.A.rows();
  if (anchor.A.cols() != N) throw InvalidArgument("anchor matrix must have d*n columns");
  if (anchor.a.size() != r) throw InvalidArgument("anchor value length must equal anchor row count");
  if (b.size() != N) throw InvalidArgument("right-hand side must have length d*n");
  if (r < cg.d)
    throw InvalidArgument("anchor has " + std::to_string(r) + " rows; at least d = " + std::to_string(cg.d) +
                          " are needed to fix the gauge");
  {
    Eigen::FullPivLU<MatrixXd> lu(anchor.A);
    lu.setThreshold(1e-10);
    if (lu.rank() < r) throw NumericError("anchor rows are linearly dependent (A lacks full row rank)");
  }

  MatrixXd K = MatrixXd::Zero(N + r, N + r);
  K.topLeftCorner(N, N) = L;
  K.topRightCorner(N, r) = anchor.A.transpose();
  K.bottomLeftCorner(r, N) = anchor.A;
  VectorXd rhs(N + r);
  rhs << b, anchor.a;

  VectorXd sol;
  if (ordering == SaddleOrdering::Natural) {
    Eigen::FullPivLU<MatrixXd> lu(K);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible())
      throw NumericError("augmented system is singular: the anchor does not pierce ker(L_conn) "
                         "(ker L_conn and ker A intersect nontrivially)");
    sol = lu.solve(rhs);
  } else {
    const MatrixXd Kr = K.reverse();
    Eigen::FullPivLU<MatrixXd> lu(Kr);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible())
      throw NumericError("augmented system is singular: the anchor does not pierce ker(L_conn) "
                         "(ker L_conn and ker A intersect nontrivially)");
    sol = lu.solve(VectorXd(rhs.reverse())).reverse();
  }

  AnchoredSolution out;
  out.f = sol.head(N);
  out.multiplier = sol.tail(r);
  out.stationarity_residual = (L * out.f + anchor.A.transpose() * out.multiplier - b).norm();
  out.anchor_residual = (anchor.A * out.f - anchor.a).norm();
  return out;
}

std::pair<ConnectionGraph, VectorXd> apply_gauge(const ConnectionGraph& cg, const VectorXd& f,
                                                 const std::vector<MatrixXd>& g) {
  cg.validate();
  const Index d = cg.d, n = cg.base.num_vertices();
  if (static_cast<Index>(g.size()) != n) throw InvalidArgument("need one gauge element per vertex");
  if (f.size() != d * n) throw InvalidArgument("stacked vector length must be d*n");
  for (Index i = 0; i < n; ++i) {
    const MatrixXd& gi = g[i];
    if (gi.rows() != d || gi.cols() != d) throw InvalidArgument("gauge element has wrong shape");
    if ((gi.transpose() * gi - MatrixXd::Identity(d, d)).norm() > 1e-9)
      throw InvalidArgument("gauge element at vertex " + std::to_string(cg.base.id(i)) + " is not orthogonal");
  }
  ConnectionGraph out = cg;
  for (Index e = 0; e < cg.base.num_edges(); ++e) {
    const Edge& ed = cg.base.edge(e);
    out.transforms[e] = g[ed.tail] * cg.transforms[e] * g[ed.head].transpose();
  }
  VectorXd fg(d * n);
  for (Index i = 0; i < n; ++i) fg.segment(i * d, d) = g[i] * f.segment(i * d, d);
  return {std::move(out), std::move(fg)};
}

}  // namespace fabric
