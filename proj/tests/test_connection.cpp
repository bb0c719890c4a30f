#include <doctest.h>

#include "fabric/connection.hpp"
#include "oracles.hpp"

using namespace fabric;

namespace {

ConnectionGraph pair_graph(double t) {
  ConnectionGraph cg = ConnectionGraph::trivial(WeightedGraph({1, 2}, {{1, 2, 1.0}}), 1);
  cg.transforms[0](0, 0) = t;
  return cg;
}

Index kernel_dim(const MatrixXd& L) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(L);
  Index k = 0;
  for (Index i = 0; i < L.rows(); ++i) k += std::abs(es.eigenvalues()(i)) < 1e-9;
  return k;
}

/// Random orthogonal transforms that are globally consistent: T_ij = R_i R_j^T.
ConnectionGraph consistent_graph(Rng& rng, int n, Index d) {
  ConnectionGraph cg = ConnectionGraph::trivial(oracle::random_graph(rng, n, 0.4), d);
  std::vector<MatrixXd> R;
  for (int i = 0; i < n; ++i) R.push_back(rng.orthogonal(d, true));
  for (Index e = 0; e < cg.base.num_edges(); ++e) {
    const auto& ed = cg.base.edge(e);
    cg.transforms[static_cast<size_t>(e)] = R[static_cast<size_t>(ed.tail)] * R[static_cast<size_t>(ed.head)].transpose();
  }
  return cg;
}

/// Minimizer of f^T L f / 2 - b^T f subject to A f = a by the null-space method.
VectorXd nullspace_oracle(const MatrixXd& L, const MatrixXd& A, const VectorXd& a, const VectorXd& b) {
  const VectorXd f0 = A.completeOrthogonalDecomposition().solve(a);
  Eigen::FullPivLU<MatrixXd> lu(A);
  const MatrixXd Z = lu.kernel();
  const VectorXd z = (Z.transpose() * L * Z).ldlt().solve(Z.transpose() * (b - L * f0));
  return f0 + Z * z;
}

}  // namespace

TEST_CASE("connection Laplacian of a single edge") {
  MatrixXd expected(2, 2);
  expected << 1, -1, -1, 1;
  CHECK((assemble_connection_laplacian(pair_graph(1.0)) - expected).norm() == 0.0);
  expected << 1, 1, 1, 1;
  const MatrixXd L = assemble_connection_laplacian(pair_graph(-1.0));
  CHECK((L - expected).norm() == 0.0);
  CHECK((L * (VectorXd(2) << 1, -1).finished()).norm() == 0.0);
}

TEST_CASE("identity transforms give the Kronecker product with the vertex Laplacian") {
  Rng rng(2);
  const WeightedGraph g = oracle::random_graph(rng, 6, 0.4);
  const Index d = 3;
  const MatrixXd L = assemble_connection_laplacian(ConnectionGraph::trivial(g, d));
  const MatrixXd L0 = vertex_laplacian(g);
  MatrixXd K = MatrixXd::Zero(L.rows(), L.cols());
  for (Index i = 0; i < L0.rows(); ++i)
    for (Index j = 0; j < L0.cols(); ++j) K.block(i * d, j * d, d, d) = L0(i, j) * MatrixXd::Identity(d, d);
  CHECK((L - K).norm() <= 1e-12);
  CHECK(kernel_dim(L) == d);
}

TEST_CASE("kernel dimension: consistent versus frustrated cycles") {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    ConnectionGraph cg = consistent_graph(rng, 6, 2);
    CHECK(kernel_dim(assemble_connection_laplacian(cg)) == 2);
  }
  // Triangle with a reflection on one edge: holonomy -1.
  ConnectionGraph tri = ConnectionGraph::trivial(WeightedGraph({0, 1, 2}, {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 1.0}}), 1);
  tri.transforms[0](0, 0) = -1.0;
  CHECK(kernel_dim(assemble_connection_laplacian(tri)) == 0);
}

TEST_CASE("consistency energy examples") {
  CHECK(consistency_energy(pair_graph(1.0), (VectorXd(2) << 0, 2).finished()) == doctest::Approx(2.0));
  CHECK(consistency_energy(pair_graph(1.0), (VectorXd(2) << 5, 5).finished()) == 0.0);
  Rng rng(6);
  const ConnectionGraph cg = consistent_graph(rng, 5, 3);
  const VectorXd f = rng.normal_vector(15);
  const MatrixXd L = assemble_connection_laplacian(cg);
  CHECK(consistency_energy(cg, f) == doctest::Approx(0.5 * f.dot(L * f)).epsilon(1e-12));
}

TEST_CASE("anchored solve examples") {
  const ConnectionGraph cg = pair_graph(1.0);
  const auto anchor = GaugeAnchor::clamp_first(cg, (VectorXd(1) << 3).finished());
  const auto sol = solve_anchored(cg, anchor, VectorXd::Zero(2));
  CHECK((sol.f - (VectorXd(2) << 3, 3).finished()).norm() <= 1e-12);

  const auto zero = solve_anchored(cg, GaugeAnchor::clamp_first(cg, VectorXd::Zero(1)), VectorXd::Zero(2));
  CHECK(zero.f.norm() == 0.0);
}

TEST_CASE("anchored solve matches the null-space oracle and is ordering independent") {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const Index d = rng.uniform_int(1, 3);
    const ConnectionGraph cg = consistent_graph(rng, static_cast<int>(rng.uniform_int(3, 8)), d);
    const auto anchor = GaugeAnchor::clamp_first(cg, rng.normal_vector(d));
    const VectorXd b = rng.normal_vector(cg.base.num_vertices() * d);
    const auto s1 = solve_anchored(cg, anchor, b);
    const auto s2 = solve_anchored(cg, anchor, b, SaddleOrdering::Reversed);
    CHECK(s1.stationarity_residual <= 1e-8);
    CHECK(s1.anchor_residual <= 1e-8);
    CHECK((s1.f - s2.f).norm() <= 1e-8);
    const VectorXd oracle = nullspace_oracle(assemble_connection_laplacian(cg), anchor.A, anchor.a, b);
    CHECK((s1.f - oracle).norm() <= 1e-8);
  }
}

TEST_CASE("anchor that misses the kernel is rejected") {
  const ConnectionGraph cg = ConnectionGraph::trivial(WeightedGraph({0, 1, 2}, {{0, 1, 1.0}, {1, 2, 1.0}}), 1);
  GaugeAnchor anchor;
  anchor.A = MatrixXd(1, 3);
  anchor.A << 1, -1, 0;
  anchor.a = VectorXd::Zero(1);
  CHECK_THROWS_AS(solve_anchored(cg, anchor, VectorXd::Zero(3)), NumericError);
}

TEST_CASE("identity transforms and zero load return the anchored constant section") {
  Rng rng(10);
  const ConnectionGraph cg = ConnectionGraph::trivial(oracle::random_graph(rng, 7, 0.3), 2);
  const VectorXd v = rng.normal_vector(2);
  const auto sol = solve_anchored(cg, GaugeAnchor::clamp_first(cg, v), VectorXd::Zero(14));
  for (Index i = 0; i < 7; ++i) CHECK((sol.f.segment(2 * i, 2) - v).norm() <= 1e-12);
}

TEST_CASE("gauge action") {
  const ConnectionGraph cg = pair_graph(1.0);
  const VectorXd f = (VectorXd(2) << 1, 2).finished();
  const auto [same, fs] = apply_gauge(cg, f, {MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1)});
  CHECK(same.transforms[0](0, 0) == 1.0);
  CHECK((fs - f).norm() == 0.0);

  const auto [flipped, ff] = apply_gauge(cg, f, {-MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1)});
  CHECK(flipped.transforms[0](0, 0) == -1.0);
  CHECK(ff(0) == -1.0);

  CHECK_THROWS_AS(apply_gauge(cg, f, {2 * MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1)}), InvalidArgument);
}

TEST_CASE("consistency energy is gauge invariant") {
  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    const Index d = rng.uniform_int(1, 3);
    ConnectionGraph cg = ConnectionGraph::trivial(oracle::random_graph(rng, 6, 0.4), d);
    for (auto& T : cg.transforms) T = rng.orthogonal(d, false);
    const VectorXd f = rng.normal_vector(6 * d);
    std::vector<MatrixXd> g;
    for (int i = 0; i < 6; ++i) g.push_back(rng.orthogonal(d, false));
    const auto [cg2, f2] = apply_gauge(cg, f, g);
    CHECK(std::abs(consistency_energy(cg2, f2) - consistency_energy(cg, f)) <= 1e-10);
  }
}
