#include <doctest.h>

#include "fabric/graph.hpp"
#include "oracles.hpp"

using namespace fabric;

namespace {

WeightedGraph triangle(EdgeOrder order = EdgeOrder::Canonical) {
  GraphOptions o;
  o.order = order;
  return WeightedGraph({1, 2, 3}, {{1, 2, 1.0}, {2, 3, 1.0}, {3, 1, 1.0}}, {}, o);
}

}  // namespace

TEST_CASE("boundary operator of the oriented triangle keeps input orientation when asked") {
  const MatrixXd B = boundary_operator(triangle(EdgeOrder::AsGiven));
  MatrixXd expected(3, 3);
  expected << -1, 1, 0, 0, -1, 1, 1, 0, -1;
  CHECK((B - expected).norm() == 0.0);
}

TEST_CASE("canonical order sorts edges and points them from the smaller id") {
  const WeightedGraph g = triangle();
  REQUIRE(g.num_edges() == 3);
  CHECK(g.id(g.edge(0).tail) == 1);
  CHECK(g.id(g.edge(0).head) == 2);
  CHECK(g.id(g.edge(1).tail) == 1);
  CHECK(g.id(g.edge(1).head) == 3);
  CHECK(g.id(g.edge(2).tail) == 2);
  // Input edge 3->1 was flipped.
  CHECK(g.input_edge_map()[2].second);
}

TEST_CASE("single edge boundary row") {
  WeightedGraph g({1, 2}, {{1, 2, 1.0}});
  const MatrixXd B = boundary_operator(g);
  CHECK(B(0, 0) == -1.0);
  CHECK(B(0, 1) == 1.0);
}

TEST_CASE("boundary operator is generic in the scalar type") {
  const auto B = boundary_operator<float>(triangle());
  const auto L1 = edge_laplacian(B);
  static_assert(std::is_same_v<std::decay_t<decltype(L1)>, Mat<float>>);
  CHECK(L1(0, 0) == 2.0f);
}

TEST_CASE("graph validation") {
  CHECK_THROWS_AS(WeightedGraph({1, 2}, {{1, 2, -1.0}}), InvalidArgument);
  CHECK_THROWS_AS(WeightedGraph({1, 2}, {{1, 1, 1.0}}), InvalidArgument);
  CHECK_THROWS_AS(WeightedGraph({1, 2}, {{1, 2, 1.0}, {2, 1, 1.0}}), InvalidArgument);
  CHECK_THROWS_AS(WeightedGraph({1, 2, 3}, {{1, 2, 1.0}}), InvalidArgument);
  GraphOptions o;
  o.allow_disconnected = true;
  CHECK_NOTHROW(WeightedGraph({1, 2, 3}, {{1, 2, 1.0}}, {}, o));
}

TEST_CASE("disconnected graph error names the components") {
  try {
    WeightedGraph({1, 2, 3, 4}, {{1, 2, 1.0}, {3, 4, 1.0}});
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("{1,2}") != std::string::npos);
    CHECK(msg.find("{3,4}") != std::string::npos);
  }
}

TEST_CASE("triangle edge Laplacian and its harmonic vector") {
  const MatrixXd L1 = edge_laplacian(boundary_operator(triangle(EdgeOrder::AsGiven)));
  MatrixXd expected(3, 3);
  expected << 2, -1, -1, -1, 2, -1, -1, -1, 2;
  CHECK((L1 - expected).norm() == 0.0);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(L1);
  CHECK(es.eigenvalues()(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(es.eigenvalues()(1) == doctest::Approx(3.0));
  CHECK(es.eigenvalues()(2) == doctest::Approx(3.0));
  const VectorXd h = es.eigenvectors().col(0);
  CHECK(std::abs(h.dot(VectorXd::Ones(3) / std::sqrt(3.0))) == doctest::Approx(1.0));
}

TEST_CASE("tree edge Laplacian is nonsingular") {
  WeightedGraph g({0, 1, 2, 3}, {{0, 1, 1.0}, {1, 2, 1.0}, {1, 3, 1.0}});
  const MatrixXd L1 = edge_laplacian(boundary_operator(g));
  CHECK(Eigen::FullPivLU<MatrixXd>(L1).rank() == 3);
}

TEST_CASE("fundamental cycle basis counts and closure") {
  WeightedGraph tree({0, 1, 2}, {{0, 1, 1.0}, {1, 2, 1.0}});
  CHECK(fundamental_cycle_basis(tree).signature.rows() == 0);

  const WeightedGraph tri = triangle();
  const CycleBasis cb = fundamental_cycle_basis(tri);
  REQUIRE(cb.signature.rows() == 1);
  CHECK(cb.signature.cwiseAbs().sum() == 3.0);
  CHECK((cb.signature * boundary_operator(tri)).norm() == 0.0);

  std::vector<EdgeSpec> k4;
  for (int u = 0; u < 4; ++u)
    for (int v = u + 1; v < 4; ++v) k4.push_back({u, v, 1.0});
  const WeightedGraph g4({0, 1, 2, 3}, k4);
  const CycleBasis b4 = fundamental_cycle_basis(g4);
  CHECK(b4.signature.rows() == 3);
  CHECK((b4.signature * boundary_operator(g4)).norm() == 0.0);
}

TEST_CASE("spanning tree prefers light edges") {
  WeightedGraph g({0, 1, 2}, {{0, 1, 5.0}, {1, 2, 1.0}, {0, 2, 1.0}});
  const CycleBasis cb = fundamental_cycle_basis(g);
  REQUIRE(cb.chords.size() == 1);
  CHECK(cb.chords[0] == 0);
}

TEST_CASE("cycle basis rejects disconnected graphs") {
  GraphOptions o;
  o.allow_disconnected = true;
  WeightedGraph g({0, 1, 2, 3}, {{0, 1, 1.0}, {2, 3, 1.0}}, {}, o);
  CHECK_THROWS_AS(fundamental_cycle_basis(g), InvalidArgument);
}

TEST_CASE("algebraic connectivity examples") {
  CHECK(algebraic_connectivity(WeightedGraph({0, 1, 2}, {{0, 1, 1.0}, {1, 2, 1.0}})) == doctest::Approx(1.0));
  CHECK(algebraic_connectivity(triangle()) == doctest::Approx(3.0));
  GraphOptions o;
  o.allow_disconnected = true;
  CHECK(algebraic_connectivity(WeightedGraph({0, 1}, {}, {}, o)) == doctest::Approx(0.0));
}

TEST_CASE("effective resistance examples") {
  CHECK(effective_resistance(WeightedGraph({0, 1}, {{0, 1, 1.0}}), 0, 1) == doctest::Approx(1.0));
  CHECK(effective_resistance(WeightedGraph({0, 1}, {{0, 1, 4.0}}), 0, 1) == doctest::Approx(0.25));
  CHECK(effective_resistance(triangle(), 1, 2) == doctest::Approx(2.0 / 3.0));
  CHECK(effective_resistance(triangle(), 2, 2) == 0.0);
  GraphOptions o;
  o.allow_disconnected = true;
  CHECK_THROWS_AS(effective_resistance(WeightedGraph({0, 1}, {}, {}, o), 0, 1), InvalidArgument);
}

TEST_CASE("random connected graphs: rank, kernel dimension and Hodge decomposition") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 20));
    const WeightedGraph g = oracle::random_graph(rng, n, 0.2);
    const MatrixXd B = boundary_operator(g);
    const MatrixXd L1 = edge_laplacian(B);
    Eigen::FullPivLU<MatrixXd> lu(B);
    CHECK(lu.rank() == n - 1);
    Eigen::FullPivLU<MatrixXd> lu1(L1);
    lu1.setThreshold(1e-10);
    CHECK(L1.rows() - lu1.rank() == g.num_edges() - n + 1);

    const VectorXd x = rng.normal_vector(g.num_edges());
    const VectorXd recon = gradient_projector(B) * x + harmonic_projector(B) * x;
    CHECK((recon - x).norm() <= 1e-10);
  }
}

TEST_CASE("Weyl bound for a single edge-weight perturbation") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const WeightedGraph g = oracle::random_graph(rng, 8, 0.3);
    auto specs = g.edge_specs();
    const double eps = rng.uniform(-0.4, 0.4);
    specs[0].w += eps;
    const WeightedGraph h(g.vertices(), specs);
    const MatrixXd La = vertex_laplacian(g), Lb = vertex_laplacian(h);
    Eigen::SelfAdjointEigenSolver<MatrixXd> ea(La), eb(Lb), ed(Lb - La);
    const double bound = ed.eigenvalues().cwiseAbs().maxCoeff();
    CHECK((ea.eigenvalues() - eb.eigenvalues()).cwiseAbs().maxCoeff() <= bound + 1e-12);
  }
}

TEST_CASE("effective resistance is a metric") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const WeightedGraph g = oracle::random_graph(rng, static_cast<int>(rng.uniform_int(3, 9)), 0.3);
    const auto n = g.num_vertices();
    const VertexId i = rng.uniform_int(0, n - 1), j = rng.uniform_int(0, n - 1), k = rng.uniform_int(0, n - 1);
    const double rij = effective_resistance(g, i, j), rjk = effective_resistance(g, j, k),
                 rik = effective_resistance(g, i, k);
    CHECK(rik <= rij + rjk + 1e-12);
    CHECK(effective_resistance(g, j, i) == doctest::Approx(rij).epsilon(1e-12));
  }
}
