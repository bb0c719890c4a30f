#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fabric/semantics.hpp"
#include "oracles.hpp"

using namespace fabric;

namespace {

SceneState make_scene(WeightedGraph g, MatrixXd states) {
  SceneState s;
  s.graph = std::move(g);
  s.states = std::move(states);
  return s;
}

SceneState pair_scene(double z1, double z2) {
  MatrixXd S(2, 1);
  S << z1, z2;
  return make_scene(WeightedGraph({1, 2}, {{1, 2, 1.0}}), S);
}

/// Random scene with a feasible constraint on the edge cochain.
SceneState random_scene(Rng& rng, int n, Index d, Index q) {
  SceneState s = make_scene(oracle::random_graph(rng, n, 0.4), rng.normal_matrix(n, d));
  const Index m = s.graph.num_edges();
  q = std::min(q, m);
  if (q > 0) {
    const MatrixXd C = rng.normal_matrix(q, m);
    const VectorXd x = edge_cochain(s.graph, s.states + 0.1 * rng.normal_matrix(n, d));
    s.constraint = AffineConstraint(C, C * x);
  }
  return s;
}

SemanticMap random_map(Rng& rng, size_t n) {
  SemanticMap m;
  const char* names[] = {"cup", "book", "table"};
  for (size_t i = 0; i < n; ++i) {
    m.points.push_back(Eigen::Vector3d(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)));
    m.classes.push_back(names[rng.uniform_int(0, 2)]);
  }
  return m;
}

Eigen::Matrix3d random_rotation(Rng& rng) { return rng.orthogonal(3, true); }

}  // namespace

TEST_CASE("block layout") {
  const BlockLayout l = BlockLayout::uniform(10);
  CHECK(l.total() == 10);
  CHECK(l.dims[3] == 4);
  CHECK(l.offset(2) == 4);
  CHECK_THROWS(l.offset(4));
}

TEST_CASE("scene validation") {
  SceneState s = pair_scene(0, 1);
  CHECK_NOTHROW(s.validate());
  s.labels = {"cup"};
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s.labels = {};
  s.constraint = AffineConstraint(MatrixXd::Ones(1, 2), VectorXd::Ones(1));
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
}

TEST_CASE("onn solve: already optimal scene needs no iterations") {
  const OnnResult r = onn_solve(pair_scene(2.0, 2.0));
  CHECK(r.converged);
  CHECK(r.iterations == 0);
}

TEST_CASE("onn solve: two-node scene matches the KKT oracle") {
  SceneState s = pair_scene(0.0, 3.0);
  s.constraint = AffineConstraint(MatrixXd::Ones(1, 1), VectorXd::Ones(1));
  const OnnResult r = onn_solve(s);
  REQUIRE(r.converged);
  // On the branch s2 > s1 the cochain is s2 - s1 and the loss is quadratic.
  MatrixXd b(1, 2);
  b << -1, 1;
  const MatrixXd H = MatrixXd::Identity(2, 2) + 2.0 * b.transpose() * b + b.transpose() * b;
  const VectorXd z = (VectorXd(2) << 0.0, 3.0).finished();
  const VectorXd star = oracle::kkt(H, -z, b, VectorXd::Ones(1));
  CHECK((r.scene.states.col(0) - star).norm() <= 1e-7);
  CHECK(r.residual <= 1e-10);
}

TEST_CASE("onn solve: vector states pinned to a circle") {
  MatrixXd S(2, 2);
  S << 0, 0, 3, 4;
  SceneState s = make_scene(WeightedGraph({0, 1}, {{0, 1, 1.0}}), S);
  s.constraint = AffineConstraint(MatrixXd::Ones(1, 1), (VectorXd(1) << 2.0).finished());
  OnnOptions o;
  o.weights.consensus = 0.0;
  o.weights.connection = 0.0;
  const OnnResult r = onn_solve(s, o);
  REQUIRE(r.converged);
  // Closest pair with ||s1 - s0|| = 2: keep the midpoint and the direction.
  const Eigen::RowVector2d mid(1.5, 2.0), dir(0.6, 0.8);
  CHECK((r.scene.states.row(0) - (mid - dir)).norm() <= 1e-7);
  CHECK((r.scene.states.row(1) - (mid + dir)).norm() <= 1e-7);
}

TEST_CASE("onn solve: inconsistent constraint falls back to the penalty path") {
  MatrixXd S(3, 1);
  S << 0, 1, 3;
  SceneState s = make_scene(WeightedGraph({0, 1, 2}, {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 1.0}}), S);
  MatrixXd C(2, 3);
  C << 1, 0, 0, 1, 0, 0;
  s.constraint = AffineConstraint(C, (VectorXd(2) << 1.0, 2.0).finished());
  REQUIRE_FALSE(s.constraint.consistent());
  const OnnResult r = onn_solve(s);
  CHECK(r.penalty_path);
  CHECK(r.residual >= s.constraint.inconsistency() - 1e-12);
  CHECK(std::isfinite(r.loss));
}

TEST_CASE("onn solve: monotone loss and exact constraints on random scenes") {
  Rng rng(51);
  for (int t = 0; t < 30; ++t) {
    const SceneState s = random_scene(rng, static_cast<int>(rng.uniform_int(3, 8)), rng.uniform_int(1, 3),
                                      rng.uniform_int(1, 3));
    const OnnResult r = onn_solve(s);
    CHECK(r.converged);
    for (size_t k = 1; k < r.loss_history.size(); ++k) CHECK(r.loss_history[k] <= r.loss_history[k - 1]);
    for (double res : r.constraint_residuals) CHECK(res <= 1e-10);
  }
}

TEST_CASE("reasoning traces") {
  const OnnResult two = onn_solve(pair_scene(0.0, 1.0));
  const ReasoningTrace t2 = build_reasoning_trace(two);
  CHECK(t2.interactions.rows() == 1);
  CHECK(t2.interactions.cols() == 2);
  CHECK(t2.h1.points.empty());
  CHECK(t2.weights()(0) == 1.0);

  MatrixXd S(3, 2);
  S << 0, 0, 1, 0, 0, 1;
  const SceneState tri = make_scene(WeightedGraph({0, 1, 2}, {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 1.0}}), S);
  const ReasoningTrace t3 = build_reasoning_trace(onn_solve(tri));
  CHECK(t3.h1.essential_births().size() == 1);

  CHECK(build_reasoning_trace(onn_solve(tri)).to_json() == t3.to_json());

  OnnResult unconverged = two;
  unconverged.converged = false;
  CHECK_THROWS_AS(build_reasoning_trace(unconverged), InvalidArgument);
}

TEST_CASE("contextual distance examples") {
  Rng rng(3);
  SceneState a = random_scene(rng, 5, 2, 2);
  CHECK(contextual_distance(a, a) == 0.0);
  SceneState b = a;
  VectorXd shift = VectorXd::Zero(a.constraint.rows());
  shift(0) = 0.3;
  b.constraint = AffineConstraint(a.constraint.matrix(), a.constraint.target() + shift);
  CHECK(contextual_distance(a, b) == doctest::Approx(0.3).epsilon(1e-12));

  SceneState c = a;
  c.constraint = AffineConstraint::none(a.graph.num_edges());
  CHECK_THROWS_AS(contextual_distance(a, c), InvalidArgument);
}

TEST_CASE("contextual distance is a pseudometric") {
  Rng rng(55);
  for (int t = 0; t < 50; ++t) {
    SceneState a = random_scene(rng, 6, 2, 1);
    SceneState b = a, c = a;
    b.states += 0.3 * rng.normal_matrix(6, 2);
    c.states += 0.3 * rng.normal_matrix(6, 2);
    b.constraint = AffineConstraint(a.constraint.matrix() + 0.1 * rng.normal_matrix(1, a.graph.num_edges()),
                                    a.constraint.target() + 0.1 * rng.normal_vector(1));
    const double ab = contextual_distance(a, b), bc = contextual_distance(b, c), ac = contextual_distance(a, c);
    CHECK(ab == doctest::Approx(contextual_distance(b, a)).epsilon(1e-12));
    CHECK(ac <= ab + bc + 1e-12);
  }
}

TEST_CASE("state perturbations move the contextual distance within the stability bound") {
  Rng rng(57);
  for (int t = 0; t < 50; ++t) {
    const SceneState a = random_scene(rng, 6, 3, 1);
    SceneState b = a;
    const double eps = rng.uniform(0.0, 0.2);
    for (Index i = 0; i < b.states.size(); ++i) b.states.data()[i] += rng.uniform(-eps, eps);
    // Each edge value moves by at most ||dS_i|| + ||dS_j|| <= 2 eps sqrt(d); d_PH <= (alpha0 + alpha1) sup.
    const double bound = 1.0 * 2.0 * eps * std::sqrt(3.0);
    CHECK(contextual_distance(a, b) <= bound + 1e-12);
  }
}

TEST_CASE("map fusion examples") {
  Rng rng(61);
  const SemanticMap a = random_map(rng, 12);
  const FusionResult same = fuse_maps(a, a, {});
  CHECK((same.transform.R - Eigen::Matrix3d::Identity()).norm() <= 1e-9);
  CHECK(same.objective <= 1e-18);

  SemanticMap b = a;
  for (auto& p : b.points) p += Eigen::Vector3d(1, 0, 0);
  FusionOptions o;
  o.eps = 1.5;
  const FusionResult moved = fuse_maps(a, b, o);
  CHECK((moved.transform.t - Eigen::Vector3d(1, 0, 0)).norm() <= 1e-6);

  SemanticMap c = a;
  c.classes[0] = c.classes[0] == "cup" ? "book" : "cup";
  o.eps = 0.5;
  o.lambda = 1.0;
  const FusionResult mismatch = fuse_maps(a, c, o);
  CHECK(mismatch.objective == doctest::Approx(mismatch.geometric + 1.0));
  o.strict = true;
  const FusionResult strict = fuse_maps(a, c, o);
  CHECK(strict.correspondences.size() == a.points.size() - 1);
  CHECK(strict.label_penalty == 0.0);
}

TEST_CASE("map fusion recovers rigid transforms from exact correspondences") {
  Rng rng(63);
  for (int t = 0; t < 30; ++t) {
    const SemanticMap a = random_map(rng, static_cast<size_t>(rng.uniform_int(3, 20)));
    const Eigen::Matrix3d R = random_rotation(rng);
    const Eigen::Vector3d tr(rng.normal(), rng.normal(), rng.normal());
    SemanticMap b = a;
    for (auto& p : b.points) p = R * p + tr;
    FusionOptions o;
    std::vector<std::pair<size_t, size_t>> pairs;
    for (size_t i = 0; i < a.points.size(); ++i) pairs.emplace_back(i, i);
    o.correspondences = pairs;
    const FusionResult r = fuse_maps(a, b, o);
    CHECK((r.transform.R - R).norm() <= 1e-6);
    CHECK((r.transform.t - tr).norm() <= 1e-6);
  }
}

TEST_CASE("map fusion needs three non-collinear correspondences") {
  SemanticMap a;
  a.points = {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0)};
  a.classes = {"x", "y"};
  CHECK_THROWS_AS(fuse_maps(a, a, {}), InvalidArgument);
  a.points.push_back(Eigen::Vector3d(2, 0, 0));
  a.classes.push_back("z");
  CHECK_THROWS_AS(fuse_maps(a, a, {}), InvalidArgument);
}

TEST_CASE("posterior fusion") {
  const VectorXd f = fuse_class_posteriors({(VectorXd(2) << 0.8, 0.2).finished(), (VectorXd(2) << 0.5, 0.5).finished()});
  CHECK(std::abs(f(0) - 2.0 / 3.0) <= 1e-12);
  CHECK(std::abs(f(1) - 1.0 / 3.0) <= 1e-12);
  const VectorXd u = VectorXd::Constant(4, 0.25);
  CHECK((fuse_class_posteriors({u, u, u}) - u).norm() <= 1e-15);
  const VectorXd p = (VectorXd(3) << 0.1, 0.6, 0.3).finished();
  CHECK((fuse_class_posteriors({p}) - p).norm() <= 1e-15);
  const VectorXd z = fuse_class_posteriors({(VectorXd(2) << 1.0, 0.0).finished(), (VectorXd(2) << 0.5, 0.5).finished()});
  CHECK(z(1) == 0.0);
  CHECK_THROWS(fuse_class_posteriors({(VectorXd(2) << 1.0, 0.0).finished(), (VectorXd(2) << 0.0, 1.0).finished()}));
  CHECK_THROWS(fuse_class_posteriors({(VectorXd(2) << 0.7, 0.7).finished()}));

  Rng rng(67);
  for (int t = 0; t < 50; ++t) {
    std::vector<VectorXd> frames;
    for (int k = 0; k < 3; ++k) {
      VectorXd v = rng.normal_vector(5).cwiseAbs().array() + 0.01;
      frames.push_back(v / v.sum());
    }
    const VectorXd out = fuse_class_posteriors(frames);
    CHECK(std::abs(out.sum() - 1.0) <= 1e-12);
    std::vector<VectorXd> rev = frames;
    for (auto& v : rev) v.reverseInPlace();
    CHECK((fuse_class_posteriors(rev).reverse() - out).norm() <= 1e-15);
  }
}

TEST_CASE("ontology rules") {
  const OntologyRule r1 = OntologyRule::parse("Cup(x) -> Graspable(x)");
  const OntologyRule r2 = OntologyRule::parse("Table(y) & Book(x) & On(x, y) -> CandidateForPickUp(x)");
  FactSet facts{{"Cup", {"c1"}}, {"Table", {"t"}}, {"Book", {"b"}}, {"On", {"b", "t"}}};

  const RuleOutcome a = apply_ontology_rules(facts, {r1});
  REQUIRE(a.derived.size() == 1);
  CHECK(a.derived[0] == Atom{"Graspable", {"c1"}});

  const RuleOutcome b = apply_ontology_rules(facts, {r2});
  REQUIRE(b.derived.size() == 1);
  CHECK(b.derived[0] == Atom{"CandidateForPickUp", {"b"}});

  CHECK(apply_ontology_rules(facts, {}).derived.empty());
  CHECK_THROWS_AS(OntologyRule::parse("Cup(x) -> Graspable(y)"), InvalidArgument);
  CHECK_THROWS_AS(OntologyRule::parse("Cup(x) Graspable(x)"), InvalidArgument);
}

TEST_CASE("ontology rules over a scene, chained to the fixpoint") {
  MatrixXd S = MatrixXd::Zero(3, 1);
  SceneState s = make_scene(WeightedGraph({0, 1, 2}, {{0, 1, 1.0}, {1, 2, 1.0}}), S);
  s.labels = {"Table", "Book", "Cup"};
  s.relations["On"] = {{1, 0}, {2, 0}};
  const std::vector<OntologyRule> rules = {
      OntologyRule::parse("Cup(x) -> Graspable(x)"),
      OntologyRule::parse("Graspable(x) & On(x, y) & Table(y) -> Reachable(x)"),
      OntologyRule::parse("Table(y) & Book(x) & On(x, y) -> CandidateForPickUp(x)")};
  const RuleOutcome out = apply_ontology_rules(s, rules);
  CHECK(out.derived.size() == 3);
  CHECK(out.rounds == 2);

  std::vector<OntologyRule> shuffled = {rules[2], rules[1], rules[0]};
  CHECK(apply_ontology_rules(s, shuffled).derived == out.derived);
  CHECK(out.rounds <= static_cast<int>(rules.size() * scene_facts(s).size()));
}

TEST_CASE("tracking report examples") {
  TrackingParams p;
  std::vector<TrackingBoundary> id;
  for (int k = 0; k < 4; ++k) id.push_back({VectorXd::Ones(3), VectorXd::Ones(3), MatrixXd::Identity(3, 3)});
  const TrackingReport zero = tracking_report(id, p);
  CHECK(zero.cumulative == 0.0);

  TrackingBoundary jump{VectorXd::Zero(2), (VectorXd(2) << 0.12, 0.16).finished(), MatrixXd::Identity(2, 2)};
  CHECK(tracking_report({jump}, p).cumulative == doctest::Approx(0.2));

  TrackingBoundary bad{VectorXd::Zero(2), VectorXd::Zero(3), MatrixXd::Identity(2, 2)};
  try {
    tracking_report({jump, bad}, p);
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("boundary 1") != std::string::npos);
  }
}

TEST_CASE("piecewise tracking stays inside the decay bound") {
  Rng rng(71);
  for (int t = 0; t < 100; ++t) {
    TrackingParams p;
    p.lipschitz = rng.uniform(0.2, 2.0);
    p.speed = rng.uniform(0.1, 3.0);
    p.decay = rng.uniform(0.1, 2.0);
    p.horizon = rng.uniform(1.0, 10.0);
    const Index d = rng.uniform_int(1, 4);
    const int K = static_cast<int>(rng.uniform_int(1, 12));
    std::vector<double> times{0.0};
    for (int k = 0; k < K; ++k) times.push_back(rng.uniform(0.0, p.horizon));
    std::sort(times.begin(), times.end());
    times.push_back(p.horizon);

    // State drifts with speed <= M e^{-mu t} between switches; phi_k is L_phi-Lipschitz.
    VectorXd prev_after = rng.normal_vector(d);
    std::vector<TrackingBoundary> bs;
    for (int k = 1; k <= K; ++k) {
      const double a = times[k - 1], b = times[k];
      const double drift = p.speed / p.decay * (std::exp(-p.decay * a) - std::exp(-p.decay * b));
      VectorXd dir = rng.normal_vector(d);
      dir /= dir.norm();
      const VectorXd before = prev_after + rng.uniform() * drift * dir;
      MatrixXd phi = rng.normal_matrix(d, d);
      phi *= p.lipschitz / phi.jacobiSvd().singularValues()(0);
      bs.push_back({before, phi * prev_after, phi});
      prev_after = bs.back().after;
    }
    const TrackingReport r = tracking_report(bs, p);
    CHECK_FALSE(r.violated);
    CHECK(r.cumulative <= r.bound + 1e-12);
  }
}
