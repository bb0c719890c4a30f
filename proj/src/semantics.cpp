#include "fabric/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace fabric {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\n\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\n\r");
  return s.substr(b, e - b + 1);
}

AffineConstraint effective_constraint(const SceneState& scene) {
  if (scene.constraint.rows() == 0) return AffineConstraint::none(scene.graph.num_edges());
  return scene.constraint;
}

nlohmann::json matrix_json(const MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

nlohmann::json vector_json(const VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

BlockLayout BlockLayout::uniform(Index d) {
  const Index q = d / 4;
  return BlockLayout{{q, q, q, d - 3 * q}};
}

Index BlockLayout::offset(int block) const {
  if (block < 0 || block > 3) throw InvalidArgument("block index must be in 0..3");
  Index o = 0;
  for (int k = 0; k < block; ++k) o += dims[static_cast<size_t>(k)];
  return o;
}

void SceneState::validate() const {
  const Index n = graph.num_vertices(), m = graph.num_edges();
  if (states.rows() != n)
    throw InvalidArgument("scene has " + std::to_string(n) + " vertices but " + std::to_string(states.rows()) +
                          " state rows");
  if (states.cols() < 1) throw InvalidArgument("state dimension must be positive");
  if (!states.allFinite()) throw InvalidArgument("scene states contain non-finite entries");
  if (!labels.empty() && static_cast<Index>(labels.size()) != n)
    throw InvalidArgument("scene has " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                          " vertices");
  if (constraint.rows() > 0 && constraint.cols() != m)
    throw InvalidArgument("constraint has " + std::to_string(constraint.cols()) + " columns but the graph has " +
                          std::to_string(m) + " edges");
  if (!transforms.empty()) {
    if (static_cast<Index>(transforms.size()) != m)
      throw InvalidArgument("scene has " + std::to_string(transforms.size()) + " transforms for " +
                            std::to_string(m) + " edges");
    for (const MatrixXd& T : transforms)
      if (T.rows() != dim() || T.cols() != dim()) throw InvalidArgument("edge transform does not match state dimension");
  }
  if (layout.total() != 0 && layout.total() != dim())
    throw InvalidArgument("block layout sums to " + std::to_string(layout.total()) + ", state dimension is " +
                          std::to_string(dim()));
  for (const auto& [name, pairs] : relations)
    for (const auto& [a, b] : pairs)
      if (!graph.contains(a) || !graph.contains(b))
        throw InvalidArgument("relation " + name + " refers to an unknown vertex");
}

ConnectionGraph SceneState::connection() const {
  ConnectionGraph cg = ConnectionGraph::trivial(graph, dim());
  if (!transforms.empty()) cg.transforms = transforms;
  return cg;
}

VectorXd edge_cochain(const WeightedGraph& g, const MatrixXd& states) {
  VectorXd x(g.num_edges());
  for (Index e = 0; e < g.num_edges(); ++e)
    x(e) = (states.row(g.edge(e).head) - states.row(g.edge(e).tail)).norm();
  return x;
}

// ---------------------------------------------------------------------------------------------

OnnProblem::OnnProblem(const SceneState& scene, const OnnOptions& opts, bool penalized)
    : g_(scene.graph),
      n_(scene.graph.num_vertices()),
      d_(scene.dim()),
      w_(opts.weights),
      penalized_(penalized),
      rho_(opts.penalty_rho),
      projection_tol_(opts.projection_tol),
      collapse_tol_(opts.collapse_tol) {
  const AffineConstraint c = effective_constraint(scene);
  C_ = c.matrix();
  tau_ = c.target();
  L1_ = edge_laplacian(boundary_operator(scene.graph));
  Lconn_ = assemble_connection_laplacian(scene.connection());
  z_ = stack(scene.states);
}

VectorXd OnnProblem::stack(const MatrixXd& states) const {
  VectorXd s(n_ * d_);
  for (Index i = 0; i < n_; ++i) s.segment(i * d_, d_) = states.row(i).transpose();
  return s;
}

MatrixXd OnnProblem::unstack(const VectorXd& s) const {
  MatrixXd S(n_, d_);
  for (Index i = 0; i < n_; ++i) S.row(i) = s.segment(i * d_, d_).transpose();
  return S;
}

VectorXd OnnProblem::cochain(const VectorXd& s) const {
  VectorXd x(g_.num_edges());
  for (Index e = 0; e < g_.num_edges(); ++e)
    x(e) = (s.segment(g_.edge(e).head * d_, d_) - s.segment(g_.edge(e).tail * d_, d_)).norm();
  return x;
}

MatrixXd OnnProblem::cochain_jacobian(const VectorXd& s, const Face* face) const {
  MatrixXd J = MatrixXd::Zero(g_.num_edges(), n_ * d_);
  for (Index e = 0; e < g_.num_edges(); ++e) {
    const Index h = g_.edge(e).head * d_, t = g_.edge(e).tail * d_;
    const VectorXd delta = s.segment(h, d_) - s.segment(t, d_);
    const double norm = delta.norm();
    // Subgradient 0 where the endpoints coincide; constant on a face that merges them.
    if (norm == 0.0) continue;
    if (face && !face->empty() && face->cluster[g_.edge(e).head] == face->cluster[g_.edge(e).tail]) continue;
    J.block(e, h, 1, d_) = delta.transpose() / norm;
    J.block(e, t, 1, d_) = -delta.transpose() / norm;
  }
  return J;
}

double OnnProblem::residual(const VectorXd& s) const {
  if (C_.rows() == 0) return 0.0;
  return (C_ * cochain(s) - tau_).norm();
}

double OnnProblem::value(const VectorXd& s) const {
  const VectorXd x = cochain(s);
  double v = 0.5 * w_.task * (s - z_).squaredNorm() + 0.5 * w_.consensus * x.dot(L1_ * x) +
             0.5 * w_.connection * s.dot(Lconn_ * s);
  if (C_.rows() > 0) {
    const double r = (C_ * x - tau_).norm();
    v += penalized_ ? rho_ * r : w_.context * r * r;
  }
  return v;
}

LossComponents OnnProblem::components(const VectorXd& s) const {
  const VectorXd x = cochain(s);
  LossComponents c;
  c.task = 0.5 * (s - z_).squaredNorm();
  c.consensus = 0.5 * x.dot(L1_ * x);
  c.connection = 0.5 * s.dot(Lconn_ * s);
  if (C_.rows() > 0) c.context = (C_ * x - tau_).squaredNorm();
  return c;
}

Face OnnProblem::face(const VectorXd& s) const {
  Face f;
  std::vector<Index> label(static_cast<size_t>(n_));
  std::iota(label.begin(), label.end(), Index{0});
  bool any = false;
  // Propagate the smallest label across collapsed edges until stable.
  for (bool changed = true; changed;) {
    changed = false;
    for (Index e = 0; e < g_.num_edges(); ++e) {
      const Index a = g_.edge(e).tail, b = g_.edge(e).head;
      if ((s.segment(b * d_, d_) - s.segment(a * d_, d_)).norm() > collapse_tol_) continue;
      any = true;
      const Index lo = std::min(label[a], label[b]);
      if (label[a] != lo || label[b] != lo) {
        label[a] = label[b] = lo;
        changed = true;
      }
    }
  }
  if (!any) return f;
  std::map<Index, Index> compact;
  f.cluster.resize(label.size());
  for (size_t i = 0; i < label.size(); ++i) {
    auto [it, inserted] = compact.try_emplace(label[i], static_cast<Index>(compact.size()));
    f.cluster[i] = it->second;
  }
  f.clusters = static_cast<Index>(compact.size());
  return f;
}

VectorXd OnnProblem::restrict(const Face& face, const VectorXd& v) const {
  if (face.empty()) return v;
  MatrixXd mean = MatrixXd::Zero(face.clusters, d_);
  VectorXd count = VectorXd::Zero(face.clusters);
  for (Index i = 0; i < n_; ++i) {
    mean.row(face.cluster[i]) += v.segment(i * d_, d_).transpose();
    count(face.cluster[i]) += 1.0;
  }
  VectorXd out(v.size());
  for (Index i = 0; i < n_; ++i)
    out.segment(i * d_, d_) = mean.row(face.cluster[i]).transpose() / count(face.cluster[i]);
  return out;
}

VectorXd OnnProblem::gradient(const VectorXd& s, const Face* face) const {
  const VectorXd x = cochain(s);
  VectorXd gx = w_.consensus * (L1_ * x);
  if (C_.rows() > 0) {
    const VectorXd r = C_ * x - tau_;
    if (penalized_) {
      const double rn = r.norm();
      if (rn > 0.0) gx += rho_ * (C_.transpose() * r) / rn;
    } else {
      gx += 2.0 * w_.context * (C_.transpose() * r);
    }
  }
  const VectorXd g = w_.task * (s - z_) + w_.connection * (Lconn_ * s) + cochain_jacobian(s, face).transpose() * gx;
  return face ? restrict(*face, g) : g;
}

VectorXd OnnProblem::project(const VectorXd& s0, const Face* face) const {
  if (C_.rows() == 0 || penalized_) return s0;
  VectorXd s = s0;
  double r = residual(s);
  for (int it = 0; it < 100; ++it) {
    if (r <= projection_tol_) return s;
    MatrixXd A = C_ * cochain_jacobian(s, face);
    if (face)
      for (Index r_i = 0; r_i < A.rows(); ++r_i) A.row(r_i) = restrict(*face, A.row(r_i).transpose()).transpose();
    const VectorXd delta = A.completeOrthogonalDecomposition().solve(C_ * cochain(s) - tau_);
    if (delta.norm() == 0.0)
      throw NumericError("constraint projection stalled: cochain Jacobian is singular (coincident states?)");
    // Damped Gauss-Newton: halve until the residual decreases.
    double step = 1.0;
    VectorXd next;
    double rn = r;
    for (int h = 0; h < 40; ++h, step *= 0.5) {
      next = s - step * delta;
      rn = residual(next);
      if (rn < r) break;
    }
    if (!(rn < r)) throw NumericError("constraint projection stalled at residual " + std::to_string(r));
    s = std::move(next);
    r = rn;
  }
  if (r <= projection_tol_) return s;
  std::ostringstream msg;
  msg << "constraint projection did not reach tolerance; residual " << r;
  throw NumericError(msg.str());
}

VectorXd OnnProblem::tangent_gradient(const VectorXd& s, const Face* face) const {
  const VectorXd g = gradient(s, face);
  if (C_.rows() == 0 || penalized_) return g;
  MatrixXd At = (C_ * cochain_jacobian(s, face)).transpose();
  if (face)
    for (Index c = 0; c < At.cols(); ++c) At.col(c) = restrict(*face, At.col(c));
  const VectorXd coeff = At.completeOrthogonalDecomposition().solve(g);
  return g - At * coeff;
}

double OnnProblem::stationarity(const VectorXd& s, const Face* face) const { return tangent_gradient(s, face).norm(); }

OnnResult onn_solve(const SceneState& scene, const OnnOptions& opts) {
  scene.validate();
  if (!(opts.eta0 > 0.0) || !std::isfinite(opts.eta0))
    throw InvalidArgument("step size eta0 must be positive and finite");
  const AffineConstraint c = effective_constraint(scene);
  const bool penalized = c.rows() > 0 && !c.consistent();

  OnnProblem prob(scene, opts, penalized);
  OnnResult out;
  out.penalty_path = penalized;

  VectorXd s = prob.project(prob.observations());
  double loss = prob.value(s);
  out.loss_history.push_back(loss);
  out.constraint_residuals.push_back(prob.residual(s));

  double stat = prob.stationarity(s);
  double eta = opts.eta0;
  if (stat <= opts.grad_tol) {
    out.converged = true;
  } else {
    // Backtracking projected step from `from`; sufficient decrease relative to `from_loss`.
    auto descend = [&](const VectorXd& from, double from_loss, double& step,
                       const Face* face) -> std::optional<VectorXd> {
      const VectorXd g = prob.tangent_gradient(from, face);
      step = std::min(2.0 * step, opts.eta0);
      for (; step > 1e-16; step *= 0.5) {
        try {
          VectorXd next = prob.project(from - step * g, face);
          if (prob.value(next) <= from_loss - 1e-4 * (next - from).squaredNorm() / step) return next;
        } catch (const NumericError&) {
          // Projection from too far away; retry closer.
        }
      }
      return std::nullopt;
    };

    VectorXd s_prev = s;
    double theta = 1.0, eta_free = opts.eta0;
    for (int k = 0; k < opts.k_max; ++k) {
      // Near collapsed edges the loss has a kink; steps stay on the face that keeps them merged,
      // and an unrestricted step competes so an edge can reopen.
      const Face face = prob.face(s);
      const Face* on_face = face.empty() ? nullptr : &face;
      // Momentum, restarted whenever the extrapolated step would raise the loss.
      const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
      std::optional<VectorXd> next;
      double next_loss = loss;
      if (k > 0 && theta > 1.0) {
        const VectorXd y = s + ((theta - 1.0) / theta_next) * (s - s_prev);
        double step_y = eta;
        next = descend(y, prob.value(y), step_y, on_face);
        if (next) {
          next_loss = prob.value(*next);
          if (next_loss <= loss) eta = step_y;
          else next.reset();
        }
      }
      if (next) {
        theta = theta_next;
      } else {
        next = descend(s, loss, eta, on_face);
        if (next) next_loss = prob.value(*next);
        theta = k > 0 && theta > 1.0 ? 1.0 : theta_next;
      }
      if (on_face) {
        std::optional<VectorXd> free = descend(s, loss, eta_free, nullptr);
        if (free) {
          const double free_loss = prob.value(*free);
          if (!next || free_loss < next_loss) {
            next = std::move(free);
            next_loss = free_loss;
            theta = 1.0;
          }
        }
      }
      if (!next) break;
      const double change = loss - next_loss;
      s_prev = s;
      s = std::move(*next);
      loss = next_loss;
      out.iterations = k + 1;
      out.loss_history.push_back(loss);
      out.constraint_residuals.push_back(prob.residual(s));
      const Face at = prob.face(s);
      stat = at.empty() ? prob.stationarity(s) : prob.stationarity(s, &at);
      if (stat <= opts.grad_tol || change <= opts.loss_tol * std::max(1.0, std::abs(loss))) {
        out.converged = true;
        break;
      }
    }
  }

  out.scene = scene;
  out.scene.states = prob.unstack(s);
  out.stationarity = stat;
  out.residual = prob.residual(s);
  out.loss = loss;
  out.components = prob.components(s);
  return out;
}

// ---------------------------------------------------------------------------------------------

MatrixXd ReasoningTrace::residuals() const { return interactions.leftCols(interactions.cols() - 1); }

VectorXd ReasoningTrace::weights() const { return interactions.col(interactions.cols() - 1); }

std::string ReasoningTrace::to_json() const {
  nlohmann::json j;
  j["t"] = t;
  j["states"] = matrix_json(states);
  nlohmann::json edges_json = nlohmann::json::array();
  for (const EdgeSpec& e : edges) edges_json.push_back({e.u, e.v, e.w});
  j["edges"] = edges_json;
  j["interactions"] = matrix_json(interactions);
  j["constraint"] = {{"C", matrix_json(constraint_matrix)}, {"tau", vector_json(constraint_target)}};
  j["h0"] = nlohmann::json::parse(h0.to_json());
  j["h1"] = nlohmann::json::parse(h1.to_json());
  j["loss"] = loss;
  return j.dump();
}

ReasoningTrace build_reasoning_trace(const OnnResult& solved, const TraceOptions& opts) {
  if (!solved.converged) throw InvalidArgument("reasoning trace requires a converged scene");
  const SceneState& scene = solved.scene;
  const WeightedGraph& g = scene.graph;
  const Index d = scene.dim(), m = g.num_edges();
  const ConnectionGraph cg = scene.connection();

  ReasoningTrace tr;
  tr.t = scene.t;
  tr.states = scene.states;
  tr.interactions.resize(m, d + 1);
  for (Index e = 0; e < m; ++e) {
    const Edge& ed = g.edge(e);
    const VectorXd r = scene.states.row(ed.tail).transpose() - cg.transforms[e] * scene.states.row(ed.head).transpose();
    tr.interactions.block(e, 0, 1, d) = r.transpose();
    tr.interactions(e, d) = ed.weight;
  }
  tr.edges = g.edge_specs();
  const AffineConstraint c = effective_constraint(scene);
  tr.constraint_matrix = c.matrix();
  tr.constraint_target = c.target();
  const Filtration f = filtration_values(g, scene.states, opts.alpha, opts.beta);
  tr.h0 = persistence_diagram(g, f, 0);
  tr.h1 = persistence_diagram(g, f, 1);
  tr.loss = solved.loss;
  return tr;
}

double contextual_distance(const SceneState& a, const SceneState& b, const ContextOptions& opts) {
  const AffineConstraint ca = effective_constraint(a), cb = effective_constraint(b);
  if (ca.rows() != cb.rows() || (ca.rows() > 0 && ca.cols() != cb.cols()))
    throw InvalidArgument("constraint shapes differ: " + std::to_string(ca.rows()) + "x" + std::to_string(ca.cols()) +
                          " vs " + std::to_string(cb.rows()) + "x" + std::to_string(cb.cols()));
  const Filtration fa = filtration_values(a.graph, a.states, opts.filtration.alpha, opts.filtration.beta);
  const Filtration fb = filtration_values(b.graph, b.states, opts.filtration.alpha, opts.filtration.beta);
  double dist = ph_distance(a.graph, fa, b.graph, fb, opts.alpha0, opts.alpha1);
  if (ca.rows() > 0) dist += (ca.matrix() - cb.matrix()).norm() + (ca.target() - cb.target()).norm();
  return dist;
}

// ---------------------------------------------------------------------------------------------

void SemanticMap::validate() const {
  if (points.size() != classes.size())
    throw InvalidArgument("semantic map has " + std::to_string(points.size()) + " points but " +
                          std::to_string(classes.size()) + " classes");
  for (const auto& p : points)
    if (!p.allFinite()) throw InvalidArgument("semantic map contains a non-finite point");
}

RigidTransform rigid_align(const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst) {
  if (src.size() != dst.size()) throw InvalidArgument("rigid_align: point lists differ in length");
  if (src.size() < 3)
    throw InvalidArgument("too few correspondences: " + std::to_string(src.size()) + " (need at least 3)");
  Eigen::Vector3d ps = Eigen::Vector3d::Zero(), pd = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    ps += src[i];
    pd += dst[i];
  }
  ps /= static_cast<double>(src.size());
  pd /= static_cast<double>(src.size());
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero(), S = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    H += (src[i] - ps) * (dst[i] - pd).transpose();
    S += (src[i] - ps) * (src[i] - ps).transpose();
  }
  const Eigen::Vector3d spread = Eigen::JacobiSVD<Eigen::Matrix3d>(S).singularValues();
  if (spread(1) <= 1e-12 * std::max(1.0, spread(0)))
    throw InvalidArgument("correspondences are collinear; rotation is not determined");
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d U = svd.matrixU(), V = svd.matrixV();
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  D(2, 2) = (V * U.transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform T;
  T.R = V * D * U.transpose();
  T.t = pd - T.R * ps;
  return T;
}

FusionResult fuse_maps(const SemanticMap& a, const SemanticMap& b, const FusionOptions& opts) {
  a.validate();
  b.validate();
  if (!(opts.eps > 0.0)) throw InvalidArgument("correspondence radius must be positive");

  using Pairs = std::vector<std::pair<size_t, size_t>>;
  auto filter_labels = [&](Pairs pairs) {
    if (!opts.strict) return pairs;
    Pairs kept;
    for (const auto& p : pairs)
      if (a.classes[p.first] == b.classes[p.second]) kept.push_back(p);
    return kept;
  };
  auto align = [&](const Pairs& pairs) {
    std::vector<Eigen::Vector3d> src, dst;
    for (const auto& [i, j] : pairs) {
      src.push_back(a.points[i]);
      dst.push_back(b.points[j]);
    }
    return rigid_align(src, dst);
  };

  FusionResult out;
  out.transform = opts.initial;
  if (opts.correspondences) {
    for (const auto& [i, j] : *opts.correspondences)
      if (i >= a.points.size() || j >= b.points.size())
        throw InvalidArgument("correspondence index out of range");
    out.correspondences = filter_labels(*opts.correspondences);
    out.transform = align(out.correspondences);
    out.rounds = 1;
  } else {
    Pairs prev;
    for (int round = 0; round < opts.max_rounds; ++round) {
      Pairs pairs;
      for (size_t i = 0; i < a.points.size(); ++i) {
        const Eigen::Vector3d q = out.transform.apply(a.points[i]);
        double best = opts.eps;
        size_t arg = b.points.size();
        for (size_t j = 0; j < b.points.size(); ++j) {
          const double dist = (q - b.points[j]).norm();
          if (dist < best) {
            best = dist;
            arg = j;
          }
        }
        if (arg < b.points.size()) pairs.emplace_back(i, arg);
      }
      pairs = filter_labels(std::move(pairs));
      out.rounds = round + 1;
      if (round > 0 && pairs == prev) break;
      out.transform = align(pairs);
      prev = pairs;
    }
    out.correspondences = prev;
  }

  for (const auto& [i, j] : out.correspondences) {
    out.geometric += (out.transform.apply(a.points[i]) - b.points[j]).squaredNorm();
    if (a.classes[i] != b.classes[j]) out.label_penalty += opts.lambda;
  }
  out.objective = out.geometric + out.label_penalty;
  return out;
}

VectorXd fuse_class_posteriors(const std::vector<VectorXd>& frames) {
  if (frames.empty()) throw InvalidArgument("no frames to fuse");
  const Index k = frames.front().size();
  for (size_t f = 0; f < frames.size(); ++f) {
    const VectorXd& p = frames[f];
    if (p.size() != k) throw InvalidArgument("frame " + std::to_string(f) + " has a different class count");
    if (!p.allFinite() || p.minCoeff() < 0.0)
      throw InvalidArgument("frame " + std::to_string(f) + " is not a probability vector");
    if (std::abs(p.sum() - 1.0) > 1e-9) throw InvalidArgument("frame " + std::to_string(f) + " does not sum to 1");
  }
  VectorXd out(k);
  const double inv_n = 1.0 / static_cast<double>(frames.size());
  for (Index c = 0; c < k; ++c) {
    double acc = 0.0;
    bool zero = false;
    for (const VectorXd& p : frames) {
      if (p(c) == 0.0) {
        zero = true;
        break;
      }
      acc += std::log(p(c));
    }
    out(c) = zero ? 0.0 : std::exp(acc * inv_n);
  }
  const double total = out.sum();
  if (!(total > 0.0)) throw InvalidArgument("fused posterior is identically zero (conflicting frames)");
  return out / total;
}

// ---------------------------------------------------------------------------------------------

namespace {

Atom parse_atom(const std::string& text) {
  const std::string s = trim(text);
  const auto open = s.find('('), close = s.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open || close != s.size() - 1)
    throw InvalidArgument("malformed atom '" + s + "'");
  Atom a;
  a.predicate = trim(s.substr(0, open));
  if (a.predicate.empty()) throw InvalidArgument("atom without predicate: '" + s + "'");
  std::stringstream args(s.substr(open + 1, close - open - 1));
  std::string arg;
  while (std::getline(args, arg, ',')) {
    arg = trim(arg);
    if (arg.empty()) throw InvalidArgument("empty argument in '" + s + "'");
    a.args.push_back(arg);
  }
  if (a.args.empty()) throw InvalidArgument("atom without arguments: '" + s + "'");
  return a;
}

}  // namespace

OntologyRule OntologyRule::parse(const std::string& text) {
  const auto arrow = text.find("->");
  if (arrow == std::string::npos) throw InvalidArgument("rule needs '->': '" + text + "'");
  OntologyRule r;
  std::stringstream body(text.substr(0, arrow));
  std::string part;
  while (std::getline(body, part, '&')) r.body.push_back(parse_atom(part));
  r.head = parse_atom(text.substr(arrow + 2));
  r.validate();
  return r;
}

void OntologyRule::validate() const {
  if (body.empty()) throw InvalidArgument("rule body is empty");
  if (head.args.size() != 1) throw InvalidArgument("rule head must be unary: " + head.predicate);
  for (const std::string& v : head.args) {
    const bool bound = std::any_of(body.begin(), body.end(), [&](const Atom& a) {
      return std::find(a.args.begin(), a.args.end(), v) != a.args.end();
    });
    if (!bound) throw InvalidArgument("head variable " + v + " of " + head.predicate + " does not appear in the body");
  }
}

FactSet scene_facts(const SceneState& scene) {
  FactSet facts;
  for (Index i = 0; i < static_cast<Index>(scene.labels.size()); ++i)
    if (!scene.labels[i].empty()) facts.insert({scene.labels[i], {std::to_string(scene.graph.id(i))}});
  for (const auto& [name, pairs] : scene.relations)
    for (const auto& [x, y] : pairs) facts.insert({name, {std::to_string(x), std::to_string(y)}});
  return facts;
}

RuleOutcome apply_ontology_rules(const FactSet& input, const std::vector<OntologyRule>& rules) {
  for (const OntologyRule& r : rules) r.validate();
  FactSet facts = input;
  RuleOutcome out;
  std::set<Atom> derived;

  while (true) {
    std::map<std::string, std::vector<const Atom*>> by_pred;
    for (const Atom& f : facts) by_pred[f.predicate].push_back(&f);
    std::vector<Atom> fresh;
    for (const OntologyRule& r : rules) {
      std::map<std::string, std::string> binding;
      std::function<void(size_t)> join = [&](size_t k) {
        if (k == r.body.size()) {
          Atom h{r.head.predicate, {binding.at(r.head.args[0])}};
          if (!facts.count(h)) fresh.push_back(std::move(h));
          return;
        }
        const Atom& pat = r.body[k];
        const auto it = by_pred.find(pat.predicate);
        if (it == by_pred.end()) return;
        for (const Atom* f : it->second) {
          if (f->args.size() != pat.args.size()) continue;
          std::vector<std::string> added;
          bool ok = true;
          for (size_t i = 0; i < pat.args.size() && ok; ++i) {
            const auto b = binding.find(pat.args[i]);
            if (b == binding.end()) {
              binding[pat.args[i]] = f->args[i];
              added.push_back(pat.args[i]);
            } else {
              ok = b->second == f->args[i];
            }
          }
          if (ok) join(k + 1);
          for (const std::string& v : added) binding.erase(v);
        }
      };
      join(0);
    }
    if (fresh.empty()) break;
    ++out.rounds;
    for (Atom& a : fresh) {
      derived.insert(a);
      facts.insert(std::move(a));
    }
  }
  out.derived.assign(derived.begin(), derived.end());
  return out;
}

RuleOutcome apply_ontology_rules(const SceneState& scene, const std::vector<OntologyRule>& rules) {
  return apply_ontology_rules(scene_facts(scene), rules);
}

// ---------------------------------------------------------------------------------------------

TrackingReport tracking_report(const std::vector<TrackingBoundary>& boundaries, const TrackingParams& p) {
  if (!(p.lipschitz > 0.0) || !(p.speed > 0.0) || !(p.decay > 0.0) || !(p.horizon >= 0.0))
    throw InvalidArgument("tracking constants must be positive");
  TrackingReport out;
  for (size_t k = 0; k < boundaries.size(); ++k) {
    const TrackingBoundary& b = boundaries[k];
    if (b.transition.cols() != b.before.size() || b.transition.rows() != b.after.size())
      throw InvalidArgument("dimension mismatch at boundary " + std::to_string(k) + ": transition is " +
                            std::to_string(b.transition.rows()) + "x" + std::to_string(b.transition.cols()) +
                            ", states have " + std::to_string(b.before.size()) + " and " +
                            std::to_string(b.after.size()) + " entries");
    const double e = (b.after - b.transition * b.before).norm();
    out.errors.push_back(e);
    out.cumulative += e;
  }
  out.bound = p.lipschitz * p.speed / p.decay * (1.0 - std::exp(-p.decay * p.horizon));
  out.violated = out.cumulative > out.bound;
  return out;
}

}  // namespace fabric
