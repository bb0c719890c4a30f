#include "fabric/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "fabric/parallel.hpp"

namespace fabric {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string flag(bool b) { return b ? "1" : "0"; }

struct Diagrams {
  PersistenceDiagram h0, h1;
};

Diagrams diagrams_of(const WeightedGraph& g, const Filtration& f) {
  return {persistence_diagram(g, f, 0), persistence_diagram(g, f, 1)};
}

double multiscale_drift(const WeightedGraph& ga, const Filtration& fa, const WeightedGraph& gb, const Filtration& fb,
                        const std::vector<double>& scales) {
  double sup = 0.0;
  for (double sigma : scales) {
    const Diagrams a = diagrams_of(ga, smooth_filtration(ga, fa, sigma));
    const Diagrams b = diagrams_of(gb, smooth_filtration(gb, fb, sigma));
    sup = std::max({sup, bottleneck_distance(a.h0, b.h0), bottleneck_distance(a.h1, b.h1)});
  }
  return sup;
}

void append_note(std::string& note, const std::string& what) {
  if (!note.empty()) note += "; ";
  note += what;
}

}  // namespace

// ---------------------------------------------------------------------------------------------

RunReport run_pipeline(const SceneSequence& sequence, const PipelineConfig& cfg) {
  RunReport report;
  if (sequence.frames.empty()) return report;

  std::vector<OntologyRule> rules;
  for (const std::string& r : cfg.rules) rules.push_back(OntologyRule::parse(r));

  const LoopModel loop = ortsf_loop(cfg.control);
  const MarginReport margin = phase_margin(loop);
  std::optional<OrtsfTransform> transform;
  ClosedLoopSimulator sim(loop, cfg.control.ts);
  for (const std::string& w : sim.warnings()) log(LogLevel::Warn, w);
  const int interval_samples = std::max(1, static_cast<int>(std::lround(cfg.control.h / cfg.control.ts)));

  struct Previous {
    double t;
    SceneState scene;
    Filtration f;
    Diagrams dg;
    double command;
  };
  std::optional<Previous> prev;

  for (const SceneState& frame : sequence.frames) {
    StepRecord r;
    r.t = frame.t;
    r.vertices = frame.graph.num_vertices();
    r.edges = frame.graph.num_edges();
    r.phase_margin = margin.has_crossover ? margin.phase_margin_deg : kNaN;
    r.margin_violation = !margin.has_crossover || margin.phase_margin_deg < cfg.phi_safe;
    if (prev) r.delta = frame.t - prev->t;
    try {
      r.ricci_loss = curvature_variance_loss(frame.graph);
      const OnnResult solved = onn_solve(frame, cfg.onn);
      r.iterations = solved.iterations;
      r.converged = solved.converged;
      r.penalty_path = solved.penalty_path;
      r.loss = solved.components.total();
      r.residual = solved.residual;
      r.context_loss = solved.components.context;
      r.loss_violation = !solved.converged || !(r.loss < cfg.loss_eps);
      r.constraint_violation = solved.penalty_path || solved.residual > 1e-8;
      if (solved.penalty_path) append_note(r.note, "inconsistent constraint: exact-penalty path");
      if (!solved.converged) {
        append_note(r.note, "semantic solve did not converge");
        report.steps.push_back(r);
        continue;
      }
      if (!rules.empty()) r.derived_facts = apply_ontology_rules(solved.scene, rules).derived.size();

      const ReasoningTrace trace = build_reasoning_trace(solved, cfg.trace);
      const Filtration f =
          filtration_values(solved.scene.graph, solved.scene.states, cfg.trace.alpha, cfg.trace.beta);
      const Diagrams dg{trace.h0, trace.h1};

      if (prev) {
        r.d_b0 = bottleneck_distance(prev->dg.h0, dg.h0);
        r.d_b1 = bottleneck_distance(prev->dg.h1, dg.h1);
        r.d_ph = cfg.context.alpha0 * r.d_b0 + cfg.context.alpha1 * r.d_b1;
        r.multiscale = multiscale_drift(prev->scene.graph, prev->f, solved.scene.graph, f, cfg.scales);
        try {
          r.context_distance = contextual_distance(prev->scene, solved.scene, cfg.context);
          r.context_violation = !(r.context_distance <= cfg.l_context * cfg.eps_transform);
        } catch (const InvalidArgument& e) {
          r.context_distance = kNaN;
          r.context_violation = true;
          append_note(r.note, std::string("context not comparable: ") + e.what());
        }
      }

      OrtsfTransform::Output out;
      try {
        if (!transform) transform.emplace(cfg.control);
        out = transform->step(trace.residuals(), trace.weights());
      } catch (const InvalidArgument&) {
        // Trace shape changed: restart the history.
        transform.emplace(cfg.control);
        out = transform->step(trace.residuals(), trace.weights());
        append_note(r.note, "trace shape changed, prediction held");
      }
      r.reference = out.reference;
      r.command = out.command;
      r.command_diff = prev ? std::abs(out.command - prev->command) : 0.0;
      double y = 0.0;
      for (int k = 0; k < interval_samples; ++k) y = sim.step(out.reference);
      r.output = y;
      log(LogLevel::Debug, "t=" + format_number(r.t) + ": semantic priors unchanged");

      prev = Previous{frame.t, solved.scene, f, dg, out.command};
    } catch (const Error& e) {
      append_note(r.note, e.what());
      r.loss_violation = true;
    }
    report.steps.push_back(r);
  }
  return report;
}

std::string RunReport::to_csv() const {
  CsvTable t({"t", "delta", "vertices", "edges", "iterations", "converged", "penalty_path", "loss", "residual",
              "context_loss", "ricci_loss", "d_b0", "d_b1", "d_ph", "multiscale", "context_distance", "reference",
              "command", "command_diff", "output", "phase_margin", "derived_facts", "loss_violation",
              "margin_violation", "context_violation", "constraint_violation", "note"});
  for (const StepRecord& r : steps)
    t.add_row({format_number(r.t), format_number(r.delta), std::to_string(r.vertices), std::to_string(r.edges),
               std::to_string(r.iterations), flag(r.converged), flag(r.penalty_path), format_number(r.loss),
               format_number(r.residual), format_number(r.context_loss), format_number(r.ricci_loss),
               format_number(r.d_b0), format_number(r.d_b1), format_number(r.d_ph), format_number(r.multiscale),
               format_number(r.context_distance), format_number(r.reference), format_number(r.command),
               format_number(r.command_diff), format_number(r.output), format_number(r.phase_margin),
               std::to_string(r.derived_facts), flag(r.loss_violation), flag(r.margin_violation),
               flag(r.context_violation), flag(r.constraint_violation), r.note});
  return t.str();
}

// ---------------------------------------------------------------------------------------------

void BoundConstants::validate() const {
  for (double v : {alpha[0], alpha[1]})
    if (!(v >= 0.0)) throw InvalidArgument("alpha weights must be nonnegative");
  if (std::abs(alpha[0] + alpha[1] - 1.0) > 1e-12) throw InvalidArgument("alpha weights must sum to 1");
  for (double v : {c1[0], c1[1], c2[0], c2[1], l_ortsf, c_sem, l_context, l_c})
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("bound constants must be positive and finite");
  if (kappa && !(*kappa > 0.0)) throw InvalidArgument("kappa must be positive");
  if (!(eps_conf > 0.0 && eps_conf < 1.0)) throw InvalidArgument("eps_conf must lie in (0, 1)");
  if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be nonnegative");
}

std::vector<BoundRow> evaluate_unified_bound(const RunReport& run, const BoundConstants& k) {
  k.validate();
  const double noise = inverse_normal_cdf(1.0 - k.eps_conf) * std::sqrt(2.0 * k.l_c * k.l_c * k.sigma * k.sigma);
  std::vector<BoundRow> rows;
  for (const StepRecord& r : run.steps) {
    BoundRow b;
    b.t = r.t;
    b.lhs_ph = k.alpha[0] * r.d_b0 + k.alpha[1] * r.d_b1;
    b.lhs_multiscale = r.multiscale;
    b.lhs_command = r.command_diff;
    b.lhs = b.lhs_ph + b.lhs_multiscale + b.lhs_command;
    const double kappa = k.kappa ? *k.kappa : std::sqrt(static_cast<double>(r.edges));
    const double root = std::sqrt(std::max(0.0, r.ricci_loss));
    for (int d = 0; d < 2; ++d) b.rhs_topology += k.alpha[d] * (k.c1[d] + k.c2[d]) * kappa * root;
    b.rhs_control = k.l_ortsf * k.c_sem * std::sqrt(std::max(0.0, r.context_loss));
    b.rhs_context = k.l_context * std::abs(r.delta);
    b.rhs_noise = noise;
    b.rhs = b.rhs_topology + b.rhs_control + b.rhs_context + b.rhs_noise;
    b.satisfied = b.lhs <= b.rhs + 1e-12;
    rows.push_back(b);
  }
  return rows;
}

std::string bound_csv(const std::vector<BoundRow>& rows) {
  CsvTable t({"t", "lhs_ph", "lhs_multiscale", "lhs_command", "lhs", "rhs_topology", "rhs_control", "rhs_context",
              "rhs_noise", "rhs", "satisfied"});
  for (const BoundRow& b : rows)
    t.add_row({format_number(b.t), format_number(b.lhs_ph), format_number(b.lhs_multiscale),
               format_number(b.lhs_command), format_number(b.lhs), format_number(b.rhs_topology),
               format_number(b.rhs_control), format_number(b.rhs_context), format_number(b.rhs_noise),
               format_number(b.rhs), flag(b.satisfied)});
  return t.str();
}

// ---------------------------------------------------------------------------------------------

WeightedGraph random_connected_graph(Rng& rng, int n, double p) {
  if (n < 1) throw InvalidArgument("need at least one vertex");
  std::vector<VertexId> ids(static_cast<size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<EdgeSpec> edges;
  std::vector<std::vector<bool>> used(static_cast<size_t>(n), std::vector<bool>(static_cast<size_t>(n), false));
  for (int v = 1; v < n; ++v) {
    const int u = static_cast<int>(rng.uniform_int(0, v - 1));
    edges.push_back({u, v, 1.0});
    used[u][v] = used[v][u] = true;
  }
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (!used[u][v] && rng.uniform() < p) edges.push_back({u, v, 1.0});
  return WeightedGraph(ids, edges);
}

PhDecayResult run_ph_decay(const PhDecayConfig& cfg, std::uint64_t seed) {
  if (cfg.iterations < 1 || cfg.lag < 1 || cfg.burn_in < 0 || cfg.final_window < 1)
    throw InvalidArgument("ph-decay needs positive iterations, lag and window");
  if (!(cfg.eta0 > 0.0) || !(cfg.noise >= 0.0) || !(cfg.zero_floor >= 0.0))
    throw InvalidArgument("ph-decay needs eta0 > 0, noise >= 0 and zero_floor >= 0");

  Rng rng(seed, 0);
  SceneState scene;
  scene.graph = random_connected_graph(rng, cfg.vertices, cfg.edge_prob);
  const Index n = scene.graph.num_vertices(), m = scene.graph.num_edges();
  scene.states = rng.normal_matrix(n, cfg.dim);
  // Pin the total edge length at its observed value.
  const MatrixXd C = MatrixXd::Ones(1, m);
  scene.constraint = AffineConstraint(C, C * edge_cochain(scene.graph, scene.states));

  OnnOptions o;
  o.weights = cfg.weights;
  OnnProblem prob(scene, o);
  VectorXd s = prob.project(prob.observations());
  if (cfg.start_converged) {
    OnnOptions tight = o;
    tight.loss_tol = 0.0;
    tight.grad_tol = 1e-12;
    tight.k_max = 100000;
    s = prob.stack(onn_solve(scene, tight).scene.states);
  }

  auto diagrams = [&](const VectorXd& v) {
    return diagrams_of(scene.graph,
                       filtration_values(scene.graph, prob.unstack(v), cfg.filtration.alpha, cfg.filtration.beta));
  };
  std::vector<Diagrams> history{diagrams(s)};

  Rng noise(seed, 1);
  for (int k = 0; k < cfg.iterations; ++k) {
    const Face face = prob.face(s);
    const Face* on_face = face.empty() ? nullptr : &face;
    VectorXd g = prob.tangent_gradient(s, on_face);
    if (cfg.noise > 0.0) g += cfg.noise * noise.normal_vector(g.size());
    double eta = cfg.eta0 / std::sqrt(static_cast<double>(k + 1));
    for (int tries = 0;; ++tries) {
      try {
        s = prob.project(s - eta * g, on_face);
        break;
      } catch (const NumericError&) {
        if (tries == 30) throw;
        eta *= 0.5;
      }
    }
    history.push_back(diagrams(s));
  }

  PhDecayResult res;
  for (size_t k = 0; k + static_cast<size_t>(cfg.lag) < history.size(); ++k) {
    const Diagrams& a = history[k];
    const Diagrams& b = history[k + static_cast<size_t>(cfg.lag)];
    res.k.push_back(static_cast<int>(k));
    res.distance.push_back(cfg.alpha0 * bottleneck_distance(a.h0, b.h0) +
                           cfg.alpha1 * bottleneck_distance(a.h1, b.h1));
  }
  const size_t w = std::min(res.distance.size(), static_cast<size_t>(cfg.final_window));
  res.final_distance =
      std::accumulate(res.distance.end() - static_cast<std::ptrdiff_t>(w), res.distance.end(), 0.0) /
      static_cast<double>(std::max<size_t>(w, 1));

  std::vector<double> lx, ly;
  for (size_t i = 0; i < res.k.size(); ++i)
    if (res.k[i] >= std::max(cfg.burn_in, 1) && res.distance[i] > cfg.zero_floor) {
      lx.push_back(std::log(static_cast<double>(res.k[i])));
      ly.push_back(std::log(res.distance[i]));
    }
  res.fit_points = static_cast<int>(lx.size());
  if (lx.size() < 50) {
    res.flag = res.final_distance <= cfg.zero_floor ? "distances vanish; slope undefined"
                                           : "fewer than 50 positive points after burn-in; fit refused";
    return res;
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(lx.size());
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(ly.size());
  double sxy = 0.0, sxx = 0.0;
  for (size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  res.slope = sxy / sxx;
  res.intercept = my - *res.slope * mx;
  return res;
}

std::string PhDecayResult::to_csv() const {
  CsvTable t({"k", "d_ph"});
  for (size_t i = 0; i < k.size(); ++i) t.add_row({std::to_string(k[i]), format_number(distance[i])});
  return t.str();
}

std::string PhDecayResult::fit_csv() const {
  CsvTable t({"slope", "intercept", "fit_points", "final_distance", "flag"});
  t.add_row({slope ? format_number(*slope) : "nan", slope ? format_number(intercept) : "nan",
             std::to_string(fit_points), format_number(final_distance), flag});
  return t.str();
}

// ---------------------------------------------------------------------------------------------

DelaySweepResult run_delay_sweep(const DelaySweepConfig& cfg) {
  DelaySweepResult res;
  res.delays = cfg.delays;
  if (res.delays.empty())
    for (int i = 0; i <= 50; ++i) res.delays.push_back(0.01 * i);
  res.methods = cfg.methods;
  for (const std::string& m : res.methods)
    if (m != "ortsf" && m != "smith" && m != "direct") throw InvalidArgument("unknown sweep method '" + m + "'");
  for (double d : res.delays)
    if (!(d >= 0.0) || !std::isfinite(d)) throw InvalidArgument("sweep delays must be nonnegative");

  const RationalTF base = base_compensator(cfg.control);
  const size_t cols = res.delays.size();
  res.margin = MatrixXd::Constant(static_cast<Index>(res.methods.size()), static_cast<Index>(cols), kNaN);
  parallel_for(res.methods.size() * cols, [&](size_t cell) {
    const size_t i = cell / cols, j = cell % cols;
    OrtsfConfig c = cfg.control;
    c.delay = res.delays[j];
    LoopModel loop{c.plant, Compensator{base, std::nullopt}, c.delay};
    if (res.methods[i] == "ortsf") {
      loop = ortsf_loop(c);
    } else if (res.methods[i] == "smith") {
      loop.compensator.smith = SmithModel{RationalTF::gain(c.model_gain_scale) * c.plant, c.delay * c.model_delay_scale};
    }
    const MarginReport mr = phase_margin(loop);
    res.margin(static_cast<Index>(i), static_cast<Index>(j)) = mr.has_crossover ? mr.phase_margin_deg : kNaN;
  });
  for (size_t i = 0; i < res.methods.size(); ++i) {
    std::optional<double> first;
    for (size_t j = 0; j < cols && !first; ++j)
      if (!(res.margin(static_cast<Index>(i), static_cast<Index>(j)) >= cfg.phi_safe)) first = res.delays[j];
    res.first_unsafe.push_back(first);
  }
  return res;
}

std::string DelaySweepResult::to_csv() const {
  std::vector<std::string> header{"delay_s"};
  header.insert(header.end(), methods.begin(), methods.end());
  CsvTable t(header);
  for (size_t j = 0; j < delays.size(); ++j) {
    std::vector<std::string> row{format_number(delays[j])};
    for (size_t i = 0; i < methods.size(); ++i)
      row.push_back(format_number(margin(static_cast<Index>(i), static_cast<Index>(j))));
    t.add_row(row);
  }
  return t.str();
}

std::string DelaySweepResult::first_unsafe_csv() const {
  CsvTable t({"method", "first_unsafe_delay_s"});
  for (size_t i = 0; i < methods.size(); ++i)
    t.add_row({methods[i], first_unsafe[i] ? format_number(*first_unsafe[i]) : "none"});
  return t.str();
}

// ---------------------------------------------------------------------------------------------

namespace {

std::vector<EdgeSpec> dumbbell_edges() {
  std::vector<EdgeSpec> edges;
  for (int base : {0, 4})
    for (int u = base; u < base + 4; ++u)
      for (int v = u + 1; v < base + 4; ++v) edges.push_back({u, v, 1.0});
  edges.push_back({3, 4, 1.0});
  edges.push_back({2, 5, 1.0});
  return edges;
}

}  // namespace

WeightedGraph dumbbell_graph() { return WeightedGraph({0, 1, 2, 3, 4, 5, 6, 7}, dumbbell_edges()); }

SurgeryDemoResult run_surgery_demo(const SurgeryDemoConfig& cfg, std::uint64_t seed) {
  if (!(cfg.neck_value > 1.0 + 2.0 * cfg.surgery.eps_neck))
    throw InvalidArgument("neck value must exceed the blob range");
  Rng rng(seed, 0);
  SurgeryDemoResult res;
  res.input = dumbbell_graph();
  const auto& emap = res.input.input_edge_map();
  Filtration f;
  f.edge_values = VectorXd::Zero(res.input.num_edges());
  const size_t blob_edges = emap.size() - 2;
  const double top = cfg.neck_value - 2.0 * cfg.surgery.eps_neck;
  for (size_t k = 0; k < blob_edges; ++k) f.edge_values(emap[k].first) = rng.uniform(1.0, top);
  f.edge_values(emap[blob_edges].first) = cfg.neck_value;
  f.edge_values(emap[blob_edges + 1].first) = cfg.neck_value - 0.1 * cfg.surgery.eps_neck;
  res.result = neck_surgery(res.input, f, cfg.surgery);
  res.connected = res.result.graph.connected();
  return res;
}

std::string SurgeryDemoResult::edges_csv() const {
  CsvTable t({"u", "v", "w", "action"});
  for (const EdgeSpec& e : result.log.removed_edges)
    t.add_row({std::to_string(e.u), std::to_string(e.v), format_number(e.w), "removed"});
  for (const EdgeSpec& e : result.log.restored_edges)
    t.add_row({std::to_string(e.u), std::to_string(e.v), format_number(e.w), "restored"});
  return t.str();
}

std::string SurgeryDemoResult::summary_csv() const {
  CsvTable t({"stage", "edges", "connected", "ricci_mean", "ricci_std", "variance_loss", "algebraic_connectivity",
              "cycles_examined", "cycles_validated", "removals_rejected"});
  const auto& L = result.log;
  t.add_row({"before", std::to_string(input.num_edges()), flag(input.connected()), format_number(L.before.mean),
             format_number(L.before.stddev), format_number(L.before.variance_loss),
             format_number(L.before.algebraic_connectivity), "", "", ""});
  t.add_row({"after", std::to_string(result.graph.num_edges()), flag(connected), format_number(L.after.mean),
             format_number(L.after.stddev), format_number(L.after.variance_loss),
             format_number(L.after.algebraic_connectivity), std::to_string(L.cycles_examined),
             std::to_string(L.cycles_validated), std::to_string(L.removals_rejected)});
  return t.str();
}

// ---------------------------------------------------------------------------------------------

std::vector<TailRow> run_ph_noise_tail(const TailConfig& cfg, std::uint64_t seed) {
  if (!(cfg.sigma > 0.0) || cfg.trials < 1) throw InvalidArgument("tail experiment needs sigma > 0 and trials > 0");
  Rng rng(seed, 0);
  const WeightedGraph g = random_connected_graph(rng, cfg.vertices, cfg.edge_prob);
  Filtration base;
  base.edge_values = VectorXd(g.num_edges());
  for (Index e = 0; e < g.num_edges(); ++e) base.edge_values(e) = rng.uniform(0.0, 3.0);
  const Diagrams d0 = diagrams_of(g, base);

  // One generator stream per trial.
  std::vector<double> dist(static_cast<size_t>(cfg.trials));
  parallel_for(dist.size(), [&](size_t t) {
    Rng noise(seed, 1 + t);
    Filtration f = base;
    f.edge_values += cfg.sigma * noise.normal_vector(g.num_edges());
    const Diagrams d = diagrams_of(g, f);
    dist[t] = 0.5 * bottleneck_distance(d0.h0, d.h0) + 0.5 * bottleneck_distance(d0.h1, d.h1);
  });
  std::vector<TailRow> rows;
  for (double eps : cfg.eps) {
    TailRow r;
    r.eps = eps;
    const double hits = static_cast<double>(std::count_if(dist.begin(), dist.end(), [&](double v) { return v > eps; }));
    r.frequency = hits / cfg.trials;
    r.bound = 2.0 * std::exp(-eps * eps / (2.0 * cfg.sigma * cfg.sigma));
    r.std_error = std::sqrt(r.frequency * (1.0 - r.frequency) / cfg.trials);
    r.within = r.frequency <= r.bound + 3.0 * r.std_error;
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------------------------

namespace {

using nlohmann::json;

/// Typed access to a JSON config object; unknown keys are errors.
class Section {
 public:
  Section(const json* j, std::string ptr) : j_(j), ptr_(std::move(ptr)) {
    if (j_ && !j_->is_object()) throw InputError(ptr_, "expected an object");
  }

  bool has(const char* key) const { return j_ && j_->contains(key); }
  const std::string& pointer() const { return ptr_; }
  std::string at(const char* key) const { return ptr_ + "/" + key; }

  void number(const char* key, double& out) {
    if (!take(key)) return;
    const json& v = (*j_)[key];
    if (!v.is_number() || !std::isfinite(v.get<double>())) throw InputError(at(key), "expected a finite number");
    out = v.get<double>();
  }
  void integer(const char* key, int& out) {
    if (!take(key)) return;
    const json& v = (*j_)[key];
    if (!v.is_number_integer()) throw InputError(at(key), "expected an integer");
    out = v.get<int>();
  }
  void index(const char* key, Index& out) {
    int v = static_cast<int>(out);
    integer(key, v);
    out = v;
  }
  void boolean(const char* key, bool& out) {
    if (!take(key)) return;
    if (!(*j_)[key].is_boolean()) throw InputError(at(key), "expected true or false");
    out = (*j_)[key].get<bool>();
  }
  void text(const char* key, std::string& out) {
    if (!take(key)) return;
    if (!(*j_)[key].is_string()) throw InputError(at(key), "expected a string");
    out = (*j_)[key].get<std::string>();
  }
  void numbers(const char* key, std::vector<double>& out) {
    if (!take(key)) return;
    const json& v = (*j_)[key];
    if (!v.is_array()) throw InputError(at(key), "expected an array of numbers");
    out.clear();
    for (size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw InputError(at(key) + "/" + std::to_string(i), "expected a number");
      out.push_back(v[i].get<double>());
    }
  }
  void strings(const char* key, std::vector<std::string>& out) {
    if (!take(key)) return;
    const json& v = (*j_)[key];
    if (!v.is_array()) throw InputError(at(key), "expected an array of strings");
    out.clear();
    for (size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string()) throw InputError(at(key) + "/" + std::to_string(i), "expected a string");
      out.push_back(v[i].get<std::string>());
    }
  }
  Section child(const char* key) {
    if (!take(key)) return Section(nullptr, at(key));
    return Section(&(*j_)[key], at(key));
  }
  const json* raw(const char* key) {
    if (!take(key)) return nullptr;
    return &(*j_)[key];
  }

  /// Throws on keys never read.
  void finish() const {
    if (!j_) return;
    for (const auto& [k, v] : j_->items())
      if (!seen_.count(k)) throw InputError(ptr_ + "/" + k, "unknown key");
  }

 private:
  bool take(const char* key) {
    if (!has(key)) return false;
    seen_.insert(key);
    return true;
  }

  const json* j_;
  std::string ptr_;
  std::set<std::string> seen_;
};

void read_onn(Section s, OnnOptions& o) {
  s.number("eta0", o.eta0);
  s.number("loss_tol", o.loss_tol);
  s.number("grad_tol", o.grad_tol);
  s.integer("k_max", o.k_max);
  s.number("penalty_rho", o.penalty_rho);
  Section w = s.child("weights");
  w.number("task", o.weights.task);
  w.number("consensus", o.weights.consensus);
  w.number("connection", o.weights.connection);
  w.number("context", o.weights.context);
  w.finish();
  s.finish();
}

void read_control(Section s, OrtsfConfig& c) {
  s.number("f_c", c.f_c);
  s.number("phi_comp", c.phi_comp);
  s.number("k_c", c.k_c);
  s.number("delay", c.delay);
  s.number("delay_threshold", c.delay_threshold);
  s.number("max_delay_lead", c.max_delay_lead_deg);
  s.number("ts", c.ts);
  s.number("h", c.h);
  s.number("model_gain_scale", c.model_gain_scale);
  s.number("model_delay_scale", c.model_delay_scale);
  Section p = s.child("plant");
  if (s.has("plant")) {
    std::vector<double> num, den;
    p.numbers("num", num);
    p.numbers("den", den);
    p.finish();
    if (num.empty() || den.empty()) throw InputError(s.at("plant"), "plant needs num and den coefficient lists");
    try {
      c.plant = RationalTF(Eigen::Map<VectorXd>(num.data(), static_cast<Index>(num.size())),
                           Eigen::Map<VectorXd>(den.data(), static_cast<Index>(den.size())));
    } catch (const InvalidArgument& e) {
      throw InputError(s.at("plant"), e.what());
    }
  }
  s.finish();
}

void read_pair(Section& s, const char* key, std::array<double, 2>& out) {
  std::vector<double> v;
  s.numbers(key, v);
  if (!s.has(key)) return;
  if (v.size() != 2) throw InputError(s.at(key), "expected two entries (dimensions 0 and 1)");
  out = {v[0], v[1]};
}

BoundConstants read_constants(Section s) {
  static const char* required[] = {"alpha", "C1", "C2", "L_ortsf", "L_context", "eps_conf", "sigma"};
  std::string missing;
  for (const char* k : required)
    if (!s.has(k)) missing += std::string(missing.empty() ? "" : ", ") + k;
  if (!missing.empty()) throw InputError(s.pointer(), "missing constants: " + missing);
  BoundConstants k;
  read_pair(s, "alpha", k.alpha);
  read_pair(s, "C1", k.c1);
  read_pair(s, "C2", k.c2);
  s.number("L_ortsf", k.l_ortsf);
  s.number("L_context", k.l_context);
  s.number("eps_conf", k.eps_conf);
  s.number("sigma", k.sigma);
  s.number("C_sem", k.c_sem);
  s.number("L_c", k.l_c);
  if (s.has("kappa")) {
    double v = 0.0;
    s.number("kappa", v);
    k.kappa = v;
  }
  s.finish();
  try {
    k.validate();
  } catch (const InvalidArgument& e) {
    throw InputError(s.pointer(), e.what());
  }
  return k;
}

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::Pipeline: return "run";
    case Mode::PhDecay: return "ph-decay";
    case Mode::DelaySweep: return "delay-sweep";
    case Mode::Surgery: return "surgery";
    case Mode::Bound: return "bound";
  }
  return "";
}

std::string plot_json(const std::string& file, const std::string& x, const std::vector<std::string>& y,
                      const std::string& scale, const std::string& title) {
  json j;
  j["file"] = file;
  j["x"] = x;
  j["y"] = y;
  j["scale"] = scale;
  j["title"] = title;
  return j.dump(2) + "\n";
}

}  // namespace

Mode parse_mode(const std::string& name) {
  if (name == "run" || name == "pipeline") return Mode::Pipeline;
  if (name == "ph-decay") return Mode::PhDecay;
  if (name == "delay-sweep") return Mode::DelaySweep;
  if (name == "surgery" || name == "surgery-demo") return Mode::Surgery;
  if (name == "bound" || name == "unified-bound") return Mode::Bound;
  throw InputError("/mode", "unknown mode '" + name + "'");
}

ExperimentConfig parse_experiment_config(const std::string& text, Mode mode, const std::string& base_dir) {
  json root = json::object();
  if (!text.empty()) {
    try {
      root = json::parse(text);
    } catch (const json::parse_error& e) {
      throw InputError("", std::string("malformed config: ") + e.what());
    }
  }
  ExperimentConfig cfg;
  cfg.mode = mode;
  Section s(&root, "");
  if (s.has("mode")) {
    std::string m;
    s.text("mode", m);
    if (parse_mode(m) != mode) throw InputError("/mode", "config is for '" + m + "', not '" + mode_name(mode) + "'");
  }
  s.text("input", cfg.input);
  if (!cfg.input.empty() && std::filesystem::path(cfg.input).is_relative() && !base_dir.empty())
    cfg.input = (std::filesystem::path(base_dir) / cfg.input).lexically_normal().string();
  if (s.has("seed")) {
    int seed = 0;
    s.integer("seed", seed);
    if (seed < 0) throw InputError("/seed", "seed must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(seed);
  }

  PipelineConfig& p = cfg.pipeline;
  read_onn(s.child("onn"), p.onn);
  {
    Section t = s.child("trace");
    t.number("alpha", p.trace.alpha);
    t.number("beta", p.trace.beta);
    t.finish();
  }
  {
    Section c = s.child("context");
    c.number("alpha0", p.context.alpha0);
    c.number("alpha1", p.context.alpha1);
    c.finish();
  }
  p.context.filtration = p.trace;
  read_control(s.child("control"), p.control);
  {
    Section c = s.child("checks");
    c.number("loss_eps", p.loss_eps);
    c.number("phi_safe", p.phi_safe);
    c.number("L_context", p.l_context);
    c.number("eps_transform", p.eps_transform);
    c.finish();
  }
  s.strings("rules", p.rules);
  s.numbers("scales", p.scales);
  for (size_t i = 0; i < p.rules.size(); ++i) {
    try {
      OntologyRule::parse(p.rules[i]);
    } catch (const InvalidArgument& e) {
      throw InputError("/rules/" + std::to_string(i), e.what());
    }
  }

  {
    Section d = s.child("ph_decay");
    PhDecayConfig& c = cfg.ph_decay;
    d.integer("vertices", c.vertices);
    d.index("dim", c.dim);
    d.number("edge_prob", c.edge_prob);
    d.integer("iterations", c.iterations);
    d.integer("lag", c.lag);
    d.integer("burn_in", c.burn_in);
    d.integer("final_window", c.final_window);
    d.number("eta0", c.eta0);
    d.number("noise", c.noise);
    d.boolean("start_converged", c.start_converged);
    d.number("zero_floor", c.zero_floor);
    d.finish();
    c.weights = p.onn.weights;
    c.filtration = p.trace;
    c.alpha0 = p.context.alpha0;
    c.alpha1 = p.context.alpha1;
  }
  {
    Section d = s.child("delay_sweep");
    d.numbers("delays", cfg.sweep.delays);
    d.strings("methods", cfg.sweep.methods);
    d.finish();
    cfg.sweep.control = p.control;
    cfg.sweep.phi_safe = p.phi_safe;
  }
  {
    Section d = s.child("surgery");
    d.number("eps_neck", cfg.surgery.surgery.eps_neck);
    d.number("z", cfg.surgery.surgery.z);
    d.number("neck_value", cfg.surgery.neck_value);
    d.finish();
  }
  if (s.has("constants")) {
    cfg.constants = read_constants(s.child("constants"));
  } else if (mode == Mode::Bound) {
    throw InputError("/constants",
                     "missing constants: alpha, C1, C2, L_ortsf, L_context, eps_conf, sigma");
  }
  s.finish();

  if ((mode == Mode::Pipeline || mode == Mode::Bound) && cfg.input.empty())
    throw InputError("/input", "this mode needs an input scene sequence");
  return cfg;
}

std::vector<std::string> run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    const std::string path = (fs::path(cfg.output_dir) / name).string();
    write_text_file(path, content);
    written.push_back(path);
    log(LogLevel::Info, "wrote " + path);
  };

  switch (cfg.mode) {
    case Mode::Pipeline:
    case Mode::Bound: {
      const SceneSequence seq = load_scene_sequence(cfg.input);
      const RunReport report = run_pipeline(seq, cfg.pipeline);
      emit("report.csv", report.to_csv());
      emit("report_plot.json", plot_json("report.csv", "t", {"loss", "d_ph", "context_distance", "command"},
                                         "linear", "integrated loop per step"));
      size_t flagged = 0;
      for (const StepRecord& r : report.steps)
        flagged += r.loss_violation || r.margin_violation || r.context_violation || r.constraint_violation;
      log(flagged ? LogLevel::Warn : LogLevel::Info,
          std::to_string(flagged) + " of " + std::to_string(report.steps.size()) + " steps raised a violation flag");
      if (cfg.mode == Mode::Bound) {
        const auto rows = evaluate_unified_bound(report, *cfg.constants);
        emit("bound.csv", bound_csv(rows));
        emit("bound_plot.json", plot_json("bound.csv", "t", {"lhs", "rhs"}, "linear", "unified bound per step"));
      }
      break;
    }
    case Mode::PhDecay: {
      const PhDecayResult r = run_ph_decay(cfg.ph_decay, cfg.seed);
      emit("ph_decay.csv", r.to_csv());
      emit("ph_decay_fit.csv", r.fit_csv());
      emit("ph_decay_plot.json", plot_json("ph_decay.csv", "k", {"d_ph"}, "loglog", "PH distance decay"));
      if (!r.flag.empty()) log(LogLevel::Warn, r.flag);
      break;
    }
    case Mode::DelaySweep: {
      const DelaySweepResult r = run_delay_sweep(cfg.sweep);
      emit("delay_sweep.csv", r.to_csv());
      emit("delay_sweep_first_unsafe.csv", r.first_unsafe_csv());
      emit("delay_sweep_plot.json", plot_json("delay_sweep.csv", "delay_s", r.methods, "linear",
                                              "phase margin (deg) versus delay"));
      break;
    }
    case Mode::Surgery: {
      const SurgeryDemoResult r = run_surgery_demo(cfg.surgery, cfg.seed);
      emit("surgery_edges.csv", r.edges_csv());
      emit("surgery_summary.csv", r.summary_csv());
      break;
    }
  }
  return written;
}

}  // namespace fabric
