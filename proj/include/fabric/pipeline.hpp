#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fabric/control.hpp"
#include "fabric/io.hpp"
#include "fabric/random.hpp"
#include "fabric/semantics.hpp"
#include "fabric/topology.hpp"

namespace fabric {

struct PipelineConfig {
  OnnOptions onn;
  TraceOptions trace;
  ContextOptions context;
  OrtsfConfig control;
  /// Convergence check: consensus + connection + context loss of the solved scene.
  double loss_eps = 1.0;
  double phi_safe = DefaultLoop::kPhaseSafeDeg;
  double l_context = 1.0;
  double eps_transform = 1.0;
  std::vector<std::string> rules;
  /// Smoothing scales for the multi-scale drift column.
  std::vector<double> scales{0.0, 0.5, 1.0};
};

struct StepRecord {
  double t = 0.0;
  double delta = 0.0;  // time since the previous step (0 on the first)
  Index vertices = 0;
  Index edges = 0;
  int iterations = 0;
  bool converged = false;
  bool penalty_path = false;
  double loss = 0.0;          // consensus + connection + context
  double residual = 0.0;      // ||C x - tau||
  double context_loss = 0.0;  // ||C x - tau||^2
  double ricci_loss = 0.0;    // curvature variance
  double d_b0 = 0.0;          // bottleneck to the previous step, H0
  double d_b1 = 0.0;          // and H1
  double d_ph = 0.0;          // alpha0 d_b0 + alpha1 d_b1
  double multiscale = 0.0;    // sup over scales of the bottleneck drift
  double context_distance = 0.0;
  double reference = 0.0;
  double command = 0.0;
  double command_diff = 0.0;
  double output = 0.0;
  double phase_margin = 0.0;
  size_t derived_facts = 0;
  bool loss_violation = false;
  bool margin_violation = false;
  bool context_violation = false;
  bool constraint_violation = false;
  std::string note;
};

struct RunReport {
  std::vector<StepRecord> steps;
  std::string to_csv() const;
};

/// One pass of the integrated loop per frame. Per-step failures are recorded in `note` and the
/// run continues.
RunReport run_pipeline(const SceneSequence& sequence, const PipelineConfig& cfg);

struct BoundConstants {
  std::array<double, 2> alpha{0.5, 0.5};
  std::array<double, 2> c1{1.0, 1.0};
  std::array<double, 2> c2{1.0, 1.0};
  std::optional<double> kappa;  // sqrt(|E|) per step when unset
  double l_ortsf = 1.0;
  double c_sem = 1.0;
  double l_context = 1.0;
  double eps_conf = 0.05;
  double sigma = 0.0;
  double l_c = 1.0;
  void validate() const;
};

struct BoundRow {
  double t = 0.0;
  double lhs_ph = 0.0;
  double lhs_multiscale = 0.0;
  double lhs_command = 0.0;
  double lhs = 0.0;
  double rhs_topology = 0.0;
  double rhs_control = 0.0;
  double rhs_context = 0.0;
  double rhs_noise = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
};

std::vector<BoundRow> evaluate_unified_bound(const RunReport& run, const BoundConstants& k);
std::string bound_csv(const std::vector<BoundRow>& rows);

/// Random connected graph: random tree plus each remaining pair with probability p.
WeightedGraph random_connected_graph(Rng& rng, int n, double p);

struct PhDecayConfig {
  int vertices = 8;
  Index dim = 3;
  double edge_prob = 0.3;
  int iterations = 2000;
  int lag = 1;
  int burn_in = 100;
  int final_window = 50;
  double eta0 = 0.05;
  double noise = 1.0;  // std of the stochastic gradient perturbation
  bool start_converged = false;
  double zero_floor = 1e-8;  // distances at or below this are solver noise, left out of the fit
  OnnWeights weights;
  TraceOptions filtration;
  double alpha0 = 0.5;
  double alpha1 = 0.5;
};

struct PhDecayResult {
  std::vector<int> k;
  std::vector<double> distance;
  double final_distance = 0.0;
  std::optional<double> slope;
  double intercept = 0.0;
  int fit_points = 0;
  std::string flag;  // why the fit is missing, empty when present
  std::string to_csv() const;
  std::string fit_csv() const;
};

/// Stochastic projected-gradient run with step eta0 / sqrt(k + 1), recording d_PH(G(k), G(k + lag)).
PhDecayResult run_ph_decay(const PhDecayConfig& cfg, std::uint64_t seed);

struct DelaySweepConfig {
  std::vector<double> delays;  // seconds; default 0..0.5 in 10 ms steps
  std::vector<std::string> methods{"ortsf", "smith", "direct"};
  OrtsfConfig control;
  double phi_safe = DefaultLoop::kPhaseSafeDeg;
};

struct DelaySweepResult {
  std::vector<double> delays;
  std::vector<std::string> methods;
  MatrixXd margin;  // method x delay, degrees (nan without crossover)
  std::vector<std::optional<double>> first_unsafe;
  std::string to_csv() const;
  std::string first_unsafe_csv() const;
};

DelaySweepResult run_delay_sweep(const DelaySweepConfig& cfg);

struct SurgeryDemoConfig {
  SurgeryOptions surgery;
  double neck_value = 10.0;
};

struct SurgeryDemoResult {
  WeightedGraph input;
  SurgeryResult result;
  bool connected = false;
  std::string edges_csv() const;
  std::string summary_csv() const;
};

/// Two K4 blobs joined by a two-edge neck; blob filtration values drawn from the seed.
SurgeryDemoResult run_surgery_demo(const SurgeryDemoConfig& cfg, std::uint64_t seed);
WeightedGraph dumbbell_graph();

struct TailConfig {
  double sigma = 0.5;
  int trials = 2000;
  std::vector<double> eps{0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0};
  int vertices = 5;
  double edge_prob = 0.3;
};

struct TailRow {
  double eps = 0.0;
  double frequency = 0.0;
  double bound = 0.0;
  double std_error = 0.0;
  bool within = false;
};

/// Monte-Carlo frequency of d_PH > eps under Gaussian edge noise, against 2 exp(-eps^2 / (2 sigma^2)).
std::vector<TailRow> run_ph_noise_tail(const TailConfig& cfg, std::uint64_t seed);

enum class Mode { Pipeline, PhDecay, DelaySweep, Surgery, Bound };

struct ExperimentConfig {
  Mode mode = Mode::Pipeline;
  std::string input;
  std::string output_dir = ".";
  std::uint64_t seed = 0;
  PipelineConfig pipeline;
  PhDecayConfig ph_decay;
  DelaySweepConfig sweep;
  SurgeryDemoConfig surgery;
  std::optional<BoundConstants> constants;
};

Mode parse_mode(const std::string& name);

/// Reads the JSON config for `mode`; relative input paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(const std::string& text, Mode mode, const std::string& base_dir);

/// Runs the experiment and writes its CSV and plot-description files; returns the paths written.
std::vector<std::string> run_experiment(const ExperimentConfig& cfg);

}  // namespace fabric
