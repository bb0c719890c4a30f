#pragma once

#include <complex>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fabric/graph.hpp"

namespace fabric {

using Complex = std::complex<double>;

/// Rational transfer function; coefficients in ascending powers of s.
struct RationalTF {
  VectorXd num;
  VectorXd den;

  RationalTF() = default;
  RationalTF(VectorXd num, VectorXd den);
  static RationalTF gain(double k);

  Index num_degree() const;
  Index den_degree() const;
  bool proper() const { return num_degree() <= den_degree(); }
  Complex evaluate(Complex s) const;
  std::vector<Complex> zeros() const;
  std::vector<Complex> poles() const;
  /// Continuous phase of tf(j w) in radians, obtained factor by factor from the roots.
  double phase(double w) const;
};

RationalTF operator*(const RationalTF& a, const RationalTF& b);

/// Roots of a polynomial with ascending coefficients (trailing zeros ignored).
std::vector<Complex> polynomial_roots(const VectorXd& coeffs);

/// Classical Smith predictor around C: C / (1 + C Ghat (1 - e^{-s dhat})).
struct SmithModel {
  RationalTF model;
  double model_delay = 0.0;
};

struct Compensator {
  RationalTF tf;
  std::optional<SmithModel> smith;

  Complex evaluate(double w) const;
};

struct LoopModel {
  RationalTF plant;
  Compensator compensator;
  double delay = 0.0;
};

/// tf(j w); a pole exactly at j w is sidestepped by evaluating at w (1 + 1e-9).
Complex frequency_response(const RationalTF& tf, double w);
Complex frequency_response(const LoopModel& loop, double w);

struct MarginReport {
  bool has_crossover = false;
  double crossover_hz = 0.0;
  double crossover_rad = 0.0;
  double phase_margin_deg = 0.0;
  double gain_margin = kGainMarginNone;  // ratio; +inf when the phase never reaches -180
  double delay_margin = 0.0;             // seconds

  static constexpr double kGainMarginNone = std::numeric_limits<double>::infinity();
};

struct FrequencyGrid {
  double w_min = 1e-4;
  double w_max = 1e4;
  int points_per_decade = 400;
};

MarginReport phase_margin(const LoopModel& loop, const FrequencyGrid& grid = {});

/// Continuous phase (degrees) of the loop at w, delay included.
double loop_phase_deg(const LoopModel& loop, double w);

double hinf_norm(const RationalTF& tf, const FrequencyGrid& grid = {});

/// ln(gamma) / (K_c ||G||_inf).
double delay_margin_bound(double gamma, double k_c, double g_norm);

/// K_c (1 + T s) / (1 + alpha T s), alpha = (1 - sin phi)/(1 + sin phi), T = 1/(2 pi f_c sqrt(alpha)).
RationalTF design_lead_lag(double f_c, double phi_comp_deg, double k_c);

/// Gain that puts |C G| = 1 at f_c for C = design_lead_lag(f_c, phi, 1).
double unity_crossover_gain(const RationalTF& plant, double f_c, double phi_comp_deg);

/// Lead of `phi_deg` at f_c normalized to unit gain there; identity for phi_deg == 0.
RationalTF unit_gain_lead(double f_c, double phi_deg);

struct DefaultLoop {
  static constexpr double kJ = 1.0;
  static constexpr double kB = 1.0;
  static constexpr double kCrossoverHz = 0.75;
  static constexpr double kPhaseCompDeg = 30.0;
  static constexpr double kPhaseSafeDeg = 20.0;
  static constexpr double kSigmaBufferDeg = 10.0;
};

/// 1/(J s^2 + B s).
RationalTF default_plant(double J = DefaultLoop::kJ, double B = DefaultLoop::kB);
/// Default plant with a 30 degree lead at 0.75 Hz scaled for unity crossover there.
LoopModel default_loop(double delay = 0.0);

struct Prediction {
  VectorXd value;
  bool held = false;  // no previous sample: zero-order hold
};

/// R(t) + delta (R(t) - R(t-h)) / h.
Prediction predict_trace(const VectorXd& current, const std::optional<VectorXd>& previous, double delta, double h);

/// Discrete SISO filter in transposed direct form II.
class DiscreteFilter {
 public:
  DiscreteFilter() = default;
  /// b, a: coefficients in powers of z^{-1}, a(0) normalized to 1.
  DiscreteFilter(VectorXd b, VectorXd a);
  /// Output contribution that does not depend on the current input.
  double free_response() const { return state_.size() ? state_(0) : 0.0; }
  double feedthrough() const { return b_(0); }
  /// Advance one sample with input u; returns the output.
  double step(double u);
  void reset();
  Index order() const { return a_.size() - 1; }

 private:
  VectorXd b_, a_, state_;
};

/// Bilinear (Tustin) discretization at sampling period ts.
DiscreteFilter tustin(const RationalTF& tf, double ts);

/// l1 norm of the impulse response over `samples` steps.
double impulse_l1_norm(const RationalTF& tf, double ts, int samples = 200000);

struct SimOptions {
  double ts = 1e-3;
  double t_end = 10.0;
  double transient_fraction = 0.1;
};

struct SimResult {
  std::vector<double> time;
  std::vector<double> reference;
  std::vector<double> output;
  std::vector<double> control;
  double growth_ratio = 0.0;
  bool bounded = false;
  std::vector<std::string> warnings;
};

/// Discrete realization of a Compensator (Smith structure included) acting on the error signal.
class CompensatorFilter {
 public:
  CompensatorFilter() = default;
  CompensatorFilter(const Compensator& c, double ts);
  /// (a, b) such that the next output is u = a e + b for input e.
  std::pair<double, double> affine() const;
  double step(double e);

 private:
  DiscreteFilter comp_, model_;
  bool smith_ = false;
  std::deque<double> model_fifo_;
};

/// Sample-by-sample closed loop: plant and compensator (Tustin), delay as a FIFO on the control signal.
class ClosedLoopSimulator {
 public:
  ClosedLoopSimulator(const LoopModel& loop, double ts);
  /// Advances one sample with reference r; returns the plant output.
  double step(double r);
  double last_control() const { return u_last_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  double ts() const { return ts_; }

 private:
  double ts_;
  DiscreteFilter plant_;
  CompensatorFilter comp_;
  std::deque<double> u_fifo_;
  double u_last_ = 0.0;
  std::vector<std::string> warnings_;
};

/// Reference sampled at ts (held at its last value if shorter than the run).
SimResult simulate_closed_loop(const LoopModel& loop, const std::vector<double>& reference, const SimOptions& opts);

struct EffectiveMargin {
  double margin_deg = 0.0;
  bool safe = false;  // margin >= phi_safe + sigma_buffer
};

/// phi_design - 360 (f_c + drift) dt + phi_comp - eps.
EffectiveMargin effective_phase_margin(double phi_design, double f_c, double dt, double phi_comp,
                                       double drift = 0.0, double eps = 0.0,
                                       double phi_safe = DefaultLoop::kPhaseSafeDeg,
                                       double sigma_buffer = DefaultLoop::kSigmaBufferDeg);

struct OrtsfConfig {
  RationalTF plant = default_plant();
  double f_c = DefaultLoop::kCrossoverHz;
  double phi_comp = DefaultLoop::kPhaseCompDeg;
  double k_c = 0.0;  // 0: unity crossover at f_c
  double delay = 0.0;
  double delay_threshold = 0.1;
  double max_delay_lead_deg = 60.0;
  double ts = 1e-3;
  double h = 0.1;  // spacing of trace samples
  /// Smith model mismatch: model = gain_scale * plant, model delay = delay * delay_scale.
  double model_gain_scale = 1.0;
  double model_delay_scale = 1.0;
};

enum class OrtsfBranch { LeadLag, Smith };

/// Base compensator of the loop (lead designed at f_c).
RationalTF base_compensator(const OrtsfConfig& cfg);
OrtsfBranch select_branch(const OrtsfConfig& cfg);
/// Compensator used by the ORTSF loop for cfg.delay.
Compensator ortsf_compensator(const OrtsfConfig& cfg);
LoopModel ortsf_loop(const OrtsfConfig& cfg);

/// Trace-to-command operator: predict delta = delay ahead, map to a scalar reference
/// r = sum_e w_e ||residual_e||, and filter the reference through the discretized compensator.
class OrtsfTransform {
 public:
  explicit OrtsfTransform(OrtsfConfig cfg);

  struct Output {
    double reference = 0.0;
    double command = 0.0;
    bool held = false;
    OrtsfBranch branch = OrtsfBranch::LeadLag;
  };

  /// `residuals`: per-edge residual vectors stacked row-wise (m x k); `weights`: per-edge weights.
  Output step(const MatrixXd& residuals, const VectorXd& weights);
  /// Composite Lipschitz constant of trace -> command (see README).
  double lipschitz_bound(const VectorXd& weights) const;
  OrtsfBranch branch() const { return branch_; }
  const OrtsfConfig& config() const { return cfg_; }

 private:
  OrtsfConfig cfg_;
  OrtsfBranch branch_;
  Compensator comp_;
  CompensatorFilter filter_;
  double l1_norm_ = 0.0;
  std::optional<MatrixXd> previous_;
};

/// Scalar reference from per-edge residual norms.
double trace_reference(const MatrixXd& residuals, const VectorXd& weights);

/// Phi^{-1}(p) for the standard normal.
double inverse_normal_cdf(double p);

}  // namespace fabric
