#include "fabric/control.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace fabric {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kRadToDeg = 180.0 / kPi;
constexpr double kInfinity = std::numeric_limits<double>::infinity();

VectorXd trim(const VectorXd& c) {
  Index n = c.size();
  while (n > 1 && c(n - 1) == 0.0) --n;
  if (n == 0) return VectorXd::Zero(1);
  return c.head(n);
}

Complex polyval(const VectorXd& c, Complex s) {
  Complex acc(0.0, 0.0);
  for (Index k = c.size() - 1; k >= 0; --k) acc = acc * s + c(k);
  return acc;
}

VectorXd polymul(const VectorXd& a, const VectorXd& b) {
  VectorXd out = VectorXd::Zero(a.size() + b.size() - 1);
  for (Index i = 0; i < a.size(); ++i)
    for (Index j = 0; j < b.size(); ++j) out(i + j) += a(i) * b(j);
  return out;
}

/// Continuous arg(j w - z) for w >= 0.
double factor_phase(double w, Complex z) {
  if (z.real() > 0.0) return kPi + std::atan2(z.imag() - w, z.real());
  return std::atan2(w - z.imag(), -z.real());
}

/// Principal argument shifted by a multiple of 2 pi to lie closest to `reference`.
double nearest_branch(double angle, double reference) {
  return angle + 2.0 * kPi * std::round((reference - angle) / (2.0 * kPi));
}

std::vector<double> log_grid(const FrequencyGrid& grid) {
  const double decades = std::log10(grid.w_max / grid.w_min);
  const int n = static_cast<int>(std::lround(decades * grid.points_per_decade)) + 1;
  std::vector<double> w(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) w[k] = grid.w_min * std::pow(10.0, decades * k / (n - 1));
  return w;
}

}  // namespace

RationalTF::RationalTF(VectorXd n, VectorXd d) : num(trim(n)), den(trim(d)) {
  if (den.size() == 1 && den(0) == 0.0) throw InvalidArgument("transfer function denominator is zero");
  if (!num.allFinite() || !den.allFinite()) throw InvalidArgument("transfer function coefficients must be finite");
}

RationalTF RationalTF::gain(double k) { return RationalTF(VectorXd::Constant(1, k), VectorXd::Ones(1)); }

Index RationalTF::num_degree() const { return num.size() - 1; }
Index RationalTF::den_degree() const { return den.size() - 1; }

Complex RationalTF::evaluate(Complex s) const { return polyval(num, s) / polyval(den, s); }

std::vector<Complex> polynomial_roots(const VectorXd& coeffs) {
  const VectorXd c = trim(coeffs);
  const Index n = c.size() - 1;
  std::vector<Complex> roots;
  if (n <= 0) return roots;
  MatrixXd comp = MatrixXd::Zero(n, n);
  for (Index i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
  for (Index i = 0; i < n; ++i) comp(i, n - 1) = -c(i) / c(n);
  Eigen::EigenSolver<MatrixXd> es(comp, false);
  for (Index i = 0; i < n; ++i) roots.push_back(es.eigenvalues()(i));
  // Roots at the origin come back as tiny numbers; pin them to exactly zero.
  Index zeros_at_origin = 0;
  while (zeros_at_origin < n && c(zeros_at_origin) == 0.0) ++zeros_at_origin;
  std::sort(roots.begin(), roots.end(), [](Complex a, Complex b) { return std::abs(a) < std::abs(b); });
  for (Index k = 0; k < zeros_at_origin; ++k) roots[k] = Complex(0.0, 0.0);
  return roots;
}

std::vector<Complex> RationalTF::zeros() const { return polynomial_roots(num); }
std::vector<Complex> RationalTF::poles() const { return polynomial_roots(den); }

double RationalTF::phase(double w) const {
  const double lead = num(num.size() - 1) / den(den.size() - 1);
  double ph = lead < 0.0 ? -kPi : 0.0;
  if (lead == 0.0) return 0.0;
  for (Complex z : zeros()) ph += factor_phase(w, z);
  for (Complex p : poles()) ph -= factor_phase(w, p);
  return ph;
}

RationalTF operator*(const RationalTF& a, const RationalTF& b) {
  return RationalTF(polymul(a.num, b.num), polymul(a.den, b.den));
}

Complex Compensator::evaluate(double w) const {
  const Complex c = frequency_response(tf, w);
  if (!smith) return c;
  const Complex s(0.0, w);
  const Complex g = frequency_response(smith->model, w);
  return c / (1.0 + c * g * (1.0 - std::exp(-s * smith->model_delay)));
}

Complex frequency_response(const RationalTF& tf, double w) {
  if (w < 0.0) throw InvalidArgument("frequency must be nonnegative");
  Complex s(0.0, w);
  if (std::abs(polyval(tf.den, s)) == 0.0) s = Complex(0.0, w == 0.0 ? 1e-9 : w * (1.0 + 1e-9));
  return polyval(tf.num, s) / polyval(tf.den, s);
}

Complex frequency_response(const LoopModel& loop, double w) {
  return loop.compensator.evaluate(w) * frequency_response(loop.plant, w) * std::exp(Complex(0.0, -w * loop.delay));
}

namespace {

/// Phase of the loop with the Smith factor unwrapped along the log grid.
class LoopPhase {
 public:
  LoopPhase(const LoopModel& loop, const std::vector<double>& grid) : loop_(loop), grid_(grid) {
    if (loop.compensator.smith) {
      unwrapped_.resize(grid.size());
      double prev = 0.0;
      for (size_t k = 0; k < grid.size(); ++k) {
        const double a = std::arg(smith_factor(grid[k]));
        prev = k == 0 ? a : nearest_branch(a, prev);
        unwrapped_[k] = prev;
      }
    }
  }

  /// Radians; `k` is the grid index at or below w.
  double at(double w, size_t k) const {
    double ph = loop_.compensator.tf.phase(w) + loop_.plant.phase(w) - w * loop_.delay;
    if (loop_.compensator.smith) ph += nearest_branch(std::arg(smith_factor(w)), unwrapped_[k]);
    return ph;
  }

 private:
  Complex smith_factor(double w) const {
    const auto& sm = *loop_.compensator.smith;
    const Complex c = frequency_response(loop_.compensator.tf, w);
    const Complex g = frequency_response(sm.model, w);
    return 1.0 / (1.0 + c * g * (1.0 - std::exp(Complex(0.0, -w * sm.model_delay))));
  }

  const LoopModel& loop_;
  const std::vector<double>& grid_;
  std::vector<double> unwrapped_;
};

template <typename F>
double bisect_log(F&& f, double lo, double hi, double rel_tol = 1e-10) {
  // f(lo) and f(hi) have opposite signs (or f(lo) == 0).
  double flo = f(lo);
  if (flo == 0.0) return lo;
  while ((hi - lo) > rel_tol * lo) {
    const double mid = std::sqrt(lo * hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return std::sqrt(lo * hi);
}

}  // namespace

double loop_phase_deg(const LoopModel& loop, double w) {
  FrequencyGrid fg;
  fg.w_max = std::max(fg.w_max, w);
  fg.w_min = std::min(fg.w_min, w);
  const std::vector<double> grid = log_grid(fg);
  LoopPhase lp(loop, grid);
  const size_t k = static_cast<size_t>(std::upper_bound(grid.begin(), grid.end(), w) - grid.begin());
  return lp.at(w, k == 0 ? 0 : k - 1) * kRadToDeg;
}

MarginReport phase_margin(const LoopModel& loop, const FrequencyGrid& grid) {
  const std::vector<double> w = log_grid(grid);
  const LoopPhase lp(loop, w);
  MarginReport rep;
  auto logmag = [&](double x) { return std::log(std::abs(frequency_response(loop, x))); };

  std::vector<double> lm(w.size());
  for (size_t k = 0; k < w.size(); ++k) lm[k] = logmag(w[k]);
  for (size_t k = 0; k + 1 < w.size(); ++k) {
    if (lm[k] == 0.0 || (lm[k] > 0.0) != (lm[k + 1] > 0.0)) {
      const double wc = bisect_log(logmag, w[k], w[k + 1]);
      rep.has_crossover = true;
      rep.crossover_rad = wc;
      rep.crossover_hz = wc / (2.0 * kPi);
      rep.phase_margin_deg = 180.0 + lp.at(wc, k) * kRadToDeg;
      rep.delay_margin = rep.phase_margin_deg > 0.0 ? rep.phase_margin_deg / (360.0 * rep.crossover_hz) : 0.0;
      break;
    }
  }

  // Phase crossover: the continuous phase passes an odd multiple of -180 degrees.
  auto branch = [](double deg) { return std::floor((deg + 180.0) / 360.0); };
  double prev = lp.at(w[0], 0) * kRadToDeg;
  for (size_t k = 0; k + 1 < w.size(); ++k) {
    const double next = lp.at(w[k + 1], k + 1) * kRadToDeg;
    if (branch(prev) != branch(next)) {
      const double target = 360.0 * std::max(branch(prev), branch(next)) - 180.0;
      const double wp = bisect_log([&](double x) { return lp.at(x, k) * kRadToDeg - target; }, w[k], w[k + 1]);
      rep.gain_margin = 1.0 / std::abs(frequency_response(loop, wp));
      break;
    }
    prev = next;
  }
  return rep;
}

double hinf_norm(const RationalTF& tf, const FrequencyGrid& grid) {
  if (!tf.proper()) throw NumericError("norm unbounded: transfer function is improper");
  for (Complex p : tf.poles()) {
    if (std::abs(p.real()) <= 1e-12 * std::max(1.0, std::abs(p)))
      throw NumericError("norm unbounded: pole on the imaginary axis");
    if (p.real() > 0.0) throw InvalidArgument("transfer function is unstable; its H-infinity norm is undefined");
  }
  const std::vector<double> w = log_grid(grid);
  auto mag = [&](double x) { return std::abs(frequency_response(tf, x)); };
  double best = mag(0.0);
  const double at_inf =
      tf.num_degree() == tf.den_degree() ? std::abs(tf.num(tf.num.size() - 1) / tf.den(tf.den.size() - 1)) : 0.0;
  best = std::max(best, at_inf);
  size_t kbest = 0;
  double gbest = -1.0;
  for (size_t k = 0; k < w.size(); ++k) {
    const double m = mag(w[k]);
    if (m > gbest) {
      gbest = m;
      kbest = k;
    }
  }
  // Golden-section refinement in log frequency around the best grid point.
  double a = std::log(w[kbest == 0 ? 0 : kbest - 1]), b = std::log(w[std::min(kbest + 1, w.size() - 1)]);
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = mag(std::exp(c)), fd = mag(std::exp(d));
  for (int it = 0; it < 200 && (b - a) > 1e-14; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = mag(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = mag(std::exp(d));
    }
  }
  return std::max({best, gbest, fc, fd});
}

double delay_margin_bound(double gamma, double k_c, double g_norm) {
  if (!(gamma > 1.0)) throw InvalidArgument("gain margin must exceed 1");
  if (!(k_c > 0.0) || !(g_norm > 0.0)) throw InvalidArgument("compensator gain and plant norm must be positive");
  return std::log(gamma) / (k_c * g_norm);
}

RationalTF design_lead_lag(double f_c, double phi_comp_deg, double k_c) {
  if (!(phi_comp_deg > 0.0 && phi_comp_deg < 90.0))
    throw InvalidArgument("compensation phase must lie in (0, 90) degrees");
  if (!(f_c > 0.0)) throw InvalidArgument("crossover frequency must be positive");
  const double s = std::sin(phi_comp_deg / kRadToDeg);
  const double alpha = (1.0 - s) / (1.0 + s);
  const double T = 1.0 / (2.0 * kPi * f_c * std::sqrt(alpha));
  VectorXd num(2), den(2);
  num << k_c, k_c * T;
  den << 1.0, alpha * T;
  return RationalTF(num, den);
}

double unity_crossover_gain(const RationalTF& plant, double f_c, double phi_comp_deg) {
  const double wc = 2.0 * kPi * f_c;
  return 1.0 / std::abs(frequency_response(design_lead_lag(f_c, phi_comp_deg, 1.0) * plant, wc));
}

RationalTF unit_gain_lead(double f_c, double phi_deg) {
  if (phi_deg == 0.0) return RationalTF::gain(1.0);
  const double s = std::sin(phi_deg / kRadToDeg);
  return design_lead_lag(f_c, phi_deg, std::sqrt((1.0 - s) / (1.0 + s)));
}

RationalTF default_plant(double J, double B) {
  VectorXd num(1), den(3);
  num << 1.0;
  den << 0.0, B, J;
  return RationalTF(num, den);
}

LoopModel default_loop(double delay) {
  LoopModel loop;
  loop.plant = default_plant();
  const double k = unity_crossover_gain(loop.plant, DefaultLoop::kCrossoverHz, DefaultLoop::kPhaseCompDeg);
  loop.compensator.tf = design_lead_lag(DefaultLoop::kCrossoverHz, DefaultLoop::kPhaseCompDeg, k);
  loop.delay = delay;
  return loop;
}

Prediction predict_trace(const VectorXd& current, const std::optional<VectorXd>& previous, double delta, double h) {
  if (!(h > 0.0)) throw InvalidArgument("sample spacing must be positive");
  Prediction p;
  if (!previous) {
    p.value = current;
    p.held = true;
    return p;
  }
  if (previous->size() != current.size()) throw InvalidArgument("trace samples have different sizes");
  p.value = current + (delta / h) * (current - *previous);
  return p;
}

DiscreteFilter::DiscreteFilter(VectorXd b, VectorXd a) {
  if (a.size() == 0 || a(0) == 0.0) throw InvalidArgument("filter denominator must start with a nonzero coefficient");
  const Index n = std::max(a.size(), b.size());
  b_ = VectorXd::Zero(n);
  a_ = VectorXd::Zero(n);
  b_.head(b.size()) = b / a(0);
  a_.head(a.size()) = a / a(0);
  state_ = VectorXd::Zero(n - 1);
}

double DiscreteFilter::step(double u) {
  const Index n = state_.size();
  const double y = b_(0) * u + (n > 0 ? state_(0) : 0.0);
  for (Index i = 0; i < n; ++i) state_(i) = b_(i + 1) * u - a_(i + 1) * y + (i + 1 < n ? state_(i + 1) : 0.0);
  return y;
}

void DiscreteFilter::reset() { state_.setZero(); }

DiscreteFilter tustin(const RationalTF& tf, double ts) {
  if (!(ts > 0.0)) throw InvalidArgument("sampling period must be positive");
  if (!tf.proper()) throw InvalidArgument("only proper transfer functions can be discretized");
  const Index n = tf.den_degree();
  const double K = 2.0 / ts;
  VectorXd minus(2), plus(2);
  minus << 1.0, -1.0;
  plus << 1.0, 1.0;
  auto transform = [&](const VectorXd& c) {
    VectorXd out = VectorXd::Zero(n + 1);
    for (Index k = 0; k < c.size(); ++k) {
      VectorXd term = VectorXd::Constant(1, c(k) * std::pow(K, static_cast<double>(k)));
      for (Index i = 0; i < k; ++i) term = polymul(term, minus);
      for (Index i = 0; i < n - k; ++i) term = polymul(term, plus);
      out.head(term.size()) += term;
    }
    return out;
  };
  return DiscreteFilter(transform(tf.num), transform(tf.den));
}

double impulse_l1_norm(const RationalTF& tf, double ts, int samples) {
  DiscreteFilter f = tustin(tf, ts);
  double s = std::abs(f.step(1.0));
  for (int k = 1; k < samples; ++k) s += std::abs(f.step(0.0));
  return s;
}

CompensatorFilter::CompensatorFilter(const Compensator& c, double ts) : comp_(tustin(c.tf, ts)) {
  if (c.smith) {
    smith_ = true;
    model_ = tustin(c.smith->model, ts);
    const auto d = static_cast<size_t>(std::lround(c.smith->model_delay / ts));
    model_fifo_.assign(d, 0.0);
  }
}

std::pair<double, double> CompensatorFilter::affine() const {
  const double dc = comp_.feedthrough(), sc = comp_.free_response();
  if (!smith_ || model_fifo_.empty()) return {dc, sc};
  // u = Dc (e - (ym - ym_delayed)) + sc with ym = Dm u + sm.
  const double dm = model_.feedthrough(), sm = model_.free_response();
  const double denom = 1.0 + dc * dm;
  return {dc / denom, (dc * (model_fifo_.front() - sm) + sc) / denom};
}

double CompensatorFilter::step(double e) {
  if (!smith_ || model_fifo_.empty()) return comp_.step(e);
  const auto [a, b] = affine();
  const double u = a * e + b;
  const double ym = model_.step(u);
  const double ymd = model_fifo_.front();
  model_fifo_.pop_front();
  model_fifo_.push_back(ym);
  comp_.step(e - (ym - ymd));
  return u;
}

ClosedLoopSimulator::ClosedLoopSimulator(const LoopModel& loop, double ts)
    : ts_(ts), plant_(tustin(loop.plant, ts)), comp_(loop.compensator, ts) {
  if (!(loop.delay >= 0.0) || !std::isfinite(loop.delay)) throw InvalidArgument("delay must be finite and nonnegative");
  const auto d = static_cast<size_t>(std::lround(loop.delay / ts));
  if (std::abs(static_cast<double>(d) * ts - loop.delay) > 1e-9 * std::max(1.0, loop.delay)) {
    std::ostringstream msg;
    msg << "delay " << loop.delay << " s rounded to " << d << " samples";
    warnings_.push_back(msg.str());
  }
  u_fifo_.assign(d, 0.0);
  const MarginReport mr = phase_margin(loop);
  if (mr.has_crossover && ts > 1.0 / (20.0 * mr.crossover_hz)) {
    std::ostringstream msg;
    msg << "sampling period " << ts << " s exceeds 1/(20 f_c) = " << 1.0 / (20.0 * mr.crossover_hz)
        << " s; discretization may be inaccurate";
    warnings_.push_back(msg.str());
  }
}

double ClosedLoopSimulator::step(double r) {
  const auto [a, b] = comp_.affine();
  double y = 0.0, u = 0.0;
  if (u_fifo_.empty()) {
    // Algebraic loop: y = Dg u + sg, u = a (r - y) + b.
    const double dg = plant_.feedthrough(), sg = plant_.free_response();
    u = (a * (r - sg) + b) / (1.0 + a * dg);
    y = plant_.step(u);
  } else {
    y = plant_.step(u_fifo_.front());
    u_fifo_.pop_front();
    u = a * (r - y) + b;
    u_fifo_.push_back(u);
  }
  comp_.step(r - y);
  u_last_ = u;
  return y;
}

SimResult simulate_closed_loop(const LoopModel& loop, const std::vector<double>& reference, const SimOptions& opts) {
  if (!(opts.t_end > 0.0)) throw InvalidArgument("simulation end time must be positive");
  ClosedLoopSimulator sim(loop, opts.ts);
  SimResult res;
  res.warnings = sim.warnings();
  const auto n = static_cast<size_t>(std::lround(opts.t_end / opts.ts)) + 1;
  res.time.reserve(n);
  for (size_t k = 0; k < n; ++k) {
    const double r = reference.empty() ? 0.0 : reference[std::min(k, reference.size() - 1)];
    const double y = sim.step(r);
    res.time.push_back(static_cast<double>(k) * opts.ts);
    res.reference.push_back(r);
    res.output.push_back(y);
    res.control.push_back(sim.last_control());
  }

  const auto start = static_cast<size_t>(opts.transient_fraction * static_cast<double>(n));
  const size_t span = n - start, quarter = std::max<size_t>(1, span / 4);
  double first = 0.0, last = 0.0;
  bool finite = true;
  for (size_t k = 0; k < n; ++k) finite = finite && std::isfinite(res.output[k]);
  for (size_t k = start; k < start + quarter && k < n; ++k) first = std::max(first, std::abs(res.output[k]));
  for (size_t k = n - quarter; k < n; ++k) last = std::max(last, std::abs(res.output[k]));
  if (!finite)
    res.growth_ratio = kInfinity;
  else if (first > 0.0)
    res.growth_ratio = last / first;
  else
    res.growth_ratio = last > 0.0 ? kInfinity : 0.0;
  res.bounded = finite && res.growth_ratio < 1.05;
  return res;
}

EffectiveMargin effective_phase_margin(double phi_design, double f_c, double dt, double phi_comp, double drift,
                                       double eps, double phi_safe, double sigma_buffer) {
  if (dt < 0.0 || eps < 0.0) throw InvalidArgument("delay and uncertainty must be nonnegative");
  EffectiveMargin m;
  m.margin_deg = phi_design - 360.0 * (f_c + drift) * dt + phi_comp - eps;
  m.safe = m.margin_deg >= phi_safe + sigma_buffer;
  return m;
}

RationalTF base_compensator(const OrtsfConfig& cfg) {
  const double k = cfg.k_c > 0.0 ? cfg.k_c : unity_crossover_gain(cfg.plant, cfg.f_c, cfg.phi_comp);
  return design_lead_lag(cfg.f_c, cfg.phi_comp, k);
}

OrtsfBranch select_branch(const OrtsfConfig& cfg) {
  return cfg.delay <= cfg.delay_threshold ? OrtsfBranch::LeadLag : OrtsfBranch::Smith;
}

Compensator ortsf_compensator(const OrtsfConfig& cfg) {
  Compensator c;
  const RationalTF base = base_compensator(cfg);
  if (select_branch(cfg) == OrtsfBranch::LeadLag) {
    const double extra = std::min(360.0 * cfg.f_c * cfg.delay, cfg.max_delay_lead_deg);
    c.tf = base * unit_gain_lead(cfg.f_c, extra);
  } else {
    c.tf = base;
    c.smith = SmithModel{RationalTF::gain(cfg.model_gain_scale) * cfg.plant, cfg.delay * cfg.model_delay_scale};
  }
  return c;
}

LoopModel ortsf_loop(const OrtsfConfig& cfg) { return LoopModel{cfg.plant, ortsf_compensator(cfg), cfg.delay}; }

double trace_reference(const MatrixXd& residuals, const VectorXd& weights) {
  if (residuals.rows() != weights.size()) throw InvalidArgument("need one weight per residual row");
  double r = 0.0;
  for (Index e = 0; e < residuals.rows(); ++e) r += weights(e) * residuals.row(e).norm();
  return r;
}

OrtsfTransform::OrtsfTransform(OrtsfConfig cfg)
    : cfg_(std::move(cfg)), branch_(select_branch(cfg_)), comp_(ortsf_compensator(cfg_)), filter_(comp_, cfg_.ts) {
  if (!(cfg_.h > 0.0)) throw InvalidArgument("trace spacing must be positive");
  CompensatorFilter probe(comp_, cfg_.ts);
  l1_norm_ = std::abs(probe.step(1.0));
  const int samples = static_cast<int>(std::lround(200.0 / cfg_.ts));
  for (int k = 1; k < samples; ++k) l1_norm_ += std::abs(probe.step(0.0));
}

OrtsfTransform::Output OrtsfTransform::step(const MatrixXd& residuals, const VectorXd& weights) {
  Output out;
  out.branch = branch_;
  const Eigen::Map<const VectorXd> flat(residuals.data(), residuals.size());
  std::optional<VectorXd> prev;
  if (previous_) {
    if (previous_->rows() != residuals.rows() || previous_->cols() != residuals.cols())
      throw InvalidArgument("trace shape changed between samples");
    prev = Eigen::Map<const VectorXd>(previous_->data(), previous_->size());
  }
  const Prediction p = predict_trace(flat, prev, cfg_.delay, cfg_.h);
  out.held = p.held;
  const Eigen::Map<const MatrixXd> predicted(p.value.data(), residuals.rows(), residuals.cols());
  out.reference = trace_reference(predicted, weights);
  const auto substeps = std::max<long>(1, std::lround(cfg_.h / cfg_.ts));
  for (long k = 0; k < substeps; ++k) out.command = filter_.step(out.reference);
  previous_ = residuals;
  return out;
}

double OrtsfTransform::lipschitz_bound(const VectorXd& weights) const {
  return l1_norm_ * weights.cwiseAbs().sum() * (1.0 + 2.0 * cfg_.delay / cfg_.h);
}

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("probability must lie in (0, 1)");
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace fabric
