#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fabric/control.hpp"
#include "fabric/random.hpp"

using namespace fabric;

namespace {

VectorXd poly(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

const double kPi = std::acos(-1.0);

LoopModel unity_loop(const RationalTF& plant, double delay = 0.0) {
  LoopModel l;
  l.plant = plant;
  l.compensator.tf = RationalTF::gain(1.0);
  l.delay = delay;
  return l;
}

/// Frequency (Hz) of maximum phase on a fine log grid.
double grid_peak_lead_hz(const RationalTF& c) {
  double best = -1e9, arg = 0;
  for (double lf = -3; lf <= 3; lf += 1e-4) {
    const double f = std::pow(10.0, lf);
    const double ph = std::arg(frequency_response(c, 2 * kPi * f));
    if (ph > best) {
      best = ph;
      arg = f;
    }
  }
  return arg;
}

}  // namespace

TEST_CASE("frequency response examples") {
  const RationalTF integ(poly({1}), poly({0, 1}));
  const Complex a = frequency_response(integ, 1.0);
  CHECK(a.real() == doctest::Approx(0.0));
  CHECK(a.imag() == doctest::Approx(-1.0));
  const Complex b = frequency_response(RationalTF(poly({1}), poly({1, 1})), 1.0);
  CHECK(b.real() == doctest::Approx(0.5));
  CHECK(b.imag() == doctest::Approx(-0.5));
  CHECK(std::abs(b) == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(frequency_response(RationalTF(poly({3, 1}), poly({2, 5, 1})), 0.0).real() == doctest::Approx(1.5));
  // Pole exactly on the evaluation point is sidestepped.
  CHECK(std::isfinite(std::abs(frequency_response(RationalTF(poly({1}), poly({1, 0, 1})), 1.0))));
}

TEST_CASE("delay multiplies the loop response by a unit phasor") {
  const LoopModel l = unity_loop(RationalTF(poly({1}), poly({1, 1})), 0.3);
  const Complex with = frequency_response(l, 2.0);
  const Complex without = frequency_response(l.plant, 2.0);
  CHECK(std::abs(with) == doctest::Approx(std::abs(without)));
  CHECK(std::arg(with / without) == doctest::Approx(-0.6));
}

TEST_CASE("polynomial roots") {
  auto r = polynomial_roots(poly({6, -5, 1}));
  REQUIRE(r.size() == 2);
  std::sort(r.begin(), r.end(), [](Complex a, Complex b) { return a.real() < b.real(); });
  CHECK(r[0].real() == doctest::Approx(2.0));
  CHECK(r[1].real() == doctest::Approx(3.0));
  CHECK(polynomial_roots(poly({2, 0, 0})).empty());
}

TEST_CASE("phase margin of the double-pole loop") {
  const RationalTF g(poly({1}), poly({0, 1, 1}));
  const MarginReport m = phase_margin(unity_loop(g));
  REQUIRE(m.has_crossover);
  CHECK(m.crossover_rad == doctest::Approx(0.786151).epsilon(1e-5));
  CHECK(m.crossover_hz == doctest::Approx(0.786151 / (2 * kPi)).epsilon(1e-5));
  CHECK(m.phase_margin_deg == doctest::Approx(51.827).epsilon(1e-4));
  CHECK(m.gain_margin == MarginReport::kGainMarginNone);

  const MarginReport d = phase_margin(unity_loop(g, 0.05));
  CHECK(std::abs((m.phase_margin_deg - d.phase_margin_deg) - 360 * m.crossover_hz * 0.05) <= 0.5);
  CHECK(m.delay_margin == doctest::Approx(m.phase_margin_deg / (360 * m.crossover_hz)));
}

TEST_CASE("gain margin of a third-order loop") {
  // 1/(s+1)^3 with gain 4: phase -180 at w = sqrt(3), |L| = 4/8.
  LoopModel l = unity_loop(RationalTF(poly({4}), poly({1, 3, 3, 1})));
  const MarginReport m = phase_margin(l);
  REQUIRE(m.has_crossover);
  CHECK(m.gain_margin == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("no crossover is flagged") {
  const MarginReport m = phase_margin(unity_loop(RationalTF::gain(0.5)));
  CHECK_FALSE(m.has_crossover);
}

TEST_CASE("H-infinity norm examples") {
  CHECK(hinf_norm(RationalTF(poly({1}), poly({1, 1}))) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(hinf_norm(RationalTF(poly({0, 1}), poly({1, 1}))) == doctest::Approx(1.0).epsilon(1e-6));
  const double zeta = 0.1;
  CHECK(hinf_norm(RationalTF(poly({1}), poly({1, 0.2, 1}))) ==
        doctest::Approx(1 / (2 * zeta * std::sqrt(1 - zeta * zeta))).epsilon(1e-6));
  try {
    hinf_norm(default_plant());
    FAIL("expected an error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("norm unbounded") != std::string::npos);
  }
  CHECK_THROWS(hinf_norm(RationalTF(poly({1}), poly({-1, 1}))));
}

TEST_CASE("delay margin bound") {
  CHECK(delay_margin_bound(2.5, 1.2, 0.8) == doctest::Approx(0.954).epsilon(1e-3));
  CHECK(delay_margin_bound(std::exp(1.0), 1.0, 1.0) == doctest::Approx(1.0));
  CHECK(delay_margin_bound(3.0, 2.0, 1.0) == doctest::Approx(delay_margin_bound(3.0, 1.0, 1.0) / 2));
  CHECK_THROWS(delay_margin_bound(1.0, 1.0, 1.0));
}

TEST_CASE("lead compensator design") {
  const RationalTF c = design_lead_lag(1.0, 30.0, 2.0);
  const double alpha = (1 - std::sin(kPi / 6)) / (1 + std::sin(kPi / 6));
  CHECK(alpha == doctest::Approx(1.0 / 3.0));
  const double peak = std::arg(frequency_response(c, 2 * kPi)) * 180 / kPi;
  CHECK(peak == doctest::Approx(30.0).epsilon(1e-3));
  CHECK(frequency_response(c, 0.0).real() == doctest::Approx(2.0));

  const RationalTF tiny = design_lead_lag(1.0, 1e-6, 3.0);
  CHECK(std::abs(frequency_response(tiny, 5.0) - Complex(3.0, 0.0)) <= 1e-6);

  CHECK_THROWS(design_lead_lag(1.0, 0.0, 1.0));
  CHECK_THROWS(design_lead_lag(1.0, 95.0, 1.0));

  Rng rng(3);
  for (int t = 0; t < 5; ++t) {
    const double phi = rng.uniform(5, 60), fc = std::pow(10.0, rng.uniform(-1, 1));
    CHECK(grid_peak_lead_hz(design_lead_lag(fc, phi, 1.0)) == doctest::Approx(fc).epsilon(1e-3));
  }
}

TEST_CASE("default loop margins") {
  const MarginReport m0 = phase_margin(default_loop());
  REQUIRE(m0.has_crossover);
  CHECK(m0.crossover_hz == doctest::Approx(0.75).epsilon(1e-6));
  CHECK(m0.phase_margin_deg == doctest::Approx(41.98).epsilon(1e-3));
  const MarginReport m52 = phase_margin(default_loop(0.052));
  CHECK(m52.phase_margin_deg >= 26.0);
  CHECK(m52.phase_margin_deg <= 30.0);
}

TEST_CASE("effective phase margin") {
  const auto e = effective_phase_margin(30, 1, 0.05, 0);
  CHECK(e.margin_deg == doctest::Approx(12.0));
  CHECK_FALSE(e.safe);
  CHECK(effective_phase_margin(30, 1, 0, 15, 0, 2).margin_deg == doctest::Approx(43.0));
  CHECK(effective_phase_margin(30, 1, 0, 15, 0, 2).safe);
}

TEST_CASE("trace prediction") {
  const Prediction p = predict_trace(poly({4}), poly({2}), 0.5, 1.0);
  CHECK(p.value(0) == doctest::Approx(5.0));
  CHECK_FALSE(p.held);
  CHECK(predict_trace(poly({3, 1}), poly({3, 1}), 0.7, 0.1).value == poly({3, 1}));
  const Prediction held = predict_trace(poly({3}), std::nullopt, 0.5, 1.0);
  CHECK(held.held);
  CHECK(held.value(0) == 3.0);
  CHECK_THROWS(predict_trace(poly({1}), poly({1}), 0.5, 0.0));

  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const double delta = rng.uniform(0, 1), h = rng.uniform(0.05, 1);
    const VectorXd a = rng.normal_vector(4), b = rng.normal_vector(4);
    const VectorXd ua = rng.normal_vector(4) * 0.1, ub = rng.normal_vector(4) * 0.1;
    const VectorXd d = predict_trace(a + ua, b + ub, delta, h).value - predict_trace(a, b, delta, h).value;
    const double u = std::max(ua.norm(), ub.norm());
    CHECK(d.norm() <= (1 + 2 * delta / h) * u + 1e-12);
    // Current-only perturbation moves the output by exactly (1 + delta/h) u.
    const VectorXd dc = predict_trace(a + ua, b, delta, h).value - predict_trace(a, b, delta, h).value;
    CHECK(dc.norm() <= (1 + delta / h) * ua.norm() + 1e-12);
  }
}

TEST_CASE("discretization fidelity of a first-order lag") {
  LoopModel open;
  open.plant = RationalTF(poly({1}), poly({1, 1}));
  DiscreteFilter f = tustin(open.plant, 1e-3);
  double worst = 0.0;
  for (int k = 1; k <= 5000; ++k) {
    const double y = f.step(1.0);
    worst = std::max(worst, std::abs(y - (1 - std::exp(-k * 1e-3))));
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("closed-loop simulation") {
  SimOptions o;
  o.t_end = 40.0;
  const std::vector<double> step(1, 1.0);
  const SimResult ok = simulate_closed_loop(default_loop(), step, o);
  CHECK(ok.bounded);
  CHECK(ok.output.back() == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(ok.time.size() == ok.output.size());
  CHECK(ok.control.size() == ok.output.size());

  const SimResult zero = simulate_closed_loop(default_loop(), std::vector<double>(1, 0.0), o);
  for (double y : zero.output) CHECK(y == 0.0);

  const MarginReport m = phase_margin(default_loop());
  o.t_end = 80.0;
  const SimResult bad = simulate_closed_loop(default_loop(m.delay_margin * 1.2), step, o);
  CHECK(bad.growth_ratio > 1.0);
  CHECK_FALSE(bad.bounded);
}

TEST_CASE("simulation warns on rounding and coarse sampling") {
  SimOptions o;
  o.t_end = 1.0;
  const SimResult r = simulate_closed_loop(default_loop(0.0015), std::vector<double>(1, 1.0), o);
  CHECK_FALSE(r.warnings.empty());
  o.ts = 0.2;
  const SimResult c = simulate_closed_loop(default_loop(), std::vector<double>(1, 1.0), o);
  CHECK_FALSE(c.warnings.empty());
}

TEST_CASE("small gain loops stay bounded for any delay") {
  LoopModel l = unity_loop(RationalTF(poly({0.8}), poly({1, 1})));
  SimOptions o;
  o.t_end = 30.0;
  for (double delay : {0.0, 0.1, 0.5, 2.0, 5.0}) {
    l.delay = delay;
    CHECK(simulate_closed_loop(l, std::vector<double>(1, 1.0), o).bounded);
  }
}

TEST_CASE("ORTSF branch selection and zero input") {
  OrtsfConfig cfg;
  cfg.delay = 0.05;
  CHECK(select_branch(cfg) == OrtsfBranch::LeadLag);
  OrtsfTransform t(cfg);
  const auto out = t.step(MatrixXd::Zero(3, 2), VectorXd::Ones(3));
  CHECK(out.command == 0.0);
  CHECK(out.held);
  CHECK(out.branch == OrtsfBranch::LeadLag);
  cfg.delay = 0.3;
  CHECK(select_branch(cfg) == OrtsfBranch::Smith);
  CHECK(ortsf_compensator(cfg).smith.has_value());
}

TEST_CASE("ORTSF command sensitivity stays within the composite Lipschitz bound") {
  OrtsfConfig cfg;
  cfg.delay = 0.05;
  Rng rng(41);
  const VectorXd w = VectorXd::Constant(4, 0.5);
  OrtsfTransform a(cfg), b(cfg);
  const double L = a.lipschitz_bound(w);
  CHECK(L > 0.0);
  double worst_in = 0.0, worst_out = 0.0;
  for (int k = 0; k < 40; ++k) {
    const MatrixXd r = rng.normal_matrix(4, 2);
    const MatrixXd p = rng.normal_matrix(4, 2) * 1e-2;
    const auto oa = a.step(r, w), ob = b.step(r + p, w);
    worst_in = std::max(worst_in, p.rowwise().norm().maxCoeff());
    worst_out = std::max(worst_out, std::abs(oa.command - ob.command));
  }
  CHECK(worst_out <= L * worst_in + 1e-12);
}

TEST_CASE("ORTSF command is continuous in the trace") {
  OrtsfConfig cfg;
  cfg.delay = 0.05;
  Rng rng(43);
  const MatrixXd base = rng.normal_matrix(3, 2), dir = rng.normal_matrix(3, 2);
  const VectorXd w = VectorXd::Ones(3);
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
    OrtsfTransform a(cfg), b(cfg);
    a.step(base, w);
    b.step(base, w);
    const double diff = std::abs(a.step(base, w).command - b.step(base + eps * dir, w).command);
    CHECK(diff <= prev);
    prev = diff;
  }
  CHECK(prev <= 1e-2);
}

TEST_CASE("inverse normal cdf") {
  CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
}
