#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <limits>
#include <vector>

#include "beables/errors.hpp"
#include "beables/propagators.hpp"
#include "doctest.h"

using namespace beables;

namespace {

constexpr double kEulerGamma = 0.5772156649015329;

// trapezoid on int_0^inf exp(-x cosh t) cosh(n t) dt; the integrand decays
// doubly exponentially so a fine uniform grid converges to rounding
double bessel_k_trapezoid(int order, double x) {
  const double step = 1e-3;
  double sum = 0.5;  // t = 0 term, cosh(0) = 1, times exp(-x) below
  sum *= std::exp(-x);
  for (int k = 1; k < 40000; ++k) {
    const double t = step * k;
    const double term = std::exp(-x * std::cosh(t)) * std::cosh(order * t);
    sum += term;
    if (term < 1e-300) break;
  }
  return sum * step;
}

// spacelike single-mass Wightman function, m K1(m s) / (4 pi^2 s)
double spacelike_wightman(double mass, double interval) {
  return mass * boost::math::cyl_bessel_k(1, mass * interval) / (4.0 * kPi * kPi * interval);
}

double regulated_spacelike(const PropagatorSpec& spec, double u, double r) {
  const double s = std::sqrt(r * r - u * u);
  return spacelike_wightman(spec.boson_mass, s) - spacelike_wightman(spec.cutoff_mass, s);
}

}  // namespace

TEST_CASE("K0 and K1 against the integral representation") {
  for (double x : {0.05, 0.5, 1.0, 1.9, 2.1, 5.0, 17.0}) {
    CHECK(bessel_k0(x) == doctest::Approx(bessel_k_trapezoid(0, x)).epsilon(1e-12));
    CHECK(bessel_k1(x) == doctest::Approx(bessel_k_trapezoid(1, x)).epsilon(1e-12));
  }
  CHECK(bessel_k0(1.0) == doctest::Approx(0.42102443824070834).epsilon(1e-14));
}

TEST_CASE("K0 and K1 against a reference library") {
  for (double x = 1e-3; x < 600.0; x *= 1.37) {
    CHECK(bessel_k0(x) == doctest::Approx(boost::math::cyl_bessel_k(0, x)).epsilon(1e-12));
    CHECK(bessel_k1(x) == doctest::Approx(boost::math::cyl_bessel_k(1, x)).epsilon(1e-12));
  }
}

TEST_CASE("K0 asymptotics") {
  const double x = 20.0;
  CHECK(bessel_k0(x) == doctest::Approx(std::sqrt(kPi / (2 * x)) * std::exp(-x) * (1 - 1 / (8 * x))).epsilon(1e-3));
  const double small = 1e-4;
  CHECK(bessel_k0(small) == doctest::Approx(-std::log(small / 2) - kEulerGamma).epsilon(1e-6));
  CHECK(bessel_k0(800.0) == 0.0);
}

TEST_CASE("Bessel domain") {
  for (double x : {0.0, -1.0}) {
    try {
      bessel_k0(x);
      FAIL("expected a domain error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DomainError);
    }
    CHECK_THROWS_AS(bessel_k1(x), Error);
  }
}

TEST_CASE("vacuum propagator symmetries") {
  const PropagatorSpec spec;
  const Event x{0.3, {0.1, -0.4, 1.2}}, y{-0.9, {0.7, 0.2, -0.5}};
  const Complex dxy = vacuum_propagator(spec, x, y), dyx = vacuum_propagator(spec, y, x);
  CHECK(std::abs(dxy - std::conj(dyx)) < 1e-10);
  const Event xs{x.t + 2.0, {x.x[0] + 1.0, x.x[1] - 3.0, x.x[2]}}, ys{y.t + 2.0, {y.x[0] + 1.0, y.x[1] - 3.0, y.x[2]}};
  CHECK(std::abs(vacuum_propagator(spec, xs, ys) - dxy) < 1e-10);
}

TEST_CASE("equal-time propagator against the Bessel form and a refined quadrature") {
  PropagatorSpec settings;
  for (double mass : {0.5, 1.0, 3.0}) {
    const double r = 1.0 / mass;
    const Complex d = vacuum_propagator(mass, {0.0, {0, 0, 0}}, {0.0, {r, 0, 0}}, settings);
    CHECK(d.real() == doctest::Approx(spacelike_wightman(mass, r)).epsilon(1e-8));
    CHECK(std::abs(d.imag()) < 1e-10);
    PropagatorSpec fine = settings;
    fine.nodes *= 2;
    const Complex dd = vacuum_propagator(mass, {0.0, {0, 0, 0}}, {0.0, {r, 0, 0}}, fine);
    CHECK(std::abs(dd - d) < 1e-6 * std::abs(d));
  }
}

TEST_CASE("propagator at coincident points is a domain error") {
  const PropagatorSpec spec;
  try {
    vacuum_propagator(spec, {1.0, {0, 0, 0}}, {1.0, {0, 0, 0}});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DomainError);
  }
}

TEST_CASE("infinite-time exponent closed forms") {
  PropagatorSpec spec;
  spec.cutoff_mass = 100.0;
  CHECK(g_infinity(1.0, 1.0) == doctest::Approx(2.0 * bessel_k0(1.0) / (4 * kPi * kPi)).epsilon(1e-14));
  for (double r : {0.05, 0.7, 4.0}) {
    const double via_g = 0.5 * (g_infinity(r, spec.boson_mass) - g_infinity(r, spec.cutoff_mass) -
                                std::log(spec.cutoff_mass / spec.boson_mass) / (2 * kPi * kPi));
    CHECK(omega_infinity(spec, r) == doctest::Approx(via_g).epsilon(1e-12));
  }
  CHECK(std::abs(omega_infinity(spec, 1e-8 / spec.cutoff_mass)) < 1e-6);
  CHECK(omega_infinity(spec, 100.0) ==
        doctest::Approx(-std::log(100.0) / (4 * kPi * kPi)).epsilon(1e-6));
  // strictly decreasing until K0(m r) drops below the resolution of the
  // constant term, then the r-dependent part alone keeps decreasing
  double previous = 0.0, previous_part = std::numeric_limits<double>::infinity();
  for (double r = 0.01; r <= 100.0; r *= 1.5) {
    const double w = omega_infinity(spec, r);
    if (r < 25.0) {
      CHECK(w < previous);
    } else {
      CHECK(w <= previous);
    }
    const double part = g_infinity(r, spec.boson_mass) - g_infinity(r, spec.cutoff_mass);
    CHECK(part < previous_part);
    previous = w;
    previous_part = part;
  }
  PropagatorSpec doubled = spec;
  doubled.cutoff_mass *= 2.0;
  CHECK(omega_infinity(doubled, 50.0) - omega_infinity(spec, 50.0) ==
        doctest::Approx(-std::log(2.0) / (4 * kPi * kPi)).epsilon(1e-9));
  // r >> 1/m: flat
  CHECK(omega_infinity(spec, 20.0) == doctest::Approx(omega_infinity(spec, 40.0)).epsilon(1e-2));
  PropagatorSpec free = spec;
  free.coupling = 0.0;
  CHECK(omega_infinity(free, 3.0) == 0.0);
}

TEST_CASE("time kernel at zero lag and its symmetry") {
  PropagatorSpec spec;
  const double r = 0.8;
  const Complex q0 = regulated_time_kernel(spec, r, 0.0);
  const double closed = (bessel_k0(spec.boson_mass * r) - bessel_k0(spec.cutoff_mass * r)) / (2 * kPi * kPi);
  CHECK(q0.real() == doctest::Approx(closed).epsilon(1e-12));
  const Complex qs = regulated_time_kernel(spec, r, 1e-5);
  CHECK(qs.real() == doctest::Approx(closed).epsilon(1e-6));
  const Complex qp = regulated_time_kernel(spec, r, 2.3), qm = regulated_time_kernel(spec, r, -2.3);
  CHECK(std::abs(qp - std::conj(qm)) < 1e-12);
  CHECK(regulated_time_kernel(spec, 0.0, 0.0).real() ==
        doctest::Approx(std::log(spec.cutoff_mass / spec.boson_mass) / (2 * kPi * kPi)).epsilon(1e-12));
}

TEST_CASE("box integral against a direct double integral of the spacelike propagator") {
  PropagatorSpec spec;
  spec.cutoff_mass = 3.0;
  const double r = 5.0;
  // all lags |tau - s| < 1 < r: the integrand is smooth
  const auto inner = [&](double tau) {
    return boost::math::quadrature::gauss<double, 30>::integrate(
        [&](double s) { return regulated_spacelike(spec, tau - s, r); }, 0.0, 1.0);
  };
  const double direct = boost::math::quadrature::gauss<double, 30>::integrate(inner, 0.0, 1.0);
  const Complex box = box_integral(spec, r, 0.0, 1.0, 0.0, 1.0);
  CHECK(box.real() == doctest::Approx(direct).epsilon(1e-7));
  CHECK(std::abs(box.imag()) < 1e-9 * std::abs(direct));

  // shifted cells: imaginary parts cancel only for symmetric placements
  const auto inner2 = [&](double tau) {
    return boost::math::quadrature::gauss<double, 30>::integrate(
        [&](double s) { return regulated_spacelike(spec, tau - s, r); }, 0.5, 2.0);
  };
  const double direct2 = boost::math::quadrature::gauss<double, 30>::integrate(inner2, 0.0, 1.0);
  CHECK(box_integral(spec, r, 0.0, 1.0, 0.5, 2.0).real() == doctest::Approx(direct2).epsilon(1e-7));
}

TEST_CASE("box integral is additive and ordered cells split it") {
  PropagatorSpec spec;
  const double r = 1.3;
  const Complex whole = box_integral(spec, r, 0.0, 2.0, 0.5, 1.5);
  const Complex parts = box_integral(spec, r, 0.0, 0.7, 0.5, 1.5) + box_integral(spec, r, 0.7, 2.0, 0.5, 1.5);
  CHECK(std::abs(whole - parts) < 1e-10);
  for (double rr : {0.0, 0.4, 2.0}) {
    const Complex ordered = ordered_cell_integral(spec, rr, 0.5);
    const Complex full = box_integral(spec, rr, 0.0, 0.5, 0.0, 0.5);
    CHECK(std::abs(ordered + std::conj(ordered) - full) < 1e-10);
  }
}

TEST_CASE("cell kernel is Hermitian, positive and split by time order") {
  PropagatorSpec spec;
  const std::vector<Point3> sites{{0, 0, 0}, {2.0, 0, 0}};
  const CellKernel k = regulated_cell_kernel(spec, sites, 8, 0.5);
  CHECK((k.covariance - k.covariance.adjoint()).norm() < 1e-12);
  CHECK((k.ordered + k.ordered.adjoint() - k.covariance).norm() < 1e-12);
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(k.covariance);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("finite-time exponent") {
  PropagatorSpec spec;
  spec.cutoff_mass = 100.0;
  PropagatorSpec free = spec;
  free.coupling = 0.0;
  CHECK(omega_from_quadrature(free, 3.0, 10.0) == 0.0);
  CHECK(regulated_g(spec, 2.0, 0.0) == 0.0);
  CHECK(omega_from_quadrature(spec, 10.0, 200.0) == doctest::Approx(omega_infinity(spec, 10.0)).epsilon(1e-2));
  // before the light cone reaches the other point the exponent is the
  // coincident-point part alone
  CHECK(omega_from_quadrature(spec, 10.0, 2.0) < 0.0);
}

TEST_CASE("invalid propagator parameters") {
  PropagatorSpec bad;
  bad.cutoff_mass = 0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  PropagatorSpec neg;
  neg.boson_mass = -1.0;
  CHECK_THROWS_AS(omega_infinity(neg, 1.0), Error);
}
