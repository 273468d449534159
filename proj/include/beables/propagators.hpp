#pragma once

#include <cstddef>
#include <vector>

#include "beables/types.hpp"

namespace beables {

// Boson mass, Pauli-Villars cutoff mass and coupling, plus the settings of
// the momentum quadrature.
struct PropagatorSpec {
  double boson_mass = 1.0;
  double cutoff_mass = 10.0;
  double coupling = 1.0;
  // Real-axis momentum integration runs to cutoff_multiplier * cutoff_mass;
  // the remainder is taken along rotated rays.
  double cutoff_multiplier = 50.0;
  int nodes = 64;
  double tolerance = 1e-6;

  void validate() const;
};

struct Event {
  double t = 0.0;
  Point3 x{0.0, 0.0, 0.0};
};

double bessel_k0(double x);
double bessel_k1(double x);

// Wightman function of a free scalar of the given mass,
// int d^3p/((2pi)^3 2E) exp(-iE(x0-y0) + ip.(x-y)), by momentum quadrature.
Complex vacuum_propagator(double mass, const Event& x, const Event& y, const PropagatorSpec& settings);
// Pauli-Villars regulated version (boson mass minus cutoff mass).
Complex vacuum_propagator(const PropagatorSpec& spec, const Event& x, const Event& y);

// Single-mass infinite-time kernel 2 K0(m r) / (2pi)^2.
double g_infinity(double r, double mass);

double omega_infinity(const PropagatorSpec& spec, double r);
double omega_from_quadrature(const PropagatorSpec& spec, double r, double t);

// Regulated time kernel
//   Q(u; r) = (1/2pi^2) int p^2 j0(pr) [exp(-iE_b u)/E_b^3 - exp(-iE_c u)/E_c^3] dp,
// the double time integral of the regulated propagator obeys
//   int_a1^a2 int_b1^b2 D = (Q(a1-b1) + Q(a2-b2) - Q(a1-b2) - Q(a2-b1)) / 2.
Complex regulated_time_kernel(const PropagatorSpec& spec, double r, double u);

// Regulated G_t(r) = Q(0; r) - Re Q(t; r).
double regulated_g(const PropagatorSpec& spec, double r, double t);

// int d^3p/(2pi)^3 exp(ip.r)/E^2, regulated.
double regulated_yukawa(const PropagatorSpec& spec, double r);

// int_a1^a2 int_b1^b2 D((tau, x), (s, y)) ds dtau with |x - y| = r.
Complex box_integral(const PropagatorSpec& spec, double r, double a1, double a2, double b1, double b2);

// Time-ordered integral over one cell, int_0^h dtau int_0^tau ds D(tau - s).
Complex ordered_cell_integral(const PropagatorSpec& spec, double r, double h);

// Cell-integrated kernels on a spacetime lattice of n_steps cells of width h
// over the given sites, time-major index n * sites.size() + k.
struct CellKernel {
  CMatrix covariance;  // int_cell int_cell D
  CMatrix ordered;     // int_cell int_cell theta(tau - s) D
};
CellKernel regulated_cell_kernel(const PropagatorSpec& spec, const std::vector<Point3>& sites, std::size_t n_steps,
                                 double h);

}  // namespace beables
