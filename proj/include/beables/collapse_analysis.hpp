#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "beables/nonmarkov.hpp"
#include "beables/propagators.hpp"

namespace beables {

// One particle coupled with strength g to the regulated boson field, in a
// superposition of the given sites.
struct PointParticleSystem {
  LatticeGrid grid;
  ConfigurationBasis basis;
  InfluencePhase phase;
};
PointParticleSystem point_particle_system(const PropagatorSpec& spec, const std::vector<Point3>& sites,
                                          std::size_t n_steps, double h);

struct DeltaMetricResult {
  std::string scenario;
  double r = 0.0;
  double t = 0.0;
  std::size_t n_steps = 0;
  std::size_t samples = 0;
  double delta_mc = 0.0;
  double standard_error = 0.0;
  double delta_analytic = 0.0;
  double omega = 0.0;
  double deviation() const { return standard_error > 0.0 ? std::abs(delta_mc - delta_analytic) / standard_error : 0.0; }
};

// Monte-Carlo estimate of E[Delta_t(x, y)] for |x - y| = r from an equal
// superposition, against exp(Omega_t) / 2.
DeltaMetricResult delta_metric_mc(const PropagatorSpec& spec, double r, double t, std::size_t n_steps,
                                  std::size_t n_samples, std::uint64_t seed, unsigned threads = 1);

// Two branches of N particles each; the collapse exponent is
// ln |rho_LR(T) / rho_LR(0)|.
struct AmplificationGeometry {
  double separation = 50.0;     // distance between branch centres
  double intra_spacing = 5.0;   // particle spacing inside a branch
  double horizon = 40.0;        // total time
  std::size_t n_steps = 4;
};

struct AmplificationPoint {
  std::size_t particles = 0;
  double exponent = 0.0;        // from the influence phase on the cell lattice
  double exponent_analytic = 0.0;
  double ratio = 0.0;           // exponent / exponent(N = first entry)
  double min_distance = 0.0;    // closest pair of distinct particles
  bool in_regime = true;        // min_distance >= 3 / boson mass
};

std::vector<AmplificationPoint> amplification_scan(const PropagatorSpec& spec, const std::vector<std::size_t>& particles,
                                                   const AmplificationGeometry& geometry);

struct PlateauReport {
  double r = 0.0;
  std::vector<double> times;
  std::vector<double> omega;
  double omega_infinity = 0.0;
  bool non_positive = true;
  bool monotone = true;
  double final_relative_gap = 0.0;
};

std::vector<PlateauReport> transient_plateau_check(const PropagatorSpec& spec, const std::vector<double>& radii,
                                                   const std::vector<double>& times);

// CSV rows: scenario, r, t, N, delta_mc, se, delta_analytic, omega
void write_delta_csv(std::ostream& out, const std::vector<DeltaMetricResult>& rows);

}  // namespace beables
