#include "beables/collapse_analysis.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "beables/errors.hpp"
#include "beables/parallel.hpp"

namespace beables {

namespace {

LatticeGrid grid_of(const std::vector<Point3>& sites, double h, std::size_t n_steps) {
  double spacing = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < sites.size(); ++a)
    for (std::size_t b = a + 1; b < sites.size(); ++b) spacing = std::min(spacing, distance(sites[a], sites[b]));
  if (!std::isfinite(spacing)) spacing = 1.0;
  return LatticeGrid(sites, spacing, h, n_steps);
}

}  // namespace

PointParticleSystem point_particle_system(const PropagatorSpec& spec, const std::vector<Point3>& sites,
                                          std::size_t n_steps, double h) {
  LatticeGrid grid = grid_of(sites, h, n_steps);
  ConfigurationBasis basis = ConfigurationBasis::single_particle(grid, 1.0);
  RMatrix couplings = point_couplings(grid, basis, spec.coupling);
  InfluencePhase phase(SpacetimeKernel::regulated(spec, sites, n_steps, h, RelationMode::Zero), couplings);
  return {std::move(grid), std::move(basis), std::move(phase)};
}

DeltaMetricResult delta_metric_mc(const PropagatorSpec& spec, double r, double t, std::size_t n_steps,
                                  std::size_t n_samples, std::uint64_t seed, unsigned threads) {
  spec.validate();
  require(r >= 0.0 && t >= 0.0, "Delta metric needs r >= 0 and t >= 0");
  require(n_steps > 0 && n_samples >= 2, "Delta metric needs steps and at least two samples");
  DeltaMetricResult out;
  out.scenario = "delta_metric";
  out.r = r;
  out.t = t;
  out.n_steps = n_steps;
  out.samples = n_samples;
  out.omega = omega_from_quadrature(spec, r, t);
  out.delta_analytic = 0.5 * std::exp(out.omega);
  if (r == 0.0) {
    // coincident points: a single site, Delta is identically one
    out.delta_analytic = 1.0;
    out.delta_mc = 1.0;
    return out;
  }
  if (t == 0.0) {
    out.delta_mc = out.delta_analytic;
    return out;
  }
  const double h = t / static_cast<double>(n_steps);
  const PointParticleSystem sys = point_particle_system(spec, {{0.0, 0.0, 0.0}, {r, 0.0, 0.0}}, n_steps, h);
  const SamplingFactor factor = factor_kernel(sys.phase.kernel().field_pair());
  CVector psi0(2);
  psi0 << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  const QuantumState start(psi0);
  std::vector<double> values(n_samples);
  parallel_for(n_samples, threads, [&](std::size_t i) {
    FieldSample xi;
    xi.seed = stream_seed(seed, i);
    RandomStream rng(xi.seed);
    sample_field(factor, rng, xi.values);
    const CVector psi = closed_form_state(sys.phase, xi, start, n_steps).amplitudes();
    // E_mu_t[Delta] = E_0[|psi(x)| |psi(y)|]
    values[i] = std::abs(psi(0)) * std::abs(psi(1));
  });
  const Estimate e = mean_estimate(values);
  out.delta_mc = e.value;
  out.standard_error = e.standard_error;
  return out;
}

std::vector<AmplificationPoint> amplification_scan(const PropagatorSpec& spec, const std::vector<std::size_t>& particles,
                                                   const AmplificationGeometry& geometry) {
  spec.validate();
  require(!particles.empty(), "amplification scan needs particle counts");
  require(geometry.n_steps > 0 && geometry.horizon > 0.0, "amplification scan needs a positive horizon");
  const double h = geometry.horizon / static_cast<double>(geometry.n_steps);
  std::vector<AmplificationPoint> out;
  for (std::size_t n : particles) {
    require(n >= 1, "branches need at least one particle");
    // sites: N in the left branch, N in the right branch, on a line
    std::vector<Point3> sites;
    for (std::size_t k = 0; k < n; ++k) sites.push_back({geometry.intra_spacing * static_cast<double>(k), 0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k)
      sites.push_back({geometry.separation + geometry.intra_spacing * static_cast<double>(k), 0.0, 0.0});
    RMatrix couplings = RMatrix::Zero(2, static_cast<Eigen::Index>(2 * n));
    for (std::size_t k = 0; k < n; ++k) {
      couplings(0, static_cast<Eigen::Index>(k)) = spec.coupling;
      couplings(1, static_cast<Eigen::Index>(n + k)) = spec.coupling;
    }
    const InfluencePhase phase(SpacetimeKernel::regulated(spec, sites, geometry.n_steps, h, RelationMode::Zero),
                               couplings);
    CMatrix rho0 = CMatrix::Constant(2, 2, 0.5);
    const DensityMatrix rho = influence_phase_apply(phase, DensityMatrix(rho0), geometry.n_steps);
    AmplificationPoint p;
    p.particles = n;
    p.exponent = std::log(std::abs(rho.matrix()(0, 1)) / 0.5);
    // g^2 [sum_LR G - (sum_LL G + sum_RR G) / 2]
    double acc = 0.0;
    for (std::size_t a = 0; a < 2 * n; ++a)
      for (std::size_t b = 0; b < 2 * n; ++b) {
        const bool same = (a < n) == (b < n);
        const double g = regulated_g(spec, distance(sites[a], sites[b]), geometry.horizon);
        acc += same ? -0.5 * g : 0.5 * g;
      }
    p.exponent_analytic = spec.coupling * spec.coupling * acc;
    p.min_distance = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < 2 * n; ++a)
      for (std::size_t b = a + 1; b < 2 * n; ++b) p.min_distance = std::min(p.min_distance, distance(sites[a], sites[b]));
    p.in_regime = p.min_distance * spec.boson_mass >= 3.0;
    out.push_back(p);
  }
  for (auto& p : out) p.ratio = p.exponent / out.front().exponent;
  return out;
}

std::vector<PlateauReport> transient_plateau_check(const PropagatorSpec& spec, const std::vector<double>& radii,
                                                   const std::vector<double>& times) {
  spec.validate();
  require(!times.empty(), "plateau check needs times");
  std::vector<PlateauReport> out;
  for (double r : radii) {
    PlateauReport rep;
    rep.r = r;
    rep.times = times;
    rep.omega_infinity = omega_infinity(spec, r);
    for (double t : times) rep.omega.push_back(omega_from_quadrature(spec, r, t));
    for (std::size_t k = 0; k < rep.omega.size(); ++k) {
      if (rep.omega[k] > 1e-12) rep.non_positive = false;
      if (k > 0 && rep.omega[k] > rep.omega[k - 1] + 1e-12) rep.monotone = false;
    }
    rep.final_relative_gap = rep.omega_infinity != 0.0
                                 ? std::abs(rep.omega.back() - rep.omega_infinity) / std::abs(rep.omega_infinity)
                                 : std::abs(rep.omega.back());
    out.push_back(std::move(rep));
  }
  return out;
}

void write_delta_csv(std::ostream& out, const std::vector<DeltaMetricResult>& rows) {
  out << "scenario,r,t,N,delta_mc,se,delta_analytic,omega\n";
  out.precision(17);
  for (const auto& r : rows)
    out << r.scenario << ',' << r.r << ',' << r.t << ',' << r.samples << ',' << r.delta_mc << ',' << r.standard_error
        << ',' << r.delta_analytic << ',' << r.omega << '\n';
}

}  // namespace beables
