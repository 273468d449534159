#include "beables/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <algorithm>
#include <sstream>

#include "beables/collapse_analysis.hpp"
#include "beables/csl.hpp"
#include "beables/errors.hpp"
#include "beables/gaussian_field.hpp"
#include "beables/nonmarkov.hpp"
#include "beables/parallel.hpp"
#include "beables/propagators.hpp"

namespace beables {

using nlohmann::json;

namespace {

std::string hex64(std::uint64_t h) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

[[noreturn]] void config_error(const std::string& what) { fail(ErrorKind::ConfigError, what); }

const std::vector<std::pair<ScenarioKind, const char*>>& scenario_names() {
  static const std::vector<std::pair<ScenarioKind, const char*>> names = {
      {ScenarioKind::CslUnraveling, "csl_unraveling"},
      {ScenarioKind::BornRule, "born_rule"},
      {ScenarioKind::AmplificationCsl, "amplification_csl"},
      {ScenarioKind::NonmarkovUnraveling, "nonmarkov_unraveling"},
      {ScenarioKind::BeableStats, "beable_stats"},
      {ScenarioKind::OmegaTable, "omega_table"},
      {ScenarioKind::DeltaMetric, "delta_metric"},
      {ScenarioKind::QuarticReweight, "quartic_reweight"},
  };
  return names;
}

// Scenario parameters with defaults; unknown keys are rejected.
json default_params(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::CslUnraveling:
      return {{"gamma", 0.1},     {"mass", 1.0},       {"spacing", 1.0},         {"hop", 0.2},
              {"dt", 0.01},       {"duration", 5.0},   {"samples", 10000},       {"amplitudes", {0.6, 0.8}},
              {"csv_trajectories", 20}, {"tolerance_se", 3.0}};
    case ScenarioKind::BornRule:
      return {{"gamma", 1.0},         {"mass", 1.0},          {"spacing", 1.0},        {"probability", 0.3},
              {"dt", 1e-3},           {"max_time", 40.0},     {"threshold", 0.99},     {"samples", 10000},
              {"martingale_time", 5.0}, {"martingale_records", 10}, {"tolerance_se", 3.0}, {"p_value_min", 0.01}};
    case ScenarioKind::AmplificationCsl:
      return {{"gamma", 40.0},      {"mass", 1.0},      {"sigma", 1.0},   {"separation", 5.0},
              {"spacing", 0.5},     {"intra_spacing", 0.0}, {"particles", {1, 2, 3}}, {"method", "ensemble"},
              {"samples", 10000},   {"points", 40},     {"horizon", 2.0}, {"tolerance", 0.10}};
    case ScenarioKind::NonmarkovUnraveling:
      return {{"boson_mass", 1.0}, {"cutoff_mass", 10.0}, {"coupling", 1.0}, {"distance", 2.0},
              {"n_steps", 8},      {"cell", 0.5},         {"relation", "zero"}, {"samples", 10000},
              {"amplitudes", {0.6, 0.8}}, {"tolerance_se", 3.0}};
    case ScenarioKind::BeableStats:
      return {{"boson_mass", 1.0}, {"cutoff_mass", 10.0}, {"coupling", 1.0}, {"distance", 2.0},
              {"n_steps", 8},      {"cell", 0.5},         {"samples", 10000}, {"amplitudes", {0.6, 0.8}},
              {"tolerance_se", 3.0}, {"shift_tolerance", 1e-8}, {"checkpoint", true}, {"chunk", 2000}};
    case ScenarioKind::OmegaTable:
      return {{"boson_mass", 1.0}, {"cutoff_mass", 100.0}, {"coupling", 1.0}, {"rmin", 0.01},
              {"rmax", 20.0},      {"points", 25},         {"time", 200.0},   {"check_distance", 10.0},
              {"transient_tolerance", 0.01}, {"plateau_tolerance", 0.005}, {"log_cutoff_mass", 1e4},
              {"log_tolerance", 0.02}};
    case ScenarioKind::DeltaMetric:
      return {{"boson_mass", 1.0}, {"cutoff_mass", 100.0}, {"coupling", 1.0}, {"radii", {1.0, 3.0, 10.0}},
              {"times", {5.0, 20.0, 50.0}}, {"n_steps", 8}, {"samples", 10000}, {"tolerance_se", 3.0}};
    case ScenarioKind::QuarticReweight:
      return {{"points", 4},        {"volume", 1.0},      {"correlation", 0.5}, {"relation_scale", 0.5},
              {"relation_phase", 0.7853981633974483}, {"lambda_step", 1e-3}, {"epsilon", 1e-6},
              {"samples", 100000},  {"tolerance_se", 3.0}};
  }
  return json::object();
}

json merged_params(ScenarioKind kind, const json& given) {
  json out = default_params(kind);
  if (given.is_null()) return out;
  if (!given.is_object()) config_error("params must be an object");
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (!out.contains(it.key())) config_error("unknown parameter '" + it.key() + "' for scenario " + to_string(kind));
    const json& def = out[it.key()];
    const bool ok = (def.is_number() && it.value().is_number()) || (def.is_string() && it.value().is_string()) ||
                    (def.is_boolean() && it.value().is_boolean()) || (def.is_array() && it.value().is_array());
    if (!ok) config_error("parameter '" + it.key() + "' has the wrong type");
    out[it.key()] = it.value();
  }
  return out;
}

double num(const json& p, const char* key) { return p.at(key).get<double>(); }
std::size_t count(const json& p, const char* key) {
  const double v = p.at(key).get<double>();
  if (!(v >= 0.0) || std::floor(v) != v) config_error(std::string("parameter '") + key + "' must be a non-negative integer");
  return static_cast<std::size_t>(v);
}
std::vector<double> numbers(const json& p, const char* key) {
  std::vector<double> out;
  for (const auto& v : p.at(key)) {
    if (!v.is_number()) config_error(std::string("parameter '") + key + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

CriterionResult within_se(std::string name, double value, double target, double se, double k) {
  CriterionResult c;
  c.name = std::move(name);
  c.value = value;
  c.target = target;
  c.standard_error = se;
  c.tolerance = k * se;
  c.passed = std::abs(value - target) <= k * se;
  std::ostringstream d;
  d << "|" << value << " - " << target << "| = " << std::abs(value - target) << " vs " << k << " SE = " << k * se;
  c.detail = d.str();
  return c;
}

CriterionResult within_relative(std::string name, double value, double target, double rel) {
  CriterionResult c;
  c.name = std::move(name);
  c.value = value;
  c.target = target;
  c.tolerance = rel;
  const double dev = std::abs(value - target) / std::abs(target);
  c.passed = dev <= rel;
  std::ostringstream d;
  d << "relative deviation " << dev << " vs " << rel;
  c.detail = d.str();
  return c;
}

QuantumState state_from(const json& p) {
  const auto amps = numbers(p, "amplitudes");
  if (amps.size() != 2) config_error("amplitudes must have two entries");
  CVector v(2);
  v << amps[0], amps[1];
  if (!(v.squaredNorm() > 0.0)) config_error("amplitudes must not all vanish");
  return QuantumState(v).normalized();
}

struct Context {
  std::uint64_t seed;
  unsigned threads;
  std::string out_dir;
  RunReport* report;
};

std::string output_path(Context& ctx, const std::string& name) {
  std::error_code ec;
  std::filesystem::create_directories(ctx.out_dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + ctx.out_dir + ": " + ec.message());
  const std::string path = (std::filesystem::path(ctx.out_dir) / name).string();
  ctx.report->outputs.push_back(name);
  return path;
}

// --- Markovian scenarios -----------------------------------------------

struct TwoSite {
  LatticeGrid grid;
  ConfigurationBasis basis;
  CollapseOperatorSet collapse;
  CMatrix hamiltonian;
};

TwoSite two_site(const json& p, double dt, std::size_t steps, double hop) {
  LatticeGrid grid = LatticeGrid::line(2, num(p, "spacing"), dt, steps);
  ConfigurationBasis basis = ConfigurationBasis::single_particle(grid, num(p, "mass"));
  CollapseOperatorSet collapse = build_point_mass_density(grid, basis);
  CMatrix h = hopping_hamiltonian(grid, basis, hop);
  return {std::move(grid), std::move(basis), std::move(collapse), std::move(h)};
}

void run_csl_unraveling(const json& p, Context& ctx) {
  const double dt = num(p, "dt"), duration = num(p, "duration"), gamma = num(p, "gamma");
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
  const TwoSite sys = two_site(p, dt, steps, num(p, "hop"));
  const QuantumState psi0 = state_from(p);
  const CslModel model(sys.hamiltonian, sys.collapse, gamma, dt);
  SimulationOptions sim;
  sim.n_steps = steps;
  sim.record_every = steps;
  const auto ensemble =
      simulate_ensemble(model, psi0, ctx.seed, count(p, "samples"), TrajectoryKind::Linear, sim, ctx.threads);
  const DensityMatrix exact =
      evolve_lindblad(DensityMatrix::from_state(psi0), sys.hamiltonian, sys.collapse, gamma, duration);
  const auto est = trace_distance_jackknife(density_samples(ensemble, 1), exact.matrix());
  CriterionResult c;
  c.name = "trace_distance";
  c.value = est.distance;
  c.standard_error = est.standard_error;
  c.tolerance = num(p, "tolerance_se") * est.standard_error;
  c.passed = est.distance < c.tolerance;
  c.detail = "trace distance of the ensemble average to the Lindblad solution";
  ctx.report->criteria.push_back(c);
  ctx.report->tables["rho_mc"] = {est.mean(0, 0).real(), est.mean(1, 1).real(), est.mean(0, 1).real(),
                                  est.mean(0, 1).imag()};
  ctx.report->tables["rho_exact"] = {exact.matrix()(0, 0).real(), exact.matrix()(1, 1).real(),
                                     exact.matrix()(0, 1).real(), exact.matrix()(0, 1).imag()};

  const std::size_t keep = std::min(count(p, "csv_trajectories"), ensemble.size());
  if (keep > 0) {
    SimulationOptions rec;
    rec.n_steps = steps;
    rec.record_every = std::max<std::size_t>(1, steps / 50);
    std::vector<Trajectory> shown(keep);
    for (std::size_t i = 0; i < keep; ++i)
      shown[i] = girsanov_normalize(simulate_linear(model, psi0, stream_seed(ctx.seed, i), rec));
    std::ofstream out(output_path(ctx, "trajectories.csv"));
    write_trajectory_csv(out, shown, model, {0, 1});
  }
}

void run_born_rule(const json& p, Context& ctx) {
  const double dt = num(p, "dt"), gamma = num(p, "gamma"), prob = num(p, "probability");
  if (!(prob > 0.0 && prob < 1.0)) config_error("probability must lie in (0, 1)");
  const auto steps = static_cast<std::size_t>(std::llround(num(p, "max_time") / dt));
  const TwoSite sys = two_site(p, dt, steps, 0.0);
  CVector amps(2);
  amps << std::sqrt(prob), std::sqrt(1.0 - prob);
  const QuantumState psi0(amps);
  const CslModel model(sys.hamiltonian, sys.collapse, gamma, dt);
  const std::size_t n = count(p, "samples");
  const double k = num(p, "tolerance_se");

  SimulationOptions sim;
  sim.n_steps = steps;
  sim.record_every = steps;
  sim.collapse_threshold = num(p, "threshold");
  const auto outcomes = simulate_ensemble(model, psi0, ctx.seed, n, TrajectoryKind::Normalized, sim, ctx.threads);
  const BornReport born = born_statistics(outcomes, {prob, 1.0 - prob});
  auto freq = within_se("born_frequency", born.frequencies[0].value, prob, born.frequencies[0].standard_error, k);
  ctx.report->criteria.push_back(freq);
  CriterionResult chi;
  chi.name = "born_chi_squared";
  chi.value = born.p_value;
  chi.target = num(p, "p_value_min");
  chi.passed = born.p_value >= chi.target && born.undecided == 0;
  chi.detail = "chi-squared " + std::to_string(born.chi_squared) + ", undecided " + std::to_string(born.undecided);
  ctx.report->criteria.push_back(chi);
  ctx.report->tables["born_counts"] = born.counts;
  ctx.report->tables["undecided"] = born.undecided;

  // martingale on a fixed time grid, no early stopping
  const std::size_t records = std::max<std::size_t>(1, count(p, "martingale_records"));
  const auto mart_steps = static_cast<std::size_t>(std::llround(num(p, "martingale_time") / dt));
  SimulationOptions msim;
  msim.n_steps = mart_steps;
  msim.record_every = std::max<std::size_t>(1, mart_steps / records);
  const auto ensemble =
      simulate_ensemble(model, psi0, stream_seed(ctx.seed, 0x6d61727469ULL), n, TrajectoryKind::Normalized, msim,
                        ctx.threads);
  const RVector observable = sys.collapse.operators[0].diagonal_entries();
  const MartingaleReport mart = martingale_check(ensemble, observable, k);
  CriterionResult m;
  m.name = "martingale";
  m.value = mart.max_deviation;
  m.target = mart.initial;
  m.tolerance = k;
  m.passed = mart.passed;
  m.detail = "largest deviation of E[<M(x0)>_t] from its initial value, in standard errors";
  ctx.report->criteria.push_back(m);
  json series = json::array();
  for (std::size_t i = 0; i < mart.times.size(); ++i)
    series.push_back({mart.times[i], mart.means[i].value, mart.means[i].standard_error});
  ctx.report->tables["martingale"] = series;
}

void run_amplification_csl(const json& p, Context& ctx) {
  CatSpec cat;
  cat.mass = num(p, "mass");
  cat.sigma = num(p, "sigma");
  cat.separation = num(p, "separation");
  cat.spacing = num(p, "spacing");
  cat.intra_spacing = num(p, "intra_spacing");
  AmplificationOptions opt;
  opt.gamma = num(p, "gamma");
  opt.horizon = num(p, "horizon");
  opt.points = count(p, "points");
  opt.ensemble = count(p, "samples");
  opt.threads = ctx.threads;
  const std::string method = p.at("method").get<std::string>();
  if (method == "ensemble") {
    opt.method = AmplificationMethod::Ensemble;
  } else if (method == "lindblad") {
    opt.method = AmplificationMethod::Lindblad;
  } else {
    config_error("method must be 'ensemble' or 'lindblad'");
  }
  const auto particles = numbers(p, "particles");
  if (particles.empty()) config_error("particles must not be empty");
  std::vector<AmplificationResult> results;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    cat.particles = static_cast<std::size_t>(particles[i]);
    opt.seed = stream_seed(ctx.seed, i);
    results.push_back(amplification_rate(cat, opt));
  }
  const double base = results.front().rate;
  const double n0 = static_cast<double>(results.front().particles);
  json table = json::array();
  for (const auto& r : results) {
    const double expected = std::pow(static_cast<double>(r.particles) / n0, 2.0);
    ctx.report->criteria.push_back(
        within_relative("rate_ratio_N" + std::to_string(r.particles), r.rate / base, expected, num(p, "tolerance")));
    table.push_back({r.particles, r.rate, r.predicted_rate, r.r_squared});
  }
  ctx.report->tables["rates"] = table;
}

// --- non-Markovian scenarios -------------------------------------------

PropagatorSpec propagator_from(const json& p) {
  PropagatorSpec spec;
  spec.boson_mass = num(p, "boson_mass");
  spec.cutoff_mass = num(p, "cutoff_mass");
  spec.coupling = num(p, "coupling");
  spec.validate();
  return spec;
}

InfluencePhase two_site_phase(const json& p, RelationMode mode) {
  const PropagatorSpec spec = propagator_from(p);
  const std::vector<Point3> sites{{0.0, 0.0, 0.0}, {num(p, "distance"), 0.0, 0.0}};
  const std::size_t steps = count(p, "n_steps");
  const double h = num(p, "cell");
  if (steps == 0 || !(h > 0.0)) config_error("n_steps and cell must be positive");
  RMatrix couplings = RMatrix::Zero(2, 2);
  couplings(0, 0) = spec.coupling;
  couplings(1, 1) = spec.coupling;
  return InfluencePhase(SpacetimeKernel::regulated(spec, sites, steps, h, mode), couplings);
}

void run_nonmarkov_unraveling(const json& p, Context& ctx) {
  const RelationMode mode = relation_mode_from_string(p.at("relation").get<std::string>());
  const InfluencePhase phase = two_site_phase(p, mode);
  const QuantumState psi0 = state_from(p);
  const std::size_t steps = phase.kernel().n_steps;
  const auto samples = unraveling_estimators(phase, psi0, steps, count(p, "samples"), ctx.seed, ctx.threads);
  const DensityMatrix exact = influence_phase_apply(phase, DensityMatrix::from_state(psi0), steps);
  const auto est = trace_distance_jackknife(samples, exact.matrix());
  CriterionResult c;
  c.name = "trace_distance";
  c.value = est.distance;
  c.standard_error = est.standard_error;
  c.tolerance = num(p, "tolerance_se") * est.standard_error;
  c.passed = est.distance < c.tolerance;
  c.detail = "trace distance of the unraveling average to the influence-functional solution";
  ctx.report->criteria.push_back(c);
  ctx.report->tables["rho_mc"] = {est.mean(0, 0).real(), est.mean(1, 1).real(), est.mean(0, 1).real(),
                                  est.mean(0, 1).imag()};
  ctx.report->tables["rho_exact"] = {exact.matrix()(0, 0).real(), exact.matrix()(1, 1).real(),
                                     exact.matrix()(0, 1).real(), exact.matrix()(0, 1).imag()};
}

void run_beable_stats(const json& p, Context& ctx) {
  const PropagatorSpec spec = propagator_from(p);
  const InfluencePhase phase = two_site_phase(p, RelationMode::Zero);
  const QuantumState psi0 = state_from(p);
  const std::size_t steps = phase.kernel().n_steps;
  const double h = phase.kernel().h;
  const double k = num(p, "tolerance_se");
  const std::size_t n = count(p, "samples");
  const KernelPair pair = phase.kernel().field_pair();
  const SamplingFactor factor = factor_kernel(pair);
  std::vector<FieldSample> samples;
  if (p.at("checkpoint").get<bool>()) {
    std::filesystem::create_directories(ctx.out_dir);
    FieldCheckpoint cp((std::filesystem::path(ctx.out_dir) / "fields").string(), phase.kernel().hash(), ctx.seed,
                       phase.kernel().size());
    samples = sample_with_checkpoint(factor, cp, n, std::max<std::size_t>(1, count(p, "chunk")), ctx.threads);
    ctx.report->outputs.push_back("fields/manifest.json");
    ctx.report->outputs.push_back("fields/fields.bin");
  } else {
    samples = sample_fields(factor, ctx.seed, n, ctx.threads);
  }

  // weights of the a priori samples average to one
  const WeightedFieldEnsemble cooked = girsanov_field_measure(phase, psi0, samples, steps);
  const std::vector<double> weights = cooked.weights();
  const Estimate wmean = mean_estimate(weights);
  ctx.report->criteria.push_back(within_se("weight_mean", wmean.value, 1.0, wmean.standard_error, k));

  // weighted mean of xi in the last cell at site 0 against its closed form
  const auto probe = static_cast<Eigen::Index>((steps - 1) * phase.kernel().n_sites);
  Complex analytic = 0.0;
  const RVector pops = psi0.amplitudes().cwiseAbs2();
  for (std::size_t a = 0; a < phase.dimension(); ++a) {
    const CVector c = phase.source(a, steps).cast<Complex>();
    const CVector shift = Complex(0.0, h) * ((pair.covariance - pair.relation) * c);
    analytic += pops(static_cast<Eigen::Index>(a)) * shift(probe);
  }
  std::vector<double> re(n), im(n);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = samples[i].values(probe).real();
    im[i] = samples[i].values(probe).imag();
  }
  const Estimate mre = weighted_expectation(cooked.log_weights, re);
  const Estimate mim = weighted_expectation(cooked.log_weights, im);
  ctx.report->criteria.push_back(within_se("cooked_mean_re", mre.value, analytic.real(), mre.standard_error, k));
  ctx.report->criteria.push_back(within_se("cooked_mean_im", mim.value, analytic.imag(), mim.standard_error, k));

  // frozen eigenstate: the shift reduces to a box integral of the propagator
  CVector frozen(2);
  frozen << 1.0, 0.0;
  const CVector shift = beable_shift(phase, QuantumState(frozen), samples.front(), steps);
  double worst = 0.0;
  const double dist = num(p, "distance");
  for (std::size_t cell = 0; cell < steps; ++cell)
    for (std::size_t site = 0; site < 2; ++site) {
      const double r = site == 0 ? 0.0 : dist;
      const double a1 = h * static_cast<double>(cell);
      const Complex box = box_integral(spec, r, a1, a1 + h, 0.0, h * static_cast<double>(steps));
      const Complex expected = Complex(0.0, 1.0 / h) * spec.coupling * box;
      const Complex got = shift(static_cast<Eigen::Index>(cell * 2 + site));
      worst = std::max(worst, std::abs(got - expected) / std::abs(expected));
    }
  CriterionResult fs;
  fs.name = "frozen_shift";
  fs.value = worst;
  fs.tolerance = num(p, "shift_tolerance");
  fs.passed = worst <= fs.tolerance;
  fs.detail = "largest relative deviation of the shift from the propagator box integral";
  ctx.report->criteria.push_back(fs);

  // boundary reweighting onto the first site recovers its population
  CMatrix rho_out = CMatrix::Zero(2, 2);
  rho_out(0, 0) = 1.0;
  const WeightedFieldEnsemble bound = boundary_reweight(phase, psi0, samples, steps, rho_out);
  const Estimate bmean = mean_estimate(bound.weights());
  ctx.report->criteria.push_back(within_se("boundary_weight_mean", bmean.value, pops(0), bmean.standard_error, k));
  ctx.report->tables["effective_sample_size"] = {cooked.effective_sample_size(), bound.effective_sample_size()};
}

void run_omega_table(const json& p, Context& ctx) {
  PropagatorSpec spec = propagator_from(p);
  const double t = num(p, "time"), rmin = num(p, "rmin"), rmax = num(p, "rmax");
  const std::size_t points = count(p, "points");
  if (!(rmin > 0.0 && rmax > rmin) || points < 2) config_error("need 0 < rmin < rmax and at least two points");
  {
    std::ofstream out(output_path(ctx, "omega_table.csv"));
    out << "r,omega_inf,omega_t,G\n";
    out.precision(17);
    const double g0 = regulated_g(spec, 0.0, t);
    for (std::size_t i = 0; i < points; ++i) {
      const double r = rmin * std::pow(rmax / rmin, static_cast<double>(i) / static_cast<double>(points - 1));
      const double g = regulated_g(spec, r, t);
      out << r << ',' << omega_infinity(spec, r) << ',' << 0.5 * spec.coupling * spec.coupling * (g - g0) << ',' << g
          << '\n';
    }
  }
  const double r = num(p, "check_distance");
  const double transient = omega_from_quadrature(spec, r, t);
  const double infinite = omega_infinity(spec, r);
  ctx.report->criteria.push_back(within_relative("transient_vs_infinite", transient, infinite, num(p, "transient_tolerance")));
  const double plateau = -spec.coupling * spec.coupling * std::log(spec.cutoff_mass / spec.boson_mass) / (4.0 * kPi * kPi);
  ctx.report->criteria.push_back(within_relative("plateau", transient, plateau, num(p, "plateau_tolerance")));
  PropagatorSpec wide = spec;
  wide.cutoff_mass = num(p, "log_cutoff_mass") * spec.boson_mass;
  const double rm = 1.0 / std::sqrt(spec.boson_mass * wide.cutoff_mass);
  const double law = -spec.coupling * spec.coupling * std::log(rm * wide.cutoff_mass) / (4.0 * kPi * kPi);
  ctx.report->criteria.push_back(within_relative("log_law", omega_infinity(wide, rm), law, num(p, "log_tolerance")));
}

void run_delta_metric(const json& p, Context& ctx) {
  const PropagatorSpec spec = propagator_from(p);
  const auto radii = numbers(p, "radii");
  const auto times = numbers(p, "times");
  const std::size_t steps = count(p, "n_steps"), n = count(p, "samples");
  const double k = num(p, "tolerance_se");
  std::vector<DeltaMetricResult> rows;
  std::uint64_t idx = 0;
  for (double r : radii)
    for (double t : times) {
      rows.push_back(delta_metric_mc(spec, r, t, steps, n, stream_seed(ctx.seed, idx++), ctx.threads));
      const auto& row = rows.back();
      std::ostringstream name;
      name << "delta_r" << r << "_t" << t;
      ctx.report->criteria.push_back(within_se(name.str(), row.delta_mc, row.delta_analytic, row.standard_error, k));
    }
  std::ofstream out(output_path(ctx, "delta_metric.csv"));
  write_delta_csv(out, rows);
  json plateau = json::array();
  for (const auto& rep : transient_plateau_check(spec, radii, times))
    plateau.push_back({{"r", rep.r},
                       {"times", rep.times},
                       {"omega", rep.omega},
                       {"omega_infinity", rep.omega_infinity},
                       {"non_positive", rep.non_positive},
                       {"monotone", rep.monotone},
                       {"final_relative_gap", rep.final_relative_gap}});
  ctx.report->tables["plateau"] = plateau;
}

void run_quartic_reweight(const json& p, Context& ctx) {
  const std::size_t points = count(p, "points");
  if (points == 0) config_error("points must be positive");
  const double rho = num(p, "correlation"), scale = num(p, "relation_scale"), phase = num(p, "relation_phase");
  const auto d = static_cast<Eigen::Index>(points);
  CMatrix cov(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) cov(i, j) = std::pow(rho, std::abs(static_cast<double>(i - j)));
  const KernelPair pair{cov, scale * std::polar(1.0, phase) * cov};
  const SamplingFactor factor = factor_kernel(pair);
  const std::size_t n = count(p, "samples");
  const auto samples = sample_fields(factor, ctx.seed, n, ctx.threads);
  const double vol = num(p, "volume");
  std::vector<double> obs(n);
  for (std::size_t i = 0; i < n; ++i) obs[i] = std::norm(samples[i].values(0));

  // lambda = 0 leaves the ensemble unchanged
  const WeightedFieldEnsemble same = reweight_quartic(samples, {0.0, 0.0, vol});
  double max_log = 0.0;
  for (double lw : same.log_weights) max_log = std::max(max_log, std::abs(lw));
  const Estimate plain = mean_estimate(obs);
  const Estimate weighted = weighted_expectation(same.log_weights, obs);
  CriterionResult id;
  id.name = "lambda_zero_identity";
  id.value = std::abs(weighted.value - plain.value) + max_log;
  id.passed = id.value == 0.0;
  id.detail = "weights and weighted mean at zero coupling";
  ctx.report->criteria.push_back(id);

  // derivative in lambda at zero: symmetric difference of reweighted means
  const double step = num(p, "lambda_step"), eps = num(p, "epsilon");
  const WeightedFieldEnsemble up = reweight_quartic(samples, {step, eps, vol});
  const WeightedFieldEnsemble down = reweight_quartic(samples, {-step, eps, vol});
  const double fd = (weighted_expectation(up.log_weights, obs).value - weighted_expectation(down.log_weights, obs).value) /
                    (2.0 * step);
  // Wick: Cov(|xi_0|^2, Im xi_x^4) = Im(12 S_0x G_x0 S_xx)
  double analytic = 0.0;
  for (Eigen::Index x = 0; x < d; ++x)
    analytic += 2.0 * vol * (12.0 * pair.relation(0, x) * pair.covariance(x, 0) * pair.relation(x, x)).imag();
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = quartic_log_weight(samples[i].values, {1.0, 0.0, vol});
  const double mo = mean_estimate(obs).value, ma = mean_estimate(a).value;
  std::vector<double> prod(n);
  for (std::size_t i = 0; i < n; ++i) prod[i] = (obs[i] - mo) * (a[i] - ma);
  const Estimate cov_est = mean_estimate(prod);
  ctx.report->criteria.push_back(within_se("first_order_derivative", fd, analytic, cov_est.standard_error, num(p, "tolerance_se")));

  const double bound = quartic_log_weight_bound(points, {step, eps, vol});
  double top = -std::numeric_limits<double>::infinity();
  for (double lw : up.log_weights) top = std::max(top, lw);
  for (double lw : down.log_weights) top = std::max(top, lw);
  CriterionResult b;
  b.name = "weight_bound";
  b.value = top;
  b.target = bound;
  b.passed = top <= bound;
  b.detail = "largest log weight against the analytic bound";
  ctx.report->criteria.push_back(b);
  ctx.report->tables["effective_sample_size"] = {up.effective_sample_size(), down.effective_sample_size()};
}

}  // namespace

const char* to_string(ScenarioKind kind) {
  for (const auto& [k, name] : scenario_names())
    if (k == kind) return name;
  return "unknown";
}

ScenarioKind scenario_from_string(const std::string& name) {
  for (const auto& [k, n] : scenario_names())
    if (name == n) return k;
  config_error("unknown scenario '" + name + "'");
}

ScenarioConfig ScenarioConfig::from_json(const json& j) {
  if (!j.is_object()) config_error("config must be a JSON object");
  static const std::vector<std::string> allowed = {"schema_version", "scenario", "seed", "threads", "output", "params"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      config_error("unknown config key '" + it.key() + "'");
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
    config_error("schema_version is required");
  if (j["schema_version"].get<int>() != kConfigSchemaVersion)
    config_error("unsupported schema_version " + std::to_string(j["schema_version"].get<int>()));
  if (!j.contains("scenario") || !j["scenario"].is_string()) config_error("scenario is required");
  const auto non_negative_integer = [](const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  };
  if (!j.contains("seed") || !non_negative_integer(j["seed"])) config_error("a non-negative integer master seed is required");
  ScenarioConfig c;
  c.kind = scenario_from_string(j["scenario"].get<std::string>());
  c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("threads")) {
    if (!non_negative_integer(j["threads"]) || j["threads"].get<unsigned>() == 0)
      config_error("threads must be a positive integer");
    c.threads = j["threads"].get<unsigned>();
  }
  if (j.contains("output")) {
    const json& o = j["output"];
    if (!o.is_object()) config_error("output must be an object");
    for (auto it = o.begin(); it != o.end(); ++it)
      if (it.key() != "dir") config_error("unknown output key '" + it.key() + "'");
    if (o.contains("dir")) {
      if (!o["dir"].is_string()) config_error("output.dir must be a string");
      c.output_dir = o["dir"].get<std::string>();
    }
  }
  c.params = merged_params(c.kind, j.contains("params") ? j["params"] : json());
  c.raw = j;
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    config_error(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

std::string ScenarioConfig::hash() const {
  json canonical;
  canonical["schema_version"] = kConfigSchemaVersion;
  canonical["scenario"] = to_string(kind);
  canonical["seed"] = seed;
  canonical["params"] = params;
  return hex64(fnv1a(canonical.dump()));
}

bool RunReport::passed() const {
  return !criteria.empty() && std::all_of(criteria.begin(), criteria.end(), [](const CriterionResult& c) { return c.passed; });
}

namespace {

json criterion_json(const CriterionResult& c) {
  return {{"name", c.name},         {"passed", c.passed},       {"value", c.value},    {"target", c.target},
          {"tolerance", c.tolerance}, {"standard_error", c.standard_error}, {"detail", c.detail}};
}

}  // namespace

std::string RunReport::content_hash() const {
  json j;
  j["scenario"] = scenario;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  json crit = json::array();
  for (const auto& c : criteria) crit.push_back(criterion_json(c));
  j["criteria"] = crit;
  j["tables"] = tables;
  return hex64(fnv1a(j.dump()));
}

json RunReport::to_json() const {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["scenario"] = scenario;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["passed"] = passed();
  json crit = json::array();
  for (const auto& c : criteria) crit.push_back(criterion_json(c));
  j["criteria"] = crit;
  j["tables"] = tables;
  j["outputs"] = outputs;
  j["wall_time_seconds"] = wall_time;
  j["report_hash"] = content_hash();
  return j;
}

RunReport RunReport::from_json(const json& j) {
  RunReport r;
  try {
    r.scenario = j.at("scenario").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& c : j.at("criteria")) {
      CriterionResult cr;
      cr.name = c.at("name").get<std::string>();
      cr.passed = c.at("passed").get<bool>();
      cr.value = c.at("value").get<double>();
      cr.target = c.at("target").get<double>();
      cr.tolerance = c.at("tolerance").get<double>();
      cr.standard_error = c.at("standard_error").get<double>();
      cr.detail = c.at("detail").get<std::string>();
      r.criteria.push_back(std::move(cr));
    }
    r.tables = j.at("tables");
    r.outputs = j.at("outputs").get<std::vector<std::string>>();
    r.wall_time = j.at("wall_time_seconds").get<double>();
  } catch (const json::exception& e) {
    config_error(std::string("malformed report: ") + e.what());
  }
  return r;
}

void write_report_csv(std::ostream& out, const RunReport& report) {
  out << "name,passed,value,target,tolerance,standard_error\n";
  out.precision(17);
  for (const auto& c : report.criteria)
    out << c.name << ',' << (c.passed ? 1 : 0) << ',' << c.value << ',' << c.target << ',' << c.tolerance << ','
        << c.standard_error << '\n';
}

std::string resolve_output_dir(const ScenarioConfig& config, const RunOverrides& overrides) {
  if (overrides.output_dir && !overrides.output_dir->empty()) return *overrides.output_dir;
  if (const char* env = std::getenv("BEABLES_OUT_DIR"); env != nullptr && *env != '\0') return env;
  if (!config.output_dir.empty()) return config.output_dir;
  return "beables_out";
}

RunReport run_experiment(ScenarioConfig config, const RunOverrides& overrides) {
  if (overrides.seed) config.seed = *overrides.seed;
  if (overrides.threads) {
    if (*overrides.threads == 0) config_error("threads must be positive");
    config.threads = *overrides.threads;
  }
  RunReport report;
  report.scenario = to_string(config.kind);
  report.config_hash = config.hash();
  report.seed = config.seed;
  Context ctx{config.seed, config.threads, resolve_output_dir(config, overrides), &report};
  const auto start = std::chrono::steady_clock::now();
  try {
    switch (config.kind) {
      case ScenarioKind::CslUnraveling: run_csl_unraveling(config.params, ctx); break;
      case ScenarioKind::BornRule: run_born_rule(config.params, ctx); break;
      case ScenarioKind::AmplificationCsl: run_amplification_csl(config.params, ctx); break;
      case ScenarioKind::NonmarkovUnraveling: run_nonmarkov_unraveling(config.params, ctx); break;
      case ScenarioKind::BeableStats: run_beable_stats(config.params, ctx); break;
      case ScenarioKind::OmegaTable: run_omega_table(config.params, ctx); break;
      case ScenarioKind::DeltaMetric: run_delta_metric(config.params, ctx); break;
      case ScenarioKind::QuarticReweight: run_quartic_reweight(config.params, ctx); break;
    }
  } catch (const json::exception& e) {
    config_error(std::string("bad parameter: ") + e.what());
  }
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string emit_report(const RunReport& report, const std::string& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + directory + ": " + ec.message());
  const std::string path = (std::filesystem::path(directory) / "report.json").string();
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << report.to_json().dump(2) << '\n';
  if (!out) fail(ErrorKind::IoError, "failed writing " + path);
  const std::string csv = (std::filesystem::path(directory) / "report.csv").string();
  std::ofstream table(csv);
  if (!table) fail(ErrorKind::IoError, "cannot write " + csv);
  write_report_csv(table, report);
  return path;
}

}  // namespace beables
