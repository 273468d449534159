#include "beables/csl.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "beables/errors.hpp"
#include "beables/parallel.hpp"

namespace beables {

CslModel::CslModel(CMatrix hamiltonian, CollapseOperatorSet collapse, double gamma, double dt, NoiseMode mode)
    : hamiltonian_(std::move(hamiltonian)), collapse_(std::move(collapse)), gamma_(gamma), dt_(dt), mode_(mode) {
  const auto n = hamiltonian_.rows();
  require(n > 0 && hamiltonian_.cols() == n, "Hamiltonian must be square");
  require(!collapse_.operators.empty(), "collapse dynamics needs at least one collapse operator");
  require(static_cast<Eigen::Index>(collapse_.dimension()) == n, "collapse operator dimension mismatch");
  if (!collapse_.all_diagonal())
    fail(ErrorKind::UnsupportedRegime, "stochastic collapse needs operators diagonal in the configuration basis");
  require(gamma_ >= 0.0 && std::isfinite(gamma_), "collapse rate must be non-negative");
  require(dt_ > 0.0 && std::isfinite(dt_), "time step must be positive");
  require(collapse_.volume_element > 0.0, "cell volume must be positive");
  table_ = collapse_.diagonal_table();
  const double max_m = table_.cwiseAbs().maxCoeff();
  const double stiffness = gamma_ * max_m * max_m * collapse_.volume_element * dt_;
  if (stiffness > 1e-2) {
    std::ostringstream msg;
    msg << "time step too large: gamma * max(M)^2 * a^3 * dt = " << stiffness << " exceeds 1e-2";
    fail(ErrorKind::InvalidParameter, msg.str());
  }
  gram_ = collapse_.volume_element * table_ * table_.transpose();
  Eigen::SelfAdjointEigenSolver<RMatrix> solver(gram_);
  gram_root_ = solver.eigenvectors() * solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  has_hamiltonian_ = hamiltonian_.cwiseAbs().maxCoeff() > 0.0;
  if (has_hamiltonian_) {
    require((hamiltonian_ - hamiltonian_.adjoint()).cwiseAbs().maxCoeff() <=
                1e-12 * std::max(1.0, hamiltonian_.cwiseAbs().maxCoeff()),
            "Hamiltonian must be Hermitian");
    Eigen::SelfAdjointEigenSolver<CMatrix> h(hamiltonian_);
    const Complex i(0.0, 1.0);
    CVector phases(n);
    for (Eigen::Index k = 0; k < n; ++k) phases(k) = std::exp(-i * 0.5 * dt_ * h.eigenvalues()(k));
    half_unitary_ = h.eigenvectors() * phases.asDiagonal() * h.eigenvectors().adjoint();
  }
}

std::size_t CslModel::channels() const {
  return mode_ == NoiseMode::PerSite ? collapse_.operators.size() : dimension();
}

RVector CslModel::draw_noise(RandomStream& rng) const {
  const auto c = static_cast<Eigen::Index>(channels());
  RVector w(c);
  const double scale = mode_ == NoiseMode::PerSite ? 1.0 / std::sqrt(dt_ * collapse_.volume_element) : 1.0;
  for (Eigen::Index k = 0; k < c; ++k) w(k) = scale * rng.normal();
  return w;
}

RVector CslModel::drive(const RVector& noise) const {
  require(static_cast<std::size_t>(noise.size()) == channels(), "noise size does not match the model");
  if (mode_ == NoiseMode::PerSite) return collapse_.volume_element * (table_ * noise);
  return gram_root_ * noise / std::sqrt(dt_);
}

void CslModel::apply_half_unitary(CVector& psi) const {
  if (has_hamiltonian_) psi = half_unitary_ * psi;
}

void advance_linear(CVector& psi, const RVector& noise, const CslModel& model) {
  model.apply_half_unitary(psi);
  const RVector v = model.drive(noise);
  const double sg = std::sqrt(model.gamma()), dt = model.dt();
  const RMatrix& g = model.gram();
  for (Eigen::Index a = 0; a < psi.size(); ++a) psi(a) *= 1.0 + (sg * v(a) - 0.5 * model.gamma() * g(a, a)) * dt;
  model.apply_half_unitary(psi);
}

QuantumState step_linear_sse(const QuantumState& psi, const RVector& noise, const CslModel& model) {
  require(psi.dimension() == model.dimension(), "state dimension mismatch");
  CVector v = psi.amplitudes();
  advance_linear(v, noise, model);
  return QuantumState(std::move(v));
}

double advance_normalized(CVector& psi, const RVector& noise, const CslModel& model) {
  model.apply_half_unitary(psi);
  const double norm2 = psi.squaredNorm();
  if (!(norm2 > 0.0) || !std::isfinite(norm2)) fail(ErrorKind::DegenerateTrajectory, "state norm vanished");
  const RVector p = psi.cwiseAbs2() / norm2;
  const RVector v = model.drive(noise);
  const RMatrix& g = model.gram();
  const double mean_v = p.dot(v);
  const RVector gp = g * p;
  const double pgp = p.dot(gp);
  const double sg = std::sqrt(model.gamma()), dt = model.dt();
  for (Eigen::Index a = 0; a < psi.size(); ++a) {
    const double centred_sq = g(a, a) - 2.0 * gp(a) + pgp;
    psi(a) *= 1.0 + (sg * (v(a) - mean_v) - 0.5 * model.gamma() * centred_sq) * dt;
  }
  const double after = psi.squaredNorm();
  if (!(after > 0.0) || !std::isfinite(after)) fail(ErrorKind::DegenerateTrajectory, "state norm vanished");
  psi /= std::sqrt(after);
  model.apply_half_unitary(psi);
  return after / norm2 - 1.0;
}

QuantumState step_normalized_sse(const QuantumState& psi, const RVector& noise, const CslModel& model) {
  require(psi.dimension() == model.dimension(), "state dimension mismatch");
  CVector v = psi.normalized().amplitudes();
  advance_normalized(v, noise, model);
  return QuantumState(std::move(v));
}

namespace {

long collapsed_onto(const CVector& psi, double threshold) {
  const double norm2 = psi.squaredNorm();
  for (Eigen::Index a = 0; a < psi.size(); ++a)
    if (std::norm(psi(a)) > threshold * norm2) return static_cast<long>(a);
  return -1;
}

Trajectory simulate(const CslModel& model, const QuantumState& psi0, std::uint64_t seed,
                    const SimulationOptions& options, TrajectoryKind kind) {
  require(psi0.dimension() == model.dimension(), "initial state dimension mismatch");
  require(options.record_every > 0, "record stride must be positive");
  RandomStream rng(seed);
  Trajectory traj;
  traj.kind = kind;
  traj.seed = seed;
  CVector psi = kind == TrajectoryKind::Normalized ? psi0.normalized().amplitudes() : psi0.amplitudes();
  traj.times.push_back(0.0);
  traj.states.emplace_back(psi);
  traj.norm_drift.push_back(0.0);
  for (std::size_t step = 1; step <= options.n_steps; ++step) {
    const RVector w = model.draw_noise(rng);
    double drift = 0.0;
    if (kind == TrajectoryKind::Linear) {
      advance_linear(psi, w, model);
    } else {
      drift = advance_normalized(psi, w, model);
    }
    if (options.keep_noise) traj.noise.push_back(w);
    const bool stop = kind == TrajectoryKind::Normalized && options.collapse_threshold > 0.0 &&
                      collapsed_onto(psi, options.collapse_threshold) >= 0;
    if (step % options.record_every == 0 || step == options.n_steps || stop) {
      traj.times.push_back(model.dt() * static_cast<double>(step));
      traj.states.emplace_back(psi);
      traj.norm_drift.push_back(drift);
    }
    if (stop) {
      traj.outcome = collapsed_onto(psi, options.collapse_threshold);
      traj.collapse_time = model.dt() * static_cast<double>(step);
      break;
    }
  }
  traj.weight = kind == TrajectoryKind::Linear ? psi.squaredNorm() : 1.0;
  if (!std::isfinite(traj.weight)) fail(ErrorKind::NumericFailure, "trajectory weight is not finite");
  return traj;
}

}  // namespace

Trajectory simulate_linear(const CslModel& model, const QuantumState& psi0, std::uint64_t seed,
                           const SimulationOptions& options) {
  return simulate(model, psi0, seed, options, TrajectoryKind::Linear);
}

Trajectory simulate_normalized(const CslModel& model, const QuantumState& psi0, std::uint64_t seed,
                               const SimulationOptions& options) {
  return simulate(model, psi0, seed, options, TrajectoryKind::Normalized);
}

Trajectory girsanov_normalize(const Trajectory& linear) {
  require(linear.kind == TrajectoryKind::Linear, "girsanov normalization needs a linear trajectory");
  Trajectory out = linear;
  out.kind = TrajectoryKind::Normalized;
  for (std::size_t k = 0; k < out.states.size(); ++k) {
    if (!(out.states[k].norm_squared() > 0.0)) fail(ErrorKind::DegenerateTrajectory, "linear state has zero norm");
    out.norm_drift[k] = out.states[k].norm_squared() - 1.0;
    out.states[k] = out.states[k].normalized();
  }
  return out;
}

std::vector<RVector> signal_field(const Trajectory& trajectory, const CslModel& model) {
  require(model.mode() == NoiseMode::PerSite, "signal field needs per-site noise");
  require(trajectory.noise.size() + 1 == trajectory.states.size(),
          "signal field needs the noise of every step and every state recorded");
  std::vector<RVector> out;
  out.reserve(trajectory.noise.size());
  for (std::size_t k = 0; k < trajectory.noise.size(); ++k) {
    if (trajectory.kind == TrajectoryKind::Linear) {
      out.push_back(trajectory.noise[k]);
      continue;
    }
    // <M(x)> at the start of the step
    const CVector& psi = trajectory.states[k].amplitudes();
    const RVector p = psi.cwiseAbs2() / psi.squaredNorm();
    const RVector mean_m = model.table().transpose() * p;
    out.push_back(2.0 * std::sqrt(model.gamma()) * mean_m + trajectory.noise[k]);
  }
  return out;
}

std::vector<Trajectory> simulate_ensemble(const CslModel& model, const QuantumState& psi0, std::uint64_t master_seed,
                                          std::size_t count, TrajectoryKind kind, const SimulationOptions& options,
                                          unsigned threads) {
  std::vector<Trajectory> out(count);
  parallel_for(count, threads, [&](std::size_t i) {
    out[i] = simulate(model, psi0, stream_seed(master_seed, i), options, kind);
  });
  return out;
}

std::vector<CMatrix> density_samples(const std::vector<Trajectory>& ensemble, std::size_t record) {
  require(!ensemble.empty(), "empty ensemble");
  const std::size_t n = ensemble.size();
  std::vector<CMatrix> out(n);
  if (ensemble.front().kind == TrajectoryKind::Linear) {
    for (std::size_t i = 0; i < n; ++i) {
      require(record < ensemble[i].states.size(), "record index out of range");
      out[i] = ensemble[i].states[record].projector();
    }
    return out;
  }
  const double wsum = pairwise_sum<double>(0, n, [&](std::size_t i) { return ensemble[i].weight; });
  if (!(wsum > 0.0)) fail(ErrorKind::DegenerateEnsemble, "total weight is not positive");
  for (std::size_t i = 0; i < n; ++i) {
    require(record < ensemble[i].states.size(), "record index out of range");
    out[i] = (ensemble[i].weight * static_cast<double>(n) / wsum) * ensemble[i].states[record].projector();
  }
  return out;
}

MartingaleReport martingale_check(const std::vector<Trajectory>& ensemble, const RVector& observable,
                                  double tolerance_se) {
  require(ensemble.size() >= 2, "martingale check needs an ensemble");
  const std::size_t records = ensemble.front().states.size();
  for (const auto& t : ensemble) require(t.states.size() == records, "trajectories must share recording times");
  auto expect = [&](const QuantumState& s) {
    return (s.amplitudes().cwiseAbs2().dot(observable)) / s.norm_squared();
  };
  MartingaleReport report;
  report.initial = expect(ensemble.front().states.front());
  report.times = ensemble.front().times;
  report.passed = true;
  for (std::size_t k = 0; k < records; ++k) {
    std::vector<double> values(ensemble.size()), weights(ensemble.size());
    for (std::size_t i = 0; i < ensemble.size(); ++i) {
      values[i] = expect(ensemble[i].states[k]);
      weights[i] = ensemble[i].weight;
    }
    const Estimate e = weighted_mean(values, weights);
    report.means.push_back(e);
    // rounding-level deviations count as exact agreement
    const double dev = std::abs(e.value - report.initial);
    const double floor = 1e-12 * std::max(1.0, std::abs(report.initial));
    const double z = dev <= floor ? 0.0 : (e.standard_error > 0.0 ? dev / e.standard_error : 1e300);
    report.max_deviation = std::max(report.max_deviation, z);
    if (z > tolerance_se) report.passed = false;
  }
  return report;
}

BornReport born_statistics(const std::vector<Trajectory>& ensemble, const std::vector<double>& expected) {
  require(!ensemble.empty() && !expected.empty(), "Born statistics need outcomes and expectations");
  BornReport report;
  report.expected = expected;
  report.counts.assign(expected.size(), 0);
  for (const auto& t : ensemble) {
    if (t.outcome < 0) {
      ++report.undecided;
    } else {
      require(static_cast<std::size_t>(t.outcome) < expected.size(), "outcome outside the expected table");
      ++report.counts[static_cast<std::size_t>(t.outcome)];
    }
  }
  const double n = static_cast<double>(ensemble.size());
  const double decided = n - static_cast<double>(report.undecided);
  for (std::size_t k = 0; k < expected.size(); ++k) {
    const double f = static_cast<double>(report.counts[k]) / n;
    report.frequencies.push_back({f, std::sqrt(f * (1.0 - f) / n)});
    if (expected[k] > 0.0) {
      const double e = expected[k] * decided;
      const double d = static_cast<double>(report.counts[k]) - e;
      report.chi_squared += d * d / e;
    }
  }
  report.p_value = expected.size() > 1 ? chi_squared_p_value(report.chi_squared, static_cast<double>(expected.size() - 1)) : 1.0;
  return report;
}

CatSystem build_cat(const CatSpec& spec) {
  require(spec.particles >= 1, "cat needs at least one particle per branch");
  require(spec.sigma > 0.0 && spec.spacing > 0.0 && spec.mass > 0.0, "cat needs positive sigma, spacing and mass");
  require(spec.separation > 0.0, "branch separation must be positive");
  const double half_width = 0.5 * spec.intra_spacing * static_cast<double>(spec.particles - 1);
  const double reach = spec.margin * spec.sigma;
  auto count = [&](double extent) { return static_cast<std::size_t>(std::ceil(extent / spec.spacing)) + 1; };
  const std::size_t nx = count(spec.separation + 2.0 * reach);
  const std::size_t ny = count(2.0 * (reach + half_width));
  const std::size_t nz = count(2.0 * reach);
  LatticeGrid grid = LatticeGrid::box(nx, ny, nz, spec.spacing, {-reach, -reach - half_width, -reach}, 1.0, 0);
  Configuration left, right;
  for (std::size_t k = 0; k < spec.particles; ++k) {
    const double y = -half_width + spec.intra_spacing * static_cast<double>(k);
    left.positions.push_back({0.0, y, 0.0});
    right.positions.push_back({spec.separation, y, 0.0});
    left.masses.push_back(spec.mass);
    right.masses.push_back(spec.mass);
  }
  ConfigurationBasis basis({left, right});
  CollapseOperatorSet collapse = build_mass_density(grid, spec.sigma, basis);
  return {std::move(grid), std::move(basis), std::move(collapse)};
}

AmplificationResult amplification_rate(const CatSpec& spec, const AmplificationOptions& options) {
  require(options.gamma > 0.0, "collapse rate must be positive");
  require(options.points >= 5, "rate fit needs at least five points");
  require(options.horizon > 0.0, "fit horizon must be positive");
  const CatSystem cat = build_cat(spec);
  const RMatrix table = cat.collapse.diagonal_table();
  const RMatrix gram = cat.collapse.volume_element * table * table.transpose();
  AmplificationResult out;
  out.particles = spec.particles;
  out.predicted_rate = 0.5 * options.gamma * (gram(0, 0) + gram(1, 1) - 2.0 * gram(0, 1));
  require(out.predicted_rate > 0.0, "branches are indistinguishable to the collapse operators");
  const double t_end = options.horizon / out.predicted_rate;
  const double dt_fit = t_end / static_cast<double>(options.points);

  CVector psi0(2);
  psi0 << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  if (options.method == AmplificationMethod::Lindblad) {
    DensityMatrix rho = DensityMatrix::from_state(QuantumState(psi0));
    const CMatrix h0 = CMatrix::Zero(2, 2);
    for (std::size_t j = 0; j <= options.points; ++j) {
      if (j > 0) rho = evolve_lindblad(rho, h0, cat.collapse, options.gamma, dt_fit);
      out.times.push_back(dt_fit * static_cast<double>(j));
      out.coherence.push_back(std::abs(rho.matrix()(0, 1)));
    }
  } else {
    // sub-steps per fit interval keep rate * dt <= 5e-3
    const auto sub = static_cast<std::size_t>(std::ceil(dt_fit * out.predicted_rate / 5e-3));
    const double dt = dt_fit / static_cast<double>(sub);
    const CslModel model(CMatrix::Zero(2, 2), cat.collapse, options.gamma, dt, NoiseMode::Projected);
    SimulationOptions sim;
    sim.n_steps = sub * options.points;
    sim.record_every = sub;
    const auto ensemble = simulate_ensemble(model, QuantumState(psi0), options.seed, options.ensemble,
                                            TrajectoryKind::Normalized, sim, options.threads);
    for (std::size_t j = 0; j <= options.points; ++j) {
      const CMatrix rho = mean_matrix(density_samples(ensemble, j));
      out.times.push_back(ensemble.front().times[j]);
      out.coherence.push_back(std::abs(rho(0, 1)));
    }
  }

  const auto skip = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(out.times.size())));
  std::vector<double> x, y;
  for (std::size_t j = skip; j < out.times.size(); ++j) {
    if (out.coherence[j] < 1e-6) continue;
    x.push_back(out.times[j]);
    y.push_back(std::log(out.coherence[j]));
  }
  if (x.size() < 3) throw FitError("too few points above the coherence floor", x, y, 0.0);
  const LinearFit fit = fit_line(x, y);
  out.rate = -fit.slope;
  out.r_squared = fit.r_squared;
  if (fit.r_squared < 0.99) {
    std::ostringstream msg;
    msg << "coherence decay is not exponential (R^2 = " << fit.r_squared << ")";
    throw FitError(msg.str(), x, y, fit.r_squared);
  }
  return out;
}

void write_trajectory_csv(std::ostream& out, const std::vector<Trajectory>& ensemble, const CslModel& model,
                          const std::vector<std::size_t>& probes) {
  out << "seed,t,weight";
  for (std::size_t p : probes) out << ",M_" << p;
  out << ",norm_error\n";
  out.precision(17);
  const RMatrix& table = model.table();
  for (const auto& traj : ensemble) {
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
      const CVector& psi = traj.states[k].amplitudes();
      const RVector p = psi.cwiseAbs2() / psi.squaredNorm();
      out << traj.seed << ',' << traj.times[k] << ',' << traj.weight;
      for (std::size_t probe : probes) {
        require(probe < static_cast<std::size_t>(table.cols()), "probe index out of range");
        out << ',' << table.col(static_cast<Eigen::Index>(probe)).dot(p);
      }
      out << ',' << std::abs(traj.norm_drift[k]) << '\n';
    }
  }
}

}  // namespace beables
