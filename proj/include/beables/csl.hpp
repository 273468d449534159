#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "beables/hilbert.hpp"
#include "beables/rng.hpp"
#include "beables/stats.hpp"

namespace beables {

// How white noise enters a step. PerSite draws one value per lattice point
// with variance 1/(dt a^3). Projected draws the basis-space drive
// sum_x a^3 M(x) w(x) directly, which has the same law for diagonal
// collapse operators and costs one normal per basis state.
enum class NoiseMode { PerSite, Projected };

// Collapse dynamics with diagonal collapse operators and a free Hamiltonian.
class CslModel {
 public:
  CslModel(CMatrix hamiltonian, CollapseOperatorSet collapse, double gamma, double dt,
           NoiseMode mode = NoiseMode::PerSite);

  std::size_t dimension() const { return static_cast<std::size_t>(hamiltonian_.rows()); }
  std::size_t channels() const;
  double gamma() const { return gamma_; }
  double dt() const { return dt_; }
  NoiseMode mode() const { return mode_; }
  const CollapseOperatorSet& collapse() const { return collapse_; }
  // G(a, b) = sum_x a^3 m_a(x) m_b(x)
  const RMatrix& gram() const { return gram_; }
  const RMatrix& table() const { return table_; }

  // Draws one step of noise (w for the linear equation, b for the
  // normalized one; both are white under their own measure).
  RVector draw_noise(RandomStream& rng) const;
  // sum_x a^3 m_a(x) w(x) for each basis state a
  RVector drive(const RVector& noise) const;
  void apply_half_unitary(CVector& psi) const;

 private:
  CMatrix hamiltonian_;
  CollapseOperatorSet collapse_;
  double gamma_, dt_;
  NoiseMode mode_;
  RMatrix table_, gram_, gram_root_;
  CMatrix half_unitary_;
  bool has_hamiltonian_ = false;
};

// In-place Ito step of the linear equation (Euler-Maruyama for the collapse
// part, exact half steps of the free evolution on either side).
void advance_linear(CVector& psi, const RVector& noise, const CslModel& model);
QuantumState step_linear_sse(const QuantumState& psi, const RVector& noise, const CslModel& model);

// In-place step of the normalized equation; returns |psi|^2 - 1 before
// renormalization.
double advance_normalized(CVector& psi, const RVector& noise, const CslModel& model);
QuantumState step_normalized_sse(const QuantumState& psi, const RVector& noise, const CslModel& model);

enum class TrajectoryKind { Linear, Normalized };

struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::Linear;
  std::uint64_t seed = 0;
  std::vector<double> times;
  std::vector<QuantumState> states;  // recorded states
  std::vector<double> norm_drift;
  double weight = 1.0;               // final |psi|^2 for linear trajectories
  std::vector<RVector> noise;        // per step, kept on request
  long outcome = -1;                 // collapse outcome, normalized runs only
  double collapse_time = -1.0;
};

struct SimulationOptions {
  std::size_t n_steps = 0;
  std::size_t record_every = 1;
  bool keep_noise = false;
  // stop a normalized run once a basis population exceeds this (<= 0: never)
  double collapse_threshold = 0.0;
};

Trajectory simulate_linear(const CslModel& model, const QuantumState& psi0, std::uint64_t seed,
                           const SimulationOptions& options);
Trajectory simulate_normalized(const CslModel& model, const QuantumState& psi0, std::uint64_t seed,
                               const SimulationOptions& options);

// Physical-measure view of a linear trajectory: normalized states with the
// final squared norm as importance weight.
Trajectory girsanov_normalize(const Trajectory& linear);

// Signal field per recorded step and lattice point. For linear trajectories
// this is the driving noise w itself; for normalized ones 2 sqrt(gamma) <M> + b.
std::vector<RVector> signal_field(const Trajectory& trajectory, const CslModel& model);

std::vector<Trajectory> simulate_ensemble(const CslModel& model, const QuantumState& psi0, std::uint64_t master_seed,
                                          std::size_t count, TrajectoryKind kind, const SimulationOptions& options,
                                          unsigned threads = 1);

// Self-normalized density matrix estimate at recorded index k, with per-sample
// estimators (weight * n / sum(weight)) * psi psi^+ for the jackknife.
std::vector<CMatrix> density_samples(const std::vector<Trajectory>& ensemble, std::size_t record);

struct MartingaleReport {
  std::vector<double> times;
  std::vector<Estimate> means;
  double initial = 0.0;
  double max_deviation = 0.0;  // in standard errors
  bool passed = false;
};

// E[<O>_t] against <O>_0 at each recorded time, for an observable diagonal
// in the basis.
MartingaleReport martingale_check(const std::vector<Trajectory>& ensemble, const RVector& observable,
                                  double tolerance_se = 3.0);

struct BornReport {
  std::vector<double> expected;
  std::vector<std::size_t> counts;
  std::size_t undecided = 0;
  std::vector<Estimate> frequencies;
  double chi_squared = 0.0;
  double p_value = 0.0;
};
BornReport born_statistics(const std::vector<Trajectory>& ensemble, const std::vector<double>& expected);

// Two-branch cat of N particles per branch under smeared mass density.
struct CatSpec {
  std::size_t particles = 1;
  double mass = 1.0;
  double sigma = 1.0;
  double separation = 5.0;     // distance between branch centres
  double intra_spacing = 0.0;  // particle spacing inside a branch
  double spacing = 0.5;        // lattice spacing
  double margin = 4.0;         // grid extent beyond the branches, in sigma
};

struct CatSystem {
  LatticeGrid grid;
  ConfigurationBasis basis;
  CollapseOperatorSet collapse;
};
CatSystem build_cat(const CatSpec& spec);

struct AmplificationResult {
  std::size_t particles = 0;
  double rate = 0.0;
  double r_squared = 0.0;
  double predicted_rate = 0.0;
  std::vector<double> times;
  std::vector<double> coherence;
};

enum class AmplificationMethod { Lindblad, Ensemble };

struct AmplificationOptions {
  double gamma = 1.0;
  double horizon = 2.0;        // fit window, in units of 1/predicted rate
  std::size_t points = 40;
  AmplificationMethod method = AmplificationMethod::Lindblad;
  std::size_t ensemble = 10000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

// Fits the decay rate of |rho_LR(t)|; raises FitError when R^2 < 0.99.
AmplificationResult amplification_rate(const CatSpec& spec, const AmplificationOptions& options);

// CSV rows: seed, t, weight, <M(x)> per probe, norm_error
void write_trajectory_csv(std::ostream& out, const std::vector<Trajectory>& ensemble, const CslModel& model,
                          const std::vector<std::size_t>& probes);

}  // namespace beables
