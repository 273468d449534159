#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "beables/gaussian_field.hpp"
#include "beables/hilbert.hpp"
#include "beables/propagators.hpp"
#include "beables/stats.hpp"

namespace beables {

// Choice of relation kernel S = E[xi xi]. Feynman is the symmetric
// time-ordered kernel built from the covariance; for a real covariance it
// coincides with the covariance itself.
enum class RelationMode { Zero, Feynman, NegativeFeynman, Custom };

const char* to_string(RelationMode mode);
RelationMode relation_mode_from_string(const std::string& name);

// Kernels integrated over spacetime cells of width h, time-major index
// n * n_sites + k.
struct SpacetimeKernel {
  std::size_t n_sites = 0;
  std::size_t n_steps = 0;
  double h = 0.0;
  RelationMode mode = RelationMode::Zero;
  CMatrix covariance;        // int int D
  CMatrix ordered;           // int int theta(tau - s) D
  CMatrix relation;          // int int S
  CMatrix ordered_relation;  // int int theta(tau - s) S

  std::size_t size() const { return n_sites * n_steps; }
  void validate() const;
  std::string hash() const;

  static SpacetimeKernel from_cells(const CellKernel& cells, std::size_t n_sites, std::size_t n_steps, double h,
                                    RelationMode mode);
  // Regulated boson kernel over the given sites.
  static SpacetimeKernel regulated(const PropagatorSpec& spec, const std::vector<Point3>& sites,
                                   std::size_t n_steps, double h, RelationMode mode);
  // White kernel delta(t - s) delta_xy / volume.
  static SpacetimeKernel white(std::size_t n_sites, std::size_t n_steps, double h, double volume, RelationMode mode);
  // Supply S and its time-ordered part explicitly.
  static SpacetimeKernel custom(const CellKernel& cells, std::size_t n_sites, std::size_t n_steps, double h,
                                CMatrix relation, CMatrix ordered_relation);

  // Cell-average statistics of xi, used for sampling.
  KernelPair field_pair() const;
};

// Coupling operators j(x) diagonal in the configuration basis. Entry (a, k)
// is the eigenvalue on basis state a of a^3 j(x_k).
class InfluencePhase {
 public:
  InfluencePhase(SpacetimeKernel kernel, RMatrix couplings);

  const SpacetimeKernel& kernel() const { return kernel_; }
  const RMatrix& couplings() const { return couplings_; }
  std::size_t dimension() const { return static_cast<std::size_t>(couplings_.rows()); }

  // Coupling vector of basis state a over the first n_steps cells.
  RVector source(std::size_t a, std::size_t n_steps) const;
  // int int theta (D - S) contracted with the sources of a, over n_steps cells
  Complex memory_exponent(std::size_t a, std::size_t n_steps) const;

 private:
  SpacetimeKernel kernel_;
  RMatrix couplings_;
};

// g times the particle count of each configuration at each site.
RMatrix point_couplings(const LatticeGrid& grid, const ConfigurationBasis& basis, double coupling);
// Couplings sqrt(gamma) a^3 M(x) for collapse operators diagonal in the basis.
RMatrix density_couplings(const CollapseOperatorSet& collapse, double gamma);

// Exact influence-functional evolution of rho over the first n_steps cells.
DensityMatrix influence_phase_apply(const InfluencePhase& phase, const DensityMatrix& rho, std::size_t n_steps);

// Sampler for the auxiliary noise eta with E[eta eta^T] equal to the
// symmetrized time-ordered (D - S) kernel and E[eta conj(eta)] unconstrained.
class MemoryNoise {
 public:
  explicit MemoryNoise(const SpacetimeKernel& kernel);
  // cell-average values
  void sample(RandomStream& rng, CVector& out) const;
  FieldSample sample(std::uint64_t seed) const;
  const CMatrix& target() const { return target_; }
  bool trivial() const { return columns_.cols() == 0; }

 private:
  CMatrix columns_;
  CMatrix target_;
  double h_;
};

// One cell of the linear evolution driven by xi + eta (cell averages).
QuantumState step_linear_nonmarkov(const QuantumState& psi, const FieldSample& xi, const FieldSample& eta,
                                   const InfluencePhase& phase, std::size_t step);
// All n_steps cells.
QuantumState evolve_linear_nonmarkov(const QuantumState& psi0, const FieldSample& xi, const FieldSample& eta,
                                     const InfluencePhase& phase, std::size_t n_steps);
// Linear state with the memory term in closed form (no auxiliary noise).
QuantumState closed_form_state(const InfluencePhase& phase, const FieldSample& xi, const QuantumState& psi0,
                               std::size_t n_steps);

struct UnravelingSample {
  FieldSample xi, eta, eta_prime;
};

// Per-sample estimators (psi psi'^+ + psi' psi^+)/2 at n_steps.
std::vector<CMatrix> unraveling_estimators(const InfluencePhase& phase, const QuantumState& psi0,
                                           std::size_t n_steps, std::size_t count, std::uint64_t master_seed,
                                           unsigned threads = 1);

// xi drawn from the a priori measure, weighted by |psi_xi(t)|^2.
WeightedFieldEnsemble girsanov_field_measure(const InfluencePhase& phase, const QuantumState& psi0,
                                             const std::vector<FieldSample>& samples, std::size_t n_steps);

enum class ShiftWindow { FinalTime, Running };

// Imaginary shift i int D <j> of the beable field given xi, cell averages
// over the full lattice. Running restricts the source integral to earlier
// cells. Needs S = 0.
CVector beable_shift(const InfluencePhase& phase, const QuantumState& psi0, const FieldSample& xi,
                     std::size_t n_steps, ShiftWindow window = ShiftWindow::FinalTime);

// Final-time weight <psi_xi(t)| rho_out |psi_xi(t)>.
WeightedFieldEnsemble boundary_reweight(const InfluencePhase& phase, const QuantumState& psi0,
                                        const std::vector<FieldSample>& samples, std::size_t n_steps,
                                        const CMatrix& rho_out);

// Weighted estimate of E[f] under log weights, with delta-method SE.
Estimate weighted_expectation(const std::vector<double>& log_weights, const std::vector<double>& values);

// Binary field dump plus JSON manifest; `append_checkpoint` resumes from
// the number of samples already stored.
struct CheckpointManifest {
  std::string kernel_hash;
  std::uint64_t master_seed = 0;
  std::size_t n_points = 0;
  std::size_t completed = 0;
};

void write_fields(const std::string& path, const std::vector<FieldSample>& samples);
std::vector<FieldSample> read_fields(const std::string& path, std::uint64_t master_seed = 0,
                                     std::size_t first_index = 0);

class FieldCheckpoint {
 public:
  FieldCheckpoint(std::string directory, std::string kernel_hash, std::uint64_t master_seed, std::size_t n_points);
  // Samples stored so far (0 when no checkpoint exists).
  std::size_t completed() const { return manifest_.completed; }
  void append(const std::vector<FieldSample>& samples);
  std::vector<FieldSample> load() const;
  const CheckpointManifest& manifest() const { return manifest_; }

 private:
  void save_manifest() const;
  std::string directory_;
  CheckpointManifest manifest_;
};

// Draws `count` samples, skipping those already in the checkpoint.
std::vector<FieldSample> sample_with_checkpoint(const SamplingFactor& factor, FieldCheckpoint& checkpoint,
                                                std::size_t count, std::size_t chunk = 1000, unsigned threads = 1);

}  // namespace beables
