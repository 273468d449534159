#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "beables/types.hpp"

namespace beables {

// Spatial lattice plus the time discretization used by the stochastic
// integrators. Points are arbitrary but distinct.
class LatticeGrid {
 public:
  LatticeGrid(std::vector<Point3> points, double spacing, double time_step, std::size_t n_steps);

  // Evenly spaced points along x starting at the origin.
  static LatticeGrid line(std::size_t n_points, double spacing, double time_step, std::size_t n_steps);
  // Regular box of nx*ny*nz points with the first point at `origin`.
  static LatticeGrid box(std::size_t nx, std::size_t ny, std::size_t nz, double spacing, Point3 origin,
                         double time_step, std::size_t n_steps);

  const std::vector<Point3>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double spacing() const { return spacing_; }
  double time_step() const { return time_step_; }
  std::size_t n_steps() const { return n_steps_; }
  double volume_element() const { return spacing_ * spacing_ * spacing_; }

  // Index of the grid point within `tolerance` of p, or -1.
  long find(const Point3& p, double tolerance = 1e-9) const;

 private:
  std::vector<Point3> points_;
  double spacing_;
  double time_step_;
  std::size_t n_steps_;
};

struct Configuration {
  std::vector<Point3> positions;
  std::vector<double> masses;
};

// Basis of many-particle position configurations; basis state i is the
// product state with particle k at configurations()[i].positions[k].
class ConfigurationBasis {
 public:
  explicit ConfigurationBasis(std::vector<Configuration> configurations);

  // One particle of the given mass on every grid point.
  static ConfigurationBasis single_particle(const LatticeGrid& grid, double mass);

  const std::vector<Configuration>& configurations() const { return configurations_; }
  std::size_t dimension() const { return configurations_.size(); }

 private:
  std::vector<Configuration> configurations_;
};

enum class OperatorLabel { MassDensity, NumberDensity, Coupling, Hamiltonian, Generic };

// Operator attached to a lattice site. Diagonal operators keep only the
// diagonal, which is what every density built here produces.
class LatticeOperator {
 public:
  static LatticeOperator diagonal(RVector entries, OperatorLabel label, long site = -1);
  static LatticeOperator dense(CMatrix entries, OperatorLabel label, long site = -1);

  bool is_diagonal() const { return is_diagonal_; }
  std::size_t dimension() const;
  OperatorLabel label() const { return label_; }
  long site() const { return site_; }
  const RVector& diagonal_entries() const { return diagonal_; }
  CMatrix to_dense() const;
  bool is_hermitian(double tolerance = 1e-12) const;

 private:
  LatticeOperator() = default;
  RVector diagonal_;
  CMatrix dense_;
  bool is_diagonal_ = true;
  OperatorLabel label_ = OperatorLabel::Generic;
  long site_ = -1;
};

// Family of collapse operators indexed by lattice point, with the cell
// volume that weights sums over points.
struct CollapseOperatorSet {
  std::vector<LatticeOperator> operators;
  double volume_element = 1.0;

  bool all_diagonal() const;
  std::size_t dimension() const;
  // Rows: basis states, columns: lattice points. Requires diagonal operators.
  RMatrix diagonal_table() const;
};

class QuantumState {
 public:
  QuantumState() = default;
  explicit QuantumState(CVector amplitudes);

  const CVector& amplitudes() const { return amplitudes_; }
  std::size_t dimension() const { return static_cast<std::size_t>(amplitudes_.size()); }
  double norm_squared() const { return norm_squared_; }
  QuantumState normalized() const;
  CMatrix projector() const { return amplitudes_ * amplitudes_.adjoint(); }

 private:
  CVector amplitudes_;
  double norm_squared_ = 0.0;
};

class DensityMatrix {
 public:
  DensityMatrix() = default;
  // Requires a square Hermitian matrix (relative tolerance 1e-10).
  explicit DensityMatrix(CMatrix matrix);
  static DensityMatrix from_state(const QuantumState& psi);

  const CMatrix& matrix() const { return matrix_; }
  std::size_t dimension() const { return static_cast<std::size_t>(matrix_.rows()); }
  Complex trace() const { return matrix_.trace(); }
  double min_eigenvalue() const;
  // Unit trace and eigenvalues above -tolerance.
  bool is_physical(double tolerance = 1e-10) const;

 private:
  CMatrix matrix_;
};

// Smeared mass density: one operator per grid point.
CollapseOperatorSet build_mass_density(const LatticeGrid& grid, double sigma, const ConfigurationBasis& basis);

// Point-like particle number density delta/a^3 at each grid point. With
// `particle` >= 0 only that particle is counted.
CollapseOperatorSet build_number_density(const LatticeGrid& grid, const ConfigurationBasis& basis,
                                         long particle = -1);

// Point-like mass density sum_k m_k delta/a^3.
CollapseOperatorSet build_point_mass_density(const LatticeGrid& grid, const ConfigurationBasis& basis);

// Hopping Hamiltonian -hop * sum over nearest-neighbour pairs, for a
// single-particle basis on the grid.
CMatrix hopping_hamiltonian(const LatticeGrid& grid, const ConfigurationBasis& basis, double hop);

struct LindbladOptions {
  double tolerance = 1e-9;
  double initial_step = 1e-2;
  double min_step = 1e-14;
  std::size_t max_steps = 10000000;
};

DensityMatrix evolve_lindblad(const DensityMatrix& rho, const CMatrix& hamiltonian,
                              const CollapseOperatorSet& collapse, double gamma, double t,
                              const LindbladOptions& options = {});

double trace_distance(const CMatrix& a, const CMatrix& b);
inline double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  return trace_distance(a.matrix(), b.matrix());
}

// Ensemble of per-sample matrix estimators X_i with mean rho_hat. Returns the
// trace distance to `target` and its jackknife standard error.
struct TraceDistanceEstimate {
  double distance = 0.0;
  double standard_error = 0.0;
  CMatrix mean;
};
TraceDistanceEstimate trace_distance_jackknife(const std::vector<CMatrix>& samples, const CMatrix& target);

}  // namespace beables
