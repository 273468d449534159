#include "beables/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "beables/errors.hpp"
#include "beables/parallel.hpp"

namespace beables {

LatticeGrid::LatticeGrid(std::vector<Point3> points, double spacing, double time_step, std::size_t n_steps)
    : points_(std::move(points)), spacing_(spacing), time_step_(time_step), n_steps_(n_steps) {
  require(!points_.empty(), "lattice needs at least one point");
  require(spacing_ > 0.0 && std::isfinite(spacing_), "lattice spacing must be positive");
  require(time_step_ > 0.0 && std::isfinite(time_step_), "time step must be positive");
  std::vector<Point3> sorted = points_;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    require(distance(sorted[i], sorted[i - 1]) > 1e-12 * spacing_, "lattice points must be distinct");
}

LatticeGrid LatticeGrid::line(std::size_t n_points, double spacing, double time_step, std::size_t n_steps) {
  std::vector<Point3> pts;
  for (std::size_t i = 0; i < n_points; ++i) pts.push_back({spacing * static_cast<double>(i), 0.0, 0.0});
  return LatticeGrid(std::move(pts), spacing, time_step, n_steps);
}

LatticeGrid LatticeGrid::box(std::size_t nx, std::size_t ny, std::size_t nz, double spacing, Point3 origin,
                             double time_step, std::size_t n_steps) {
  std::vector<Point3> pts;
  pts.reserve(nx * ny * nz);
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t k = 0; k < nz; ++k)
        pts.push_back({origin[0] + spacing * static_cast<double>(i), origin[1] + spacing * static_cast<double>(j),
                       origin[2] + spacing * static_cast<double>(k)});
  return LatticeGrid(std::move(pts), spacing, time_step, n_steps);
}

long LatticeGrid::find(const Point3& p, double tolerance) const {
  for (std::size_t i = 0; i < points_.size(); ++i)
    if (distance(points_[i], p) <= tolerance * spacing_) return static_cast<long>(i);
  return -1;
}

ConfigurationBasis::ConfigurationBasis(std::vector<Configuration> configurations)
    : configurations_(std::move(configurations)) {
  require(!configurations_.empty(), "basis needs at least one configuration");
  const std::size_t n = configurations_.front().positions.size();
  for (const auto& c : configurations_) {
    require(c.positions.size() == n, "all configurations need the same particle count");
    require(c.masses.size() == n, "one mass per particle");
  }
}

ConfigurationBasis ConfigurationBasis::single_particle(const LatticeGrid& grid, double mass) {
  std::vector<Configuration> configs;
  for (const auto& p : grid.points()) configs.push_back({{p}, {mass}});
  return ConfigurationBasis(std::move(configs));
}

LatticeOperator LatticeOperator::diagonal(RVector entries, OperatorLabel label, long site) {
  LatticeOperator op;
  op.diagonal_ = std::move(entries);
  op.is_diagonal_ = true;
  op.label_ = label;
  op.site_ = site;
  return op;
}

LatticeOperator LatticeOperator::dense(CMatrix entries, OperatorLabel label, long site) {
  require(entries.rows() == entries.cols(), "operator must be square");
  LatticeOperator op;
  op.dense_ = std::move(entries);
  op.is_diagonal_ = false;
  op.label_ = label;
  op.site_ = site;
  return op;
}

std::size_t LatticeOperator::dimension() const {
  return static_cast<std::size_t>(is_diagonal_ ? diagonal_.size() : dense_.rows());
}

CMatrix LatticeOperator::to_dense() const {
  if (!is_diagonal_) return dense_;
  return diagonal_.cast<Complex>().asDiagonal();
}

bool LatticeOperator::is_hermitian(double tolerance) const {
  if (is_diagonal_) return true;
  const double scale = std::max(1.0, dense_.cwiseAbs().maxCoeff());
  return (dense_ - dense_.adjoint()).cwiseAbs().maxCoeff() <= tolerance * scale;
}

bool CollapseOperatorSet::all_diagonal() const {
  return std::all_of(operators.begin(), operators.end(), [](const LatticeOperator& op) { return op.is_diagonal(); });
}

std::size_t CollapseOperatorSet::dimension() const { return operators.empty() ? 0 : operators.front().dimension(); }

RMatrix CollapseOperatorSet::diagonal_table() const {
  require(all_diagonal(), "diagonal table needs diagonal operators");
  RMatrix table(static_cast<Eigen::Index>(dimension()), static_cast<Eigen::Index>(operators.size()));
  for (std::size_t x = 0; x < operators.size(); ++x) table.col(static_cast<Eigen::Index>(x)) = operators[x].diagonal_entries();
  return table;
}

QuantumState::QuantumState(CVector amplitudes) : amplitudes_(std::move(amplitudes)) {
  require(amplitudes_.size() > 0, "state needs at least one amplitude");
  norm_squared_ = amplitudes_.squaredNorm();
  if (!std::isfinite(norm_squared_)) fail(ErrorKind::NumericFailure, "state amplitudes are not finite");
}

QuantumState QuantumState::normalized() const {
  if (!(norm_squared_ > 0.0)) fail(ErrorKind::DegenerateTrajectory, "cannot normalize a zero state");
  return QuantumState(amplitudes_ / std::sqrt(norm_squared_));
}

DensityMatrix::DensityMatrix(CMatrix matrix) : matrix_(std::move(matrix)) {
  require(matrix_.rows() == matrix_.cols() && matrix_.rows() > 0, "density matrix must be square");
  const double scale = std::max(1.0, matrix_.cwiseAbs().maxCoeff());
  require((matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff() <= 1e-10 * scale, "density matrix must be Hermitian");
}

DensityMatrix DensityMatrix::from_state(const QuantumState& psi) { return DensityMatrix(psi.projector()); }

double DensityMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(matrix_, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

bool DensityMatrix::is_physical(double tolerance) const {
  return std::abs(trace() - 1.0) <= tolerance && min_eigenvalue() >= -tolerance;
}

namespace {

long locate(const LatticeGrid& grid, const Point3& p) {
  const long idx = grid.find(p, 1e-6);
  if (idx < 0) {
    std::ostringstream msg;
    msg << "particle position (" << p[0] << ", " << p[1] << ", " << p[2] << ") is not a grid point";
    fail(ErrorKind::InvalidParameter, msg.str());
  }
  return idx;
}

CollapseOperatorSet from_table(const RMatrix& table, double volume, OperatorLabel label) {
  CollapseOperatorSet set;
  set.volume_element = volume;
  for (Eigen::Index x = 0; x < table.cols(); ++x)
    set.operators.push_back(LatticeOperator::diagonal(table.col(x), label, static_cast<long>(x)));
  return set;
}

}  // namespace

CollapseOperatorSet build_mass_density(const LatticeGrid& grid, double sigma, const ConfigurationBasis& basis) {
  require(sigma > 0.0 && std::isfinite(sigma), "smearing width must be positive");
  require(!basis.configurations().front().positions.empty(), "mass density needs at least one particle");
  const double norm = std::pow(2.0 * kPi, -1.5) / (sigma * sigma * sigma);
  const auto& pts = grid.points();
  RMatrix table = RMatrix::Zero(static_cast<Eigen::Index>(basis.dimension()), static_cast<Eigen::Index>(pts.size()));
  for (std::size_t a = 0; a < basis.dimension(); ++a) {
    const auto& config = basis.configurations()[a];
    for (std::size_t x = 0; x < pts.size(); ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < config.positions.size(); ++k) {
        const double d = distance(pts[x], config.positions[k]);
        acc += config.masses[k] * std::exp(-d * d / (2.0 * sigma * sigma));
      }
      table(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(x)) = norm * acc;
    }
  }
  return from_table(table, grid.volume_element(), OperatorLabel::MassDensity);
}

CollapseOperatorSet build_number_density(const LatticeGrid& grid, const ConfigurationBasis& basis, long particle) {
  const std::size_t n_particles = basis.configurations().front().positions.size();
  require(n_particles > 0, "number density needs at least one particle");
  require(particle < static_cast<long>(n_particles), "particle index out of range");
  const double inv_volume = 1.0 / grid.volume_element();
  RMatrix table = RMatrix::Zero(static_cast<Eigen::Index>(basis.dimension()), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t a = 0; a < basis.dimension(); ++a) {
    const auto& config = basis.configurations()[a];
    for (std::size_t k = 0; k < n_particles; ++k) {
      if (particle >= 0 && static_cast<long>(k) != particle) continue;
      table(static_cast<Eigen::Index>(a), locate(grid, config.positions[k])) += inv_volume;
    }
  }
  return from_table(table, grid.volume_element(), OperatorLabel::NumberDensity);
}

CollapseOperatorSet build_point_mass_density(const LatticeGrid& grid, const ConfigurationBasis& basis) {
  const std::size_t n_particles = basis.configurations().front().positions.size();
  require(n_particles > 0, "mass density needs at least one particle");
  const double inv_volume = 1.0 / grid.volume_element();
  RMatrix table = RMatrix::Zero(static_cast<Eigen::Index>(basis.dimension()), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t a = 0; a < basis.dimension(); ++a) {
    const auto& config = basis.configurations()[a];
    for (std::size_t k = 0; k < n_particles; ++k)
      table(static_cast<Eigen::Index>(a), locate(grid, config.positions[k])) += config.masses[k] * inv_volume;
  }
  return from_table(table, grid.volume_element(), OperatorLabel::MassDensity);
}

CMatrix hopping_hamiltonian(const LatticeGrid& grid, const ConfigurationBasis& basis, double hop) {
  require(basis.configurations().front().positions.size() == 1, "hopping needs a single-particle basis");
  const std::size_t n = basis.dimension();
  CMatrix h = CMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      const double d = distance(basis.configurations()[a].positions[0], basis.configurations()[b].positions[0]);
      if (std::abs(d - grid.spacing()) <= 1e-9 * grid.spacing()) {
        h(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = -hop;
        h(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = -hop;
      }
    }
  return h;
}

namespace {

// Right-hand side of the master equation.
class LindbladGenerator {
 public:
  LindbladGenerator(const CMatrix& hamiltonian, const CollapseOperatorSet& collapse, double gamma)
      : hamiltonian_(hamiltonian), gamma_(gamma), volume_(collapse.volume_element) {
    const auto n = hamiltonian.rows();
    diagonal_ = collapse.all_diagonal();
    if (diagonal_) {
      // decay_(i, j) = gamma/2 sum_x a^3 (m_i(x) - m_j(x))^2
      decay_ = RMatrix::Zero(n, n);
      if (!collapse.operators.empty()) {
        const RMatrix table = collapse.diagonal_table();
        const RMatrix gram = volume_ * table * table.transpose();
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < n; ++j)
            decay_(i, j) = 0.5 * gamma_ * (gram(i, i) + gram(j, j) - 2.0 * gram(i, j));
      }
    } else {
      for (const auto& op : collapse.operators) {
        dense_.push_back(op.to_dense());
        squares_.push_back(dense_.back() * dense_.back());
      }
    }
  }

  CMatrix operator()(const CMatrix& rho) const {
    const Complex i(0.0, 1.0);
    CMatrix out = -i * (hamiltonian_ * rho - rho * hamiltonian_);
    if (diagonal_) {
      out.array() -= decay_.cast<Complex>().array() * rho.array();
    } else {
      for (std::size_t x = 0; x < dense_.size(); ++x) {
        out += gamma_ * volume_ *
               (dense_[x] * rho * dense_[x] - 0.5 * (squares_[x] * rho + rho * squares_[x]));
      }
    }
    return out;
  }

 private:
  CMatrix hamiltonian_;
  double gamma_;
  double volume_;
  bool diagonal_ = true;
  RMatrix decay_;
  std::vector<CMatrix> dense_, squares_;
};

CMatrix rk4(const LindbladGenerator& f, const CMatrix& y, double h) {
  const CMatrix k1 = f(y);
  const CMatrix k2 = f(y + 0.5 * h * k1);
  const CMatrix k3 = f(y + 0.5 * h * k2);
  const CMatrix k4 = f(y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

DensityMatrix evolve_lindblad(const DensityMatrix& rho, const CMatrix& hamiltonian, const CollapseOperatorSet& collapse,
                              double gamma, double t, const LindbladOptions& options) {
  const auto n = static_cast<Eigen::Index>(rho.dimension());
  require(hamiltonian.rows() == n && hamiltonian.cols() == n, "Hamiltonian dimension mismatch");
  require(collapse.operators.empty() || static_cast<Eigen::Index>(collapse.dimension()) == n,
          "collapse operator dimension mismatch");
  require(gamma >= 0.0 && std::isfinite(gamma), "collapse rate must be non-negative");
  require(t >= 0.0 && std::isfinite(t), "evolution time must be non-negative");
  require(options.tolerance > 0.0, "tolerance must be positive");
  for (const auto& op : collapse.operators) require(op.is_hermitian(), "collapse operators must be Hermitian");
  if (t == 0.0) return rho;

  const LindbladGenerator generator(hamiltonian, collapse, gamma);
  CMatrix y = rho.matrix();
  double time = 0.0;
  double h = std::min(options.initial_step, t);
  std::size_t steps = 0;
  while (time < t) {
    if (++steps > options.max_steps) fail(ErrorKind::IntegrationFailure, "step budget exhausted");
    h = std::min(h, t - time);
    const CMatrix full = rk4(generator, y, h);
    const CMatrix half = rk4(generator, rk4(generator, y, 0.5 * h), 0.5 * h);
    const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
    const double err = (half - full).cwiseAbs().maxCoeff() / 15.0;
    if (!std::isfinite(err)) fail(ErrorKind::IntegrationFailure, "non-finite state during integration");
    if (err <= options.tolerance * scale) {
      y = half + (half - full) / 15.0;
      time += h;
      const double factor = err > 0.0 ? 0.9 * std::pow(options.tolerance * scale / err, 0.2) : 4.0;
      h *= std::clamp(factor, 0.2, 4.0);
    } else {
      h *= std::clamp(0.9 * std::pow(options.tolerance * scale / err, 0.2), 0.1, 0.5);
      if (h < options.min_step * std::max(1.0, t)) {
        std::ostringstream msg;
        msg << "step size underflow at t=" << time << " (h=" << h << ", error=" << err << ")";
        fail(ErrorKind::IntegrationFailure, msg.str());
      }
    }
  }
  y = 0.5 * (y + y.adjoint()).eval();
  return DensityMatrix(y);
}

double trace_distance(const CMatrix& a, const CMatrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "trace distance needs equal shapes");
  const CMatrix diff = a - b;
  const double scale = std::max(1e-300, diff.cwiseAbs().maxCoeff());
  if ((diff - diff.adjoint()).cwiseAbs().maxCoeff() <= 1e-12 * scale) {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(diff, Eigen::EigenvaluesOnly);
    return 0.5 * solver.eigenvalues().cwiseAbs().sum();
  }
  Eigen::JacobiSVD<CMatrix> svd(diff);
  return 0.5 * svd.singularValues().sum();
}

TraceDistanceEstimate trace_distance_jackknife(const std::vector<CMatrix>& samples, const CMatrix& target) {
  require(samples.size() >= 2, "jackknife needs at least two samples");
  const double n = static_cast<double>(samples.size());
  TraceDistanceEstimate out;
  const CMatrix sum = pairwise_sum<CMatrix>(0, samples.size(), [&](std::size_t i) { return samples[i]; });
  out.mean = sum / n;
  out.distance = trace_distance(out.mean, target);
  std::vector<double> loo(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) loo[i] = trace_distance((sum - samples[i]) / (n - 1.0), target);
  const double mean_loo = pairwise_sum(loo) / n;
  const double ss = pairwise_sum<double>(0, loo.size(), [&](std::size_t i) {
    const double d = loo[i] - mean_loo;
    return d * d;
  });
  out.standard_error = std::sqrt((n - 1.0) / n * ss);
  return out;
}

}  // namespace beables
