#include "beables/nonmarkov.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "beables/errors.hpp"
#include "beables/parallel.hpp"
#include "json.hpp"

namespace beables {

const char* to_string(RelationMode mode) {
  switch (mode) {
    case RelationMode::Zero: return "zero";
    case RelationMode::Feynman: return "feynman";
    case RelationMode::NegativeFeynman: return "negative_feynman";
    case RelationMode::Custom: return "custom";
  }
  return "unknown";
}

RelationMode relation_mode_from_string(const std::string& name) {
  if (name == "zero") return RelationMode::Zero;
  if (name == "feynman") return RelationMode::Feynman;
  if (name == "negative_feynman") return RelationMode::NegativeFeynman;
  if (name == "custom") return RelationMode::Custom;
  fail(ErrorKind::InvalidParameter, "unknown relation mode '" + name + "'");
}

void SpacetimeKernel::validate() const {
  const auto n = static_cast<Eigen::Index>(size());
  require(n > 0 && h > 0.0, "spacetime kernel needs cells and a positive width");
  for (const CMatrix* m : {&covariance, &ordered, &relation, &ordered_relation})
    require(m->rows() == n && m->cols() == n, "spacetime kernel blocks must match the lattice size");
  const double scale = std::max(1e-300, covariance.cwiseAbs().maxCoeff());
  require((covariance - covariance.adjoint()).cwiseAbs().maxCoeff() <= 1e-10 * scale, "covariance must be Hermitian");
  require((ordered + ordered.adjoint() - covariance).cwiseAbs().maxCoeff() <= 1e-10 * scale,
          "time-ordered kernel must split the covariance");
  const double rscale = std::max(scale, relation.cwiseAbs().maxCoeff());
  require((ordered_relation + ordered_relation.transpose() - relation).cwiseAbs().maxCoeff() <= 1e-10 * rscale,
          "time-ordered relation must split the relation");
}

std::string SpacetimeKernel::hash() const {
  KernelPair pair{covariance, relation};
  std::string h1 = pair.hash();
  KernelPair ord{ordered, ordered_relation};
  return h1 + ord.hash();
}

SpacetimeKernel SpacetimeKernel::from_cells(const CellKernel& cells, std::size_t n_sites, std::size_t n_steps,
                                            double h, RelationMode mode) {
  require(mode != RelationMode::Custom, "custom relation kernels need explicit matrices");
  SpacetimeKernel k;
  k.n_sites = n_sites;
  k.n_steps = n_steps;
  k.h = h;
  k.mode = mode;
  k.covariance = cells.covariance;
  k.ordered = cells.ordered;
  const auto n = cells.covariance.rows();
  if (mode == RelationMode::Zero) {
    k.relation = CMatrix::Zero(n, n);
    k.ordered_relation = CMatrix::Zero(n, n);
  } else {
    const double sign = mode == RelationMode::Feynman ? 1.0 : -1.0;
    k.ordered_relation = sign * cells.ordered;
    k.relation = k.ordered_relation + k.ordered_relation.transpose();
  }
  k.validate();
  return k;
}

SpacetimeKernel SpacetimeKernel::regulated(const PropagatorSpec& spec, const std::vector<Point3>& sites,
                                           std::size_t n_steps, double h, RelationMode mode) {
  return from_cells(regulated_cell_kernel(spec, sites, n_steps, h), sites.size(), n_steps, h, mode);
}

SpacetimeKernel SpacetimeKernel::white(std::size_t n_sites, std::size_t n_steps, double h, double volume,
                                       RelationMode mode) {
  require(volume > 0.0 && h > 0.0, "white kernel needs positive cell sizes");
  const auto n = static_cast<Eigen::Index>(n_sites * n_steps);
  CellKernel cells{CMatrix::Identity(n, n) * (h / volume), CMatrix::Identity(n, n) * (0.5 * h / volume)};
  return from_cells(cells, n_sites, n_steps, h, mode);
}

SpacetimeKernel SpacetimeKernel::custom(const CellKernel& cells, std::size_t n_sites, std::size_t n_steps, double h,
                                        CMatrix relation, CMatrix ordered_relation) {
  SpacetimeKernel k;
  k.n_sites = n_sites;
  k.n_steps = n_steps;
  k.h = h;
  k.mode = RelationMode::Custom;
  k.covariance = cells.covariance;
  k.ordered = cells.ordered;
  k.relation = std::move(relation);
  k.ordered_relation = std::move(ordered_relation);
  k.validate();
  return k;
}

KernelPair SpacetimeKernel::field_pair() const {
  const double inv = 1.0 / (h * h);
  return KernelPair{covariance * inv, relation * inv};
}

InfluencePhase::InfluencePhase(SpacetimeKernel kernel, RMatrix couplings)
    : kernel_(std::move(kernel)), couplings_(std::move(couplings)) {
  kernel_.validate();
  require(couplings_.rows() > 0, "influence phase needs at least one basis state");
  require(static_cast<std::size_t>(couplings_.cols()) == kernel_.n_sites, "couplings must cover every site");
  require(couplings_.allFinite(), "couplings must be finite");
}

RVector InfluencePhase::source(std::size_t a, std::size_t n_steps) const {
  require(a < dimension(), "basis index out of range");
  require(n_steps <= kernel_.n_steps, "more steps than the kernel covers");
  const std::size_t ns = kernel_.n_sites;
  RVector c(static_cast<Eigen::Index>(ns * n_steps));
  for (std::size_t n = 0; n < n_steps; ++n)
    for (std::size_t k = 0; k < ns; ++k)
      c(static_cast<Eigen::Index>(n * ns + k)) = couplings_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k));
  return c;
}

Complex InfluencePhase::memory_exponent(std::size_t a, std::size_t n_steps) const {
  const RVector c = source(a, n_steps);
  const auto m = c.size();
  const CMatrix mem = kernel_.ordered.topLeftCorner(m, m) - kernel_.ordered_relation.topLeftCorner(m, m);
  return (c.cast<Complex>().transpose() * mem * c.cast<Complex>())(0, 0);
}

RMatrix point_couplings(const LatticeGrid& grid, const ConfigurationBasis& basis, double coupling) {
  const CollapseOperatorSet density = build_number_density(grid, basis);
  return coupling * grid.volume_element() * density.diagonal_table();
}

RMatrix density_couplings(const CollapseOperatorSet& collapse, double gamma) {
  require(gamma >= 0.0, "collapse rate must be non-negative");
  return std::sqrt(gamma) * collapse.volume_element * collapse.diagonal_table();
}

DensityMatrix influence_phase_apply(const InfluencePhase& phase, const DensityMatrix& rho, std::size_t n_steps) {
  const std::size_t d = phase.dimension();
  require(rho.dimension() == d, "density matrix dimension mismatch");
  require(n_steps <= phase.kernel().n_steps, "more steps than the kernel covers");
  if (n_steps == 0) return rho;
  const auto m = static_cast<Eigen::Index>(phase.kernel().n_sites * n_steps);
  const CMatrix k = phase.kernel().covariance.topLeftCorner(m, m);
  const CMatrix ko = phase.kernel().ordered.topLeftCorner(m, m);
  std::vector<CVector> c(d);
  std::vector<Complex> self(d);
  for (std::size_t a = 0; a < d; ++a) {
    c[a] = phase.source(a, n_steps).cast<Complex>();
    self[a] = (c[a].transpose() * ko * c[a])(0, 0);
  }
  CMatrix out = rho.matrix();
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      const Complex cross = (c[a].transpose() * k * c[b])(0, 0);
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) *= std::exp(cross - self[a] - std::conj(self[b]));
    }
  out = 0.5 * (out + out.adjoint()).eval();
  return DensityMatrix(out);
}

MemoryNoise::MemoryNoise(const SpacetimeKernel& kernel) : h_(kernel.h) {
  const CMatrix mem = kernel.ordered - kernel.ordered_relation;
  target_ = mem + mem.transpose();
  const double scale = target_.cwiseAbs().maxCoeff();
  std::vector<CVector> cols;
  if (scale > 0.0) {
    const Complex i(0.0, 1.0);
    auto add = [&](const RMatrix& part, Complex unit) {
      Eigen::SelfAdjointEigenSolver<RMatrix> solver(0.5 * (part + part.transpose()));
      for (Eigen::Index k = 0; k < solver.eigenvalues().size(); ++k) {
        const double lambda = solver.eigenvalues()(k);
        if (std::abs(lambda) <= 1e-15 * scale) continue;
        cols.push_back(solver.eigenvectors().col(k).cast<Complex>() * std::sqrt(unit * lambda));
      }
    };
    add(target_.real(), Complex(1.0, 0.0));
    add(target_.imag(), i);
  }
  columns_ = CMatrix::Zero(target_.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) columns_.col(static_cast<Eigen::Index>(k)) = cols[k];
}

void MemoryNoise::sample(RandomStream& rng, CVector& out) const {
  RVector z(columns_.cols());
  for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = rng.normal();
  out = columns_ * z.cast<Complex>() / h_;
}

FieldSample MemoryNoise::sample(std::uint64_t seed) const {
  RandomStream rng(seed);
  FieldSample s;
  s.seed = seed;
  sample(rng, s.values);
  return s;
}

namespace {

void check_field(const FieldSample& f, const InfluencePhase& phase, std::size_t n_steps) {
  require(static_cast<std::size_t>(f.values.size()) >= phase.kernel().n_sites * n_steps,
          "field sample does not cover the requested cells");
}

}  // namespace

QuantumState step_linear_nonmarkov(const QuantumState& psi, const FieldSample& xi, const FieldSample& eta,
                                   const InfluencePhase& phase, std::size_t step) {
  require(psi.dimension() == phase.dimension(), "state dimension mismatch");
  require(step < phase.kernel().n_steps, "step outside the kernel");
  check_field(xi, phase, step + 1);
  check_field(eta, phase, step + 1);
  const std::size_t ns = phase.kernel().n_sites;
  const double h = phase.kernel().h;
  const Complex i(0.0, 1.0);
  CVector out = psi.amplitudes();
  for (std::size_t a = 0; a < phase.dimension(); ++a) {
    Complex drive = 0.0;
    for (std::size_t k = 0; k < ns; ++k) {
      const auto x = static_cast<Eigen::Index>(step * ns + k);
      drive += phase.couplings()(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k)) * (xi.values(x) + eta.values(x));
    }
    out(static_cast<Eigen::Index>(a)) *= std::exp(-i * h * drive);
  }
  return QuantumState(std::move(out));
}

QuantumState evolve_linear_nonmarkov(const QuantumState& psi0, const FieldSample& xi, const FieldSample& eta,
                                     const InfluencePhase& phase, std::size_t n_steps) {
  QuantumState psi = psi0;
  for (std::size_t n = 0; n < n_steps; ++n) psi = step_linear_nonmarkov(psi, xi, eta, phase, n);
  return psi;
}

QuantumState closed_form_state(const InfluencePhase& phase, const FieldSample& xi, const QuantumState& psi0,
                               std::size_t n_steps) {
  require(psi0.dimension() == phase.dimension(), "state dimension mismatch");
  check_field(xi, phase, n_steps);
  const double h = phase.kernel().h;
  const Complex i(0.0, 1.0);
  CVector out = psi0.amplitudes();
  const auto m = static_cast<Eigen::Index>(phase.kernel().n_sites * n_steps);
  for (std::size_t a = 0; a < phase.dimension(); ++a) {
    const RVector c = phase.source(a, n_steps);
    const Complex drive = (c.cast<Complex>().transpose() * xi.values.head(m))(0, 0);
    out(static_cast<Eigen::Index>(a)) *= std::exp(-i * h * drive - phase.memory_exponent(a, n_steps));
  }
  return QuantumState(std::move(out));
}

std::vector<CMatrix> unraveling_estimators(const InfluencePhase& phase, const QuantumState& psi0,
                                           std::size_t n_steps, std::size_t count, std::uint64_t master_seed,
                                           unsigned threads) {
  const SamplingFactor factor = factor_kernel(phase.kernel().field_pair());
  const MemoryNoise memory(phase.kernel());
  std::vector<CMatrix> out(count);
  parallel_for(count, threads, [&](std::size_t s) {
    RandomStream rng(master_seed, s);
    UnravelingSample draw;
    sample_field(factor, rng, draw.xi.values);
    memory.sample(rng, draw.eta.values);
    memory.sample(rng, draw.eta_prime.values);
    const CVector a = evolve_linear_nonmarkov(psi0, draw.xi, draw.eta, phase, n_steps).amplitudes();
    const CVector b = evolve_linear_nonmarkov(psi0, draw.xi, draw.eta_prime, phase, n_steps).amplitudes();
    out[s] = 0.5 * (a * b.adjoint() + b * a.adjoint());
  });
  return out;
}

WeightedFieldEnsemble girsanov_field_measure(const InfluencePhase& phase, const QuantumState& psi0,
                                             const std::vector<FieldSample>& samples, std::size_t n_steps) {
  WeightedFieldEnsemble out;
  out.samples = samples;
  out.log_weights.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    out.log_weights[i] = std::log(closed_form_state(phase, samples[i], psi0, n_steps).norm_squared());
  return out;
}

CVector beable_shift(const InfluencePhase& phase, const QuantumState& psi0, const FieldSample& xi,
                     std::size_t n_steps, ShiftWindow window) {
  const SpacetimeKernel& k = phase.kernel();
  if (k.mode != RelationMode::Zero || k.relation.cwiseAbs().maxCoeff() > 0.0)
    fail(ErrorKind::UnsupportedRegime, "the beable shift is only available for a vanishing relation kernel");
  require(n_steps <= k.n_steps, "more steps than the kernel covers");
  const std::size_t ns = k.n_sites;
  // source <j(y)> in cell m from the state at the start of that cell
  CVector source = CVector::Zero(static_cast<Eigen::Index>(ns * n_steps));
  for (std::size_t m = 0; m < n_steps; ++m) {
    const QuantumState psi = closed_form_state(phase, xi, psi0, m);
    const RVector p = psi.amplitudes().cwiseAbs2() / psi.norm_squared();
    const RVector mean_j = phase.couplings().transpose() * p;
    source.segment(static_cast<Eigen::Index>(m * ns), static_cast<Eigen::Index>(ns)) = mean_j.cast<Complex>();
  }
  const auto total = static_cast<Eigen::Index>(k.size());
  CVector shift = CVector::Zero(total);
  const Complex scale(0.0, 1.0 / k.h);
  for (Eigen::Index x = 0; x < total; ++x) {
    const auto n = static_cast<std::size_t>(x) / ns;
    const std::size_t upto = window == ShiftWindow::Running ? std::min(n + 1, n_steps) : n_steps;
    const auto len = static_cast<Eigen::Index>(upto * ns);
    if (len == 0) continue;
    shift(x) = scale * (k.covariance.row(x).head(len) * source.head(len))(0, 0);
  }
  return shift;
}

WeightedFieldEnsemble boundary_reweight(const InfluencePhase& phase, const QuantumState& psi0,
                                        const std::vector<FieldSample>& samples, std::size_t n_steps,
                                        const CMatrix& rho_out) {
  const auto d = static_cast<Eigen::Index>(phase.dimension());
  require(rho_out.rows() == d && rho_out.cols() == d, "boundary state dimension mismatch");
  WeightedFieldEnsemble out;
  out.samples = samples;
  out.log_weights.resize(samples.size());
  bool any = false;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const CVector psi = closed_form_state(phase, samples[i], psi0, n_steps).amplitudes();
    const double w = (psi.adjoint() * rho_out * psi)(0, 0).real();
    out.log_weights[i] = w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
    any = any || w > 0.0;
  }
  if (!any) fail(ErrorKind::DegenerateEnsemble, "boundary state is orthogonal to every sample");
  return out;
}

Estimate weighted_expectation(const std::vector<double>& log_weights, const std::vector<double>& values) {
  require(log_weights.size() == values.size() && !values.empty(), "weights and values must match");
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(top)) fail(ErrorKind::DegenerateEnsemble, "all weights vanish");
  std::vector<double> w(values.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - top);
  return weighted_mean(values, w);
}

namespace {

constexpr char kMagic[4] = {'B', 'F', 'L', 'D'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  return v;
}

void put_f64(std::ostream& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

void write_body(std::ostream& out, const std::vector<FieldSample>& samples) {
  for (const auto& s : samples)
    for (Eigen::Index k = 0; k < s.values.size(); ++k) {
      put_f64(out, s.values(k).real());
      put_f64(out, s.values(k).imag());
    }
}

}  // namespace

void write_fields(const std::string& path, const std::vector<FieldSample>& samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open " + path + " for writing");
  const std::uint64_t n_points = samples.empty() ? 0 : static_cast<std::uint64_t>(samples.front().values.size());
  for (const auto& s : samples) require(static_cast<std::uint64_t>(s.values.size()) == n_points, "samples must share a size");
  out.write(kMagic, 4);
  put_u64(out, 1);
  put_u64(out, samples.size());
  put_u64(out, n_points);
  write_body(out, samples);
  if (!out) fail(ErrorKind::IoError, "failed writing " + path);
}

std::vector<FieldSample> read_fields(const std::string& path, std::uint64_t master_seed, std::size_t first_index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) fail(ErrorKind::IoError, path + " is not a field file");
  const std::uint64_t version = get_u64(in);
  if (version != 1) fail(ErrorKind::IoError, "unsupported field file version");
  const std::uint64_t count = get_u64(in), n_points = get_u64(in);
  std::vector<FieldSample> out(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    out[i].values.resize(static_cast<Eigen::Index>(n_points));
    out[i].seed = stream_seed(master_seed, first_index + i);
    for (std::uint64_t k = 0; k < n_points; ++k) {
      const double re = get_f64(in), im = get_f64(in);
      out[i].values(static_cast<Eigen::Index>(k)) = Complex(re, im);
    }
  }
  if (!in) fail(ErrorKind::IoError, path + " is truncated");
  return out;
}

FieldCheckpoint::FieldCheckpoint(std::string directory, std::string kernel_hash, std::uint64_t master_seed,
                                 std::size_t n_points)
    : directory_(std::move(directory)) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(directory_) / "manifest.json";
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    nlohmann::json j;
    try {
      in >> j;
      manifest_.kernel_hash = j.at("kernel_hash").get<std::string>();
      manifest_.master_seed = j.at("master_seed").get<std::uint64_t>();
      manifest_.n_points = j.at("n_points").get<std::size_t>();
      manifest_.completed = j.at("completed").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::IoError, std::string("unreadable checkpoint manifest: ") + e.what());
    }
    if (manifest_.kernel_hash != kernel_hash || manifest_.master_seed != master_seed || manifest_.n_points != n_points)
      fail(ErrorKind::InvalidParameter, "checkpoint in " + directory_ + " belongs to a different run");
    return;
  }
  fs::create_directories(directory_);
  manifest_ = {std::move(kernel_hash), master_seed, n_points, 0};
  std::ofstream out(fs::path(directory_) / "fields.bin", std::ios::binary | std::ios::trunc);
  out.write(kMagic, 4);
  put_u64(out, 1);
  put_u64(out, 0);
  put_u64(out, n_points);
  if (!out) fail(ErrorKind::IoError, "cannot create " + directory_ + "/fields.bin");
  out.close();
  save_manifest();
}

void FieldCheckpoint::save_manifest() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kernel_hash"] = manifest_.kernel_hash;
  j["master_seed"] = manifest_.master_seed;
  j["n_points"] = manifest_.n_points;
  j["completed"] = manifest_.completed;
  j["layout"] = "little-endian float64, interleaved real/imaginary, time-major";
  const auto path = std::filesystem::path(directory_) / "manifest.json";
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) fail(ErrorKind::IoError, "cannot write " + tmp);
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

void FieldCheckpoint::append(const std::vector<FieldSample>& samples) {
  if (samples.empty()) return;
  for (const auto& s : samples)
    require(static_cast<std::size_t>(s.values.size()) == manifest_.n_points, "sample size does not match the checkpoint");
  const auto path = (std::filesystem::path(directory_) / "fields.bin").string();
  std::fstream io(path, std::ios::binary | std::ios::in | std::ios::out);
  if (!io) fail(ErrorKind::IoError, "cannot open " + path);
  io.seekp(0, std::ios::end);
  write_body(io, samples);
  io.seekp(4 + 8, std::ios::beg);
  put_u64(io, manifest_.completed + samples.size());
  if (!io) fail(ErrorKind::IoError, "failed appending to " + path);
  io.close();
  manifest_.completed += samples.size();
  save_manifest();
}

std::vector<FieldSample> FieldCheckpoint::load() const {
  return read_fields((std::filesystem::path(directory_) / "fields.bin").string(), manifest_.master_seed, 0);
}

std::vector<FieldSample> sample_with_checkpoint(const SamplingFactor& factor, FieldCheckpoint& checkpoint,
                                                std::size_t count, std::size_t chunk, unsigned threads) {
  require(chunk > 0, "chunk size must be positive");
  const std::uint64_t master = checkpoint.manifest().master_seed;
  while (checkpoint.completed() < count) {
    const std::size_t start = checkpoint.completed();
    const std::size_t n = std::min(chunk, count - start);
    std::vector<FieldSample> batch(n);
    parallel_for(n, threads, [&](std::size_t i) { batch[i] = sample_field(factor, stream_seed(master, start + i)); });
    checkpoint.append(batch);
  }
  std::vector<FieldSample> all = checkpoint.load();
  all.resize(count);
  return all;
}

}  // namespace beables
