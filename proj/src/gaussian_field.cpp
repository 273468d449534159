#include "beables/gaussian_field.hpp"

#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "beables/errors.hpp"
#include "beables/parallel.hpp"

namespace beables {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void KernelPair::validate() const {
  require(covariance.rows() > 0 && covariance.rows() == covariance.cols(), "covariance must be square");
  require(relation.rows() == covariance.rows() && relation.cols() == covariance.cols(),
          "relation must match the covariance shape");
  const double scale = std::max(1e-300, covariance.cwiseAbs().maxCoeff());
  require((covariance - covariance.adjoint()).cwiseAbs().maxCoeff() <= 1e-10 * scale, "covariance must be Hermitian");
  const double rscale = std::max(scale, relation.cwiseAbs().maxCoeff());
  require((relation - relation.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * rscale, "relation must be symmetric");
  require(covariance.diagonal().real().minCoeff() >= 0.0 || psd_floor >= 0.0, "covariance diagonal must be non-negative");
}

double KernelPair::effective_floor() const {
  if (psd_floor >= 0.0) return psd_floor;
  return 1e-9 * std::max(0.0, covariance.diagonal().real().maxCoeff());
}

RMatrix KernelPair::stacked_covariance() const {
  const auto n = covariance.rows();
  RMatrix c(2 * n, 2 * n);
  c.topLeftCorner(n, n) = 0.5 * (covariance.real() + relation.real());
  c.bottomRightCorner(n, n) = 0.5 * (covariance.real() - relation.real());
  c.topRightCorner(n, n) = 0.5 * (relation.imag() - covariance.imag());
  c.bottomLeftCorner(n, n) = 0.5 * (relation.imag() + covariance.imag());
  return 0.5 * (c + c.transpose());
}

std::string KernelPair::hash() const {
  std::uint64_t h = fnv1a(covariance.data(), sizeof(Complex) * static_cast<std::size_t>(covariance.size()));
  h = fnv1a(relation.data(), sizeof(Complex) * static_cast<std::size_t>(relation.size()), h);
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

SamplingFactor factor_kernel(const KernelPair& pair) {
  pair.validate();
  const RMatrix stacked = pair.stacked_covariance();
  Eigen::SelfAdjointEigenSolver<RMatrix> solver(stacked);
  if (solver.info() != Eigen::Success) fail(ErrorKind::NumericFailure, "eigendecomposition failed");
  RVector lambda = solver.eigenvalues();
  SamplingFactor out;
  out.size = pair.size();
  out.kernel_hash = pair.hash();
  // the augmented kernel [[G, S], [S*, G*]] has eigenvalues 2 * lambda
  out.min_eigenvalue = 2.0 * lambda.minCoeff();
  const double floor = pair.effective_floor();
  if (out.min_eigenvalue < -floor) {
    std::ostringstream msg;
    msg << "kernel pair has eigenvalue " << out.min_eigenvalue << " below -" << floor;
    throw NotPsdError(out.min_eigenvalue, msg.str());
  }
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < 0.0) {
      out.clipped_mass += -lambda(i);
      lambda(i) = 0.0;
    }
  }
  out.factor = solver.eigenvectors() * lambda.cwiseSqrt().asDiagonal();
  return out;
}

void sample_field(const SamplingFactor& factor, RandomStream& rng, CVector& out) {
  const auto n = static_cast<Eigen::Index>(factor.size);
  RVector z(2 * n);
  for (Eigen::Index i = 0; i < 2 * n; ++i) z(i) = rng.normal();
  const RVector xy = factor.factor * z;
  out.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = Complex(xy(i), xy(n + i));
}

FieldSample sample_field(const SamplingFactor& factor, std::uint64_t seed) {
  RandomStream rng(seed);
  FieldSample s;
  s.seed = seed;
  sample_field(factor, rng, s.values);
  return s;
}

std::vector<FieldSample> sample_fields(const SamplingFactor& factor, std::uint64_t master_seed, std::size_t count,
                                       unsigned threads) {
  std::vector<FieldSample> out(count);
  parallel_for(count, threads, [&](std::size_t i) { out[i] = sample_field(factor, stream_seed(master_seed, i)); });
  return out;
}

MomentEstimate estimate_moments(const std::vector<FieldSample>& samples) {
  require(samples.size() >= 2, "moment estimate needs at least two samples");
  const auto d = samples.front().values.size();
  const double n = static_cast<double>(samples.size());
  CMatrix cov = CMatrix::Zero(d, d), rel = CMatrix::Zero(d, d);
  RMatrix cov_re2 = RMatrix::Zero(d, d), cov_im2 = RMatrix::Zero(d, d);
  RMatrix rel_re2 = RMatrix::Zero(d, d), rel_im2 = RMatrix::Zero(d, d);
  for (const auto& s : samples) {
    require(s.values.size() == d, "samples must share a size");
    const CMatrix c = s.values * s.values.adjoint();
    const CMatrix r = s.values * s.values.transpose();
    cov += c;
    rel += r;
    cov_re2.array() += c.real().array().square();
    cov_im2.array() += c.imag().array().square();
    rel_re2.array() += r.real().array().square();
    rel_im2.array() += r.imag().array().square();
  }
  MomentEstimate out;
  out.covariance = cov / n;
  out.relation = rel / n;
  auto se = [&](const RMatrix& sq, const RMatrix& mean) {
    RMatrix var = (sq / n - mean.array().square().matrix()) * (n / (n - 1.0));
    return RMatrix((var.array().max(0.0) / n).sqrt());
  };
  out.covariance_se_re = se(cov_re2, out.covariance.real());
  out.covariance_se_im = se(cov_im2, out.covariance.imag());
  out.relation_se_re = se(rel_re2, out.relation.real());
  out.relation_se_im = se(rel_im2, out.relation.imag());
  return out;
}

double max_moment_deviation(const MomentEstimate& e, const KernelPair& pair) {
  double worst = 0.0;
  auto visit = [&](double estimate, double target, double se) {
    if (se > 0.0) {
      worst = std::max(worst, std::abs(estimate - target) / se);
    } else if (std::abs(estimate - target) > 1e-12) {
      worst = std::numeric_limits<double>::infinity();
    }
  };
  for (Eigen::Index i = 0; i < e.covariance.rows(); ++i)
    for (Eigen::Index j = 0; j < e.covariance.cols(); ++j) {
      visit(e.covariance(i, j).real(), pair.covariance(i, j).real(), e.covariance_se_re(i, j));
      visit(e.covariance(i, j).imag(), pair.covariance(i, j).imag(), e.covariance_se_im(i, j));
      visit(e.relation(i, j).real(), pair.relation(i, j).real(), e.relation_se_re(i, j));
      visit(e.relation(i, j).imag(), pair.relation(i, j).imag(), e.relation_se_im(i, j));
    }
  return worst;
}

Complex characteristic_function(const KernelPair& pair, const CVector& a, const CVector& b) {
  const Complex agb = (a.transpose() * pair.covariance * b)(0, 0);
  const Complex asa = (a.transpose() * pair.relation * a)(0, 0);
  const Complex bsb = (b.transpose() * pair.relation.conjugate() * b)(0, 0);
  return std::exp(agb - 0.5 * (asa + bsb));
}

CharacteristicCheck characteristic_check(const KernelPair& pair, const CVector& a, const CVector& b,
                                         std::size_t n_samples, std::uint64_t seed) {
  require(n_samples >= 2, "characteristic check needs at least two samples");
  require(static_cast<std::size_t>(a.size()) == pair.size() && static_cast<std::size_t>(b.size()) == pair.size(),
          "test fields must match the kernel size");
  const SamplingFactor factor = factor_kernel(pair);
  std::vector<Complex> values(n_samples);
  const Complex i(0.0, 1.0);
  CVector xi;
  for (std::size_t k = 0; k < n_samples; ++k) {
    RandomStream rng(seed, k);
    sample_field(factor, rng, xi);
    values[k] = std::exp(-i * (a.transpose() * xi)(0, 0) + i * (b.transpose() * xi.conjugate())(0, 0));
  }
  const double n = static_cast<double>(n_samples);
  CharacteristicCheck out;
  out.empirical = pairwise_sum(values) / n;
  const double ss = pairwise_sum<double>(0, n_samples, [&](std::size_t k) { return std::norm(values[k] - out.empirical); });
  out.standard_error = std::sqrt(ss / (n - 1.0) / n);
  out.analytic = characteristic_function(pair, a, b);
  return out;
}

PsdReport verify_psd(const CMatrix& kernel, std::size_t trials, std::uint64_t seed, double tolerance) {
  require(kernel.rows() == kernel.cols() && kernel.rows() > 0, "kernel must be square");
  const CMatrix herm = 0.5 * (kernel + kernel.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(herm, Eigen::EigenvaluesOnly);
  PsdReport out;
  out.trials = trials;
  out.min_eigenvalue = solver.eigenvalues().minCoeff();
  out.min_quadratic_form = std::numeric_limits<double>::infinity();
  const auto n = kernel.rows();
  for (std::size_t t = 0; t < trials; ++t) {
    RandomStream rng(seed, t);
    CVector f(n);
    for (Eigen::Index i = 0; i < n; ++i) f(i) = Complex(rng.normal(), rng.normal());
    const double form = (f.adjoint() * kernel * f)(0, 0).real() / f.squaredNorm();
    out.min_quadratic_form = std::min(out.min_quadratic_form, form);
  }
  out.positive_semidefinite = out.min_eigenvalue >= -tolerance;
  return out;
}

void QuarticSpec::validate() const {
  require(std::isfinite(lambda) && std::isfinite(epsilon), "quartic parameters must be finite");
  require(epsilon >= 0.0, "stabilizer must be non-negative");
  require(lambda == 0.0 || epsilon > 0.0, "a non-zero quartic coupling needs a positive stabilizer");
  require(volume > 0.0, "cell volume must be positive");
}

std::vector<double> WeightedFieldEnsemble::weights() const {
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i]);
  return w;
}

double WeightedFieldEnsemble::effective_sample_size() const {
  if (log_weights.empty()) return 0.0;
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - top);
  const double s1 = pairwise_sum(w);
  const double s2 = pairwise_sum<double>(0, w.size(), [&](std::size_t i) { return w[i] * w[i]; });
  return s1 * s1 / s2;
}

double quartic_log_weight(const CVector& field, const QuarticSpec& spec) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < field.size(); ++i) {
    const Complex sq = field(i) * field(i);
    const double mod2 = std::norm(field(i));
    acc += 2.0 * spec.lambda * (sq * sq).imag() - spec.epsilon * mod2 * mod2 * mod2;
  }
  return spec.volume * acc;
}

double quartic_log_weight_bound(std::size_t points, const QuarticSpec& spec) {
  spec.validate();
  if (spec.lambda == 0.0) return 0.0;
  const double l = std::abs(spec.lambda);
  return static_cast<double>(points) * spec.volume * 32.0 * l * l * l / (27.0 * spec.epsilon * spec.epsilon);
}

WeightedFieldEnsemble reweight_quartic(const std::vector<FieldSample>& samples, const QuarticSpec& spec) {
  spec.validate();
  WeightedFieldEnsemble out;
  out.samples = samples;
  out.log_weights.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out.log_weights[i] = quartic_log_weight(samples[i].values, spec);
  return out;
}

}  // namespace beables
