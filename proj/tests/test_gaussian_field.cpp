#include <cmath>
#include <vector>

#include "beables/errors.hpp"
#include "beables/gaussian_field.hpp"
#include "beables/propagators.hpp"
#include "beables/rng.hpp"
#include "doctest.h"

using namespace beables;

namespace {

// xi = R z with z real standard normal: covariance R R^+, relation R R^T
KernelPair random_pair(std::size_t n, std::uint64_t seed) {
  RandomStream rng(seed);
  const auto d = static_cast<Eigen::Index>(n);
  CMatrix r(d, 2 * d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < 2 * d; ++j) r(i, j) = Complex(rng.normal(), rng.normal()) / std::sqrt(2.0 * n);
  return {r * r.adjoint(), r * r.transpose()};
}

// characteristic function from the real covariance of (Re xi, Im xi)
Complex characteristic_oracle(const KernelPair& p, const CVector& a, const CVector& b) {
  const auto n = p.covariance.rows();
  RMatrix c(2 * n, 2 * n);
  const CMatrix plus = p.covariance + p.relation, minus = p.covariance - p.relation;
  c.topLeftCorner(n, n) = 0.5 * plus.real();
  c.bottomRightCorner(n, n) = 0.5 * minus.real();
  c.topRightCorner(n, n) = 0.5 * (p.relation.imag() - p.covariance.imag());
  c.bottomLeftCorner(n, n) = 0.5 * (p.relation.imag() + p.covariance.imag());
  CVector u(2 * n);
  u.head(n) = b - a;
  u.tail(n) = Complex(0.0, -1.0) * (a + b);
  const Complex quad = (u.transpose() * c.cast<Complex>() * u)(0, 0);
  return std::exp(-0.5 * quad);
}

CVector random_vector(std::size_t n, RandomStream& rng, double scale) {
  CVector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = scale * Complex(rng.normal(), rng.normal());
  return v;
}

}  // namespace

TEST_CASE("white complex noise") {
  const KernelPair pair{CMatrix::Identity(3, 3), CMatrix::Zero(3, 3)};
  const auto samples = sample_fields(factor_kernel(pair), 11, 100000);
  const MomentEstimate m = estimate_moments(samples);
  CHECK(max_moment_deviation(m, pair) < 5.0);
  CVector mean = CVector::Zero(3);
  for (const auto& s : samples) mean += s.values;
  mean /= double(samples.size());
  // each component has E|xi|^2 = 1, so the mean has SE 1/sqrt(2n) per part
  CHECK(mean.cwiseAbs().maxCoeff() < 5.0 / std::sqrt(2.0 * samples.size()) * std::sqrt(2.0));
}

TEST_CASE("slightly negative eigenvalue is clipped and reported") {
  RMatrix q = Eigen::HouseholderQR<RMatrix>(RMatrix::Random(3, 3)).householderQ();
  RVector lam(3);
  lam << 1.0, 0.5, -1e-12;
  const RMatrix g = q * lam.asDiagonal() * q.transpose();
  KernelPair pair{g.cast<Complex>(), CMatrix::Zero(3, 3), 1e-9};
  const SamplingFactor f = factor_kernel(pair);
  CHECK(f.clipped_mass == doctest::Approx(1e-12).epsilon(1e-3));
  lam(2) = -1e-6;
  KernelPair bad{(q * lam.asDiagonal() * q.transpose()).cast<Complex>(), CMatrix::Zero(3, 3), 1e-9};
  try {
    factor_kernel(bad);
    FAIL("expected a not-positive-semidefinite error");
  } catch (const NotPsdError& e) {
    CHECK(e.kind() == ErrorKind::NotPositiveSemidefinite);
    CHECK(e.eigenvalue() < -1e-7);
  }
}

TEST_CASE("relation equal to a real covariance gives a real field") {
  const CMatrix g = random_pair(4, 3).covariance.real().cast<Complex>();
  const KernelPair pair{g, g};
  for (const auto& s : sample_fields(factor_kernel(pair), 5, 100)) CHECK(s.values.imag().cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("moments of a 16-point regulated kernel and a random kernel with relation") {
  PropagatorSpec spec;
  const CellKernel k = regulated_cell_kernel(spec, {{0, 0, 0}, {2.0, 0, 0}}, 8, 0.5);
  const KernelPair pv{k.covariance / 0.25, CMatrix::Zero(16, 16)};
  CHECK(max_moment_deviation(estimate_moments(sample_fields(factor_kernel(pv), 21, 100000, 2)), pv) < 5.0);
  const KernelPair rnd = random_pair(6, 8);
  CHECK(max_moment_deviation(estimate_moments(sample_fields(factor_kernel(rnd), 22, 100000, 2)), rnd) < 5.0);
}

TEST_CASE("sampling is a function of the seed") {
  const SamplingFactor f = factor_kernel(random_pair(5, 1));
  const FieldSample a = sample_field(f, 99), b = sample_field(f, 99), c = sample_field(f, 100);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
}

TEST_CASE("characteristic function closed form") {
  const KernelPair one{CMatrix::Identity(1, 1), CMatrix::Zero(1, 1)};
  CVector a1 = CVector::Ones(1), zero = CVector::Zero(1);
  CHECK(characteristic_function(one, zero, zero) == Complex(1.0, 0.0));
  CHECK(std::abs(characteristic_function(one, a1, a1) - std::exp(1.0)) < 1e-14);
  CHECK(std::abs(characteristic_function(one, a1, zero) - 1.0) < 1e-14);
  RandomStream rng(4);
  for (int i = 0; i < 10; ++i) {
    const KernelPair p = random_pair(4, 100 + i);
    const CVector a = random_vector(4, rng, 0.4), b = random_vector(4, rng, 0.4);
    CHECK(std::abs(characteristic_function(p, a, b) - characteristic_oracle(p, a, b)) <
          1e-12 * std::abs(characteristic_oracle(p, a, b)));
  }
}

TEST_CASE("characteristic function by Monte Carlo") {
  const KernelPair one{CMatrix::Identity(1, 1), CMatrix::Zero(1, 1)};
  const CVector a1 = CVector::Ones(1), zero = CVector::Zero(1);
  const auto e = characteristic_check(one, a1, a1, 1000000, 3);
  CHECK(std::abs(e.analytic - std::exp(1.0)) < 1e-14);
  CHECK(e.deviation() < 5.0);
  const auto trivial = characteristic_check(one, zero, zero, 10, 3);
  CHECK(trivial.empirical == Complex(1.0, 0.0));
  const KernelPair p = random_pair(3, 5);
  const KernelPair p0{p.covariance, CMatrix::Zero(3, 3)};
  RandomStream rng(6);
  const auto b0 = characteristic_check(p0, random_vector(3, rng, 0.5), CVector::Zero(3), 100000, 7);
  CHECK(std::abs(b0.analytic - 1.0) < 1e-14);
  CHECK(b0.deviation() < 5.0);
}

TEST_CASE("positivity check") {
  const PsdReport zero = verify_psd(CMatrix::Zero(4, 4), 10, 1);
  CHECK(zero.min_quadratic_form == 0.0);
  const CMatrix g = random_pair(5, 9).covariance;
  CHECK(verify_psd(g, 50, 2).min_eigenvalue >= -1e-9);
  PropagatorSpec spec;
  spec.cutoff_mass = 3.0;
  std::vector<Point3> line;
  for (int i = 0; i < 8; ++i) line.push_back({0.5 * i, 0.0, 0.0});
  const CMatrix kernel = regulated_cell_kernel(spec, line, 1, 0.5).covariance;
  const PsdReport rep = verify_psd(kernel, 200, 3);
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(kernel);
  CHECK(rep.min_eigenvalue == doctest::Approx(eig.eigenvalues().minCoeff()).epsilon(1e-10));
  CHECK(rep.min_quadratic_form >= rep.min_eigenvalue - 1e-14);
  CHECK(rep.positive_semidefinite);
}

TEST_CASE("quartic reweighting") {
  const KernelPair p = random_pair(4, 12);
  const auto samples = sample_fields(factor_kernel(p), 1, 1000);
  for (double w : reweight_quartic(samples, {0.0, 0.0, 1.0}).log_weights) CHECK(w == 0.0);
  const QuarticSpec spec{0.3, 0.05, 0.7};
  const double bound = quartic_log_weight_bound(4, spec);
  CHECK(bound == doctest::Approx(4 * 0.7 * 32 * 0.027 / (27 * 0.0025)));
  for (double w : reweight_quartic(samples, spec).log_weights) CHECK(w <= bound);
  // single site: the bound is attained at |xi|^2 = 4 lambda / (3 epsilon), xi^4 = i |xi|^4
  const double u = 4 * 0.3 / (3 * 0.05);
  CVector peak(1);
  peak(0) = std::polar(std::sqrt(u), kPi / 8);
  CHECK(quartic_log_weight(peak, spec) == doctest::Approx(quartic_log_weight_bound(1, spec)));
  CHECK_THROWS_AS(reweight_quartic(samples, {0.1, 0.0, 1.0}), Error);
}

TEST_CASE("kernel hash") {
  KernelPair p = random_pair(3, 2);
  const std::string h = p.hash();
  CHECK(h == random_pair(3, 2).hash());
  p.relation(0, 1) += 1e-9;
  CHECK(p.hash() != h);
}
