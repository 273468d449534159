#include <cmath>
#include <vector>

#include "beables/errors.hpp"
#include "beables/parallel.hpp"
#include "beables/rng.hpp"
#include "beables/stats.hpp"
#include "doctest.h"

using namespace beables;

TEST_CASE("mean estimate of a known sample") {
  const Estimate e = mean_estimate({1.0, 2.0, 3.0, 4.0});
  CHECK(e.value == doctest::Approx(2.5));
  // sample sd sqrt(5/3), over sqrt(4)
  CHECK(e.standard_error == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
}

TEST_CASE("weighted mean with equal weights is the plain mean") {
  const std::vector<double> v{0.5, 1.5, -2.0, 4.0};
  const Estimate w = weighted_mean(v, {2.0, 2.0, 2.0, 2.0});
  CHECK(w.value == doctest::Approx(mean_estimate(v).value));
  CHECK(effective_sample_size({2.0, 2.0, 2.0, 2.0}) == doctest::Approx(4.0));
  CHECK(effective_sample_size({1.0, 0.0, 0.0, 0.0}) == doctest::Approx(1.0));
}

TEST_CASE("weighted mean rejects vanishing weights") {
  try {
    weighted_mean({1.0, 2.0}, {0.0, 0.0});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateEnsemble);
  }
}

TEST_CASE("line fit recovers an exact line") {
  const LinearFit f = fit_line({0.0, 1.0, 2.0, 3.0}, {1.0, -1.0, -3.0, -5.0});
  CHECK(f.slope == doctest::Approx(-2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r_squared == doctest::Approx(1.0));
  CHECK(f.slope_error == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("chi-squared tail at tabulated quantiles") {
  CHECK(chi_squared_p_value(3.841458820694124, 1.0) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(chi_squared_p_value(5.991464547107979, 2.0) == doctest::Approx(0.05).epsilon(1e-10));
  // two degrees of freedom: exp(-x/2)
  CHECK(chi_squared_p_value(1.3, 2.0) == doctest::Approx(std::exp(-0.65)).epsilon(1e-12));
}

TEST_CASE("stream seeds do not depend on evaluation order") {
  std::vector<double> a(64), b(64);
  parallel_for(64, 1, [&](std::size_t i) { a[i] = RandomStream(42, i).normal(); });
  parallel_for(64, 3, [&](std::size_t i) { b[i] = RandomStream(42, i).normal(); });
  CHECK(a == b);
  CHECK(stream_seed(42, 0) != stream_seed(42, 1));
  CHECK(stream_seed(42, 0) != stream_seed(43, 0));
}

TEST_CASE("normal generator has unit variance") {
  RandomStream rng(7);
  const std::size_t n = 200000;
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 5.0 / std::sqrt(double(n)));
  CHECK(std::abs(s2 / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("pairwise matrix mean") {
  std::vector<CMatrix> m;
  for (int i = 0; i < 5; ++i) m.push_back(CMatrix::Constant(2, 2, Complex(i, -i)));
  const CMatrix mean = mean_matrix(m);
  CHECK(std::abs(mean(1, 0) - Complex(2.0, -2.0)) < 1e-15);
}
