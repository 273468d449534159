#include "beables/stats.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "beables/errors.hpp"
#include "beables/parallel.hpp"

namespace beables {

Estimate mean_estimate(const std::vector<double>& samples) {
  require(!samples.empty(), "mean of an empty sample");
  const double n = static_cast<double>(samples.size());
  const double mean = pairwise_sum(samples) / n;
  if (samples.size() < 2) return {mean, 0.0};
  const double ss = pairwise_sum<double>(0, samples.size(), [&](std::size_t i) {
    const double d = samples[i] - mean;
    return d * d;
  });
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

Estimate weighted_mean(const std::vector<double>& values, const std::vector<double>& weights) {
  require(values.size() == weights.size() && !values.empty(), "weighted mean needs matching non-empty inputs");
  const std::size_t n = values.size();
  const double wsum = pairwise_sum(weights);
  if (!(wsum > 0.0)) fail(ErrorKind::DegenerateEnsemble, "total weight is not positive");
  const double mean = pairwise_sum<double>(0, n, [&](std::size_t i) { return weights[i] * values[i]; }) / wsum;
  const double var = pairwise_sum<double>(0, n, [&](std::size_t i) {
    const double d = weights[i] * (values[i] - mean);
    return d * d;
  });
  return {mean, std::sqrt(var) / wsum};
}

double effective_sample_size(const std::vector<double>& weights) {
  const double s1 = pairwise_sum(weights);
  const double s2 = pairwise_sum<double>(0, weights.size(), [&](std::size_t i) { return weights[i] * weights[i]; });
  return s2 > 0.0 ? s1 * s1 / s2 : 0.0;
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "line fit needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0, "line fit needs distinct abscissae");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    sse += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  fit.slope_error = x.size() > 2 ? std::sqrt(sse / (n - 2.0) / sxx) : 0.0;
  return fit;
}

double chi_squared_p_value(double statistic, double dof) {
  require(dof > 0.0, "chi-squared needs positive degrees of freedom");
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * statistic);
}

CMatrix mean_matrix(const std::vector<CMatrix>& samples) {
  require(!samples.empty(), "mean of an empty ensemble");
  const CMatrix sum = pairwise_sum<CMatrix>(0, samples.size(), [&](std::size_t i) { return samples[i]; });
  return sum / static_cast<double>(samples.size());
}

}  // namespace beables
