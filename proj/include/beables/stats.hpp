#pragma once

#include <cstddef>
#include <vector>

#include "beables/types.hpp"

namespace beables {

struct Estimate {
  double value = 0.0;
  double standard_error = 0.0;
};

Estimate mean_estimate(const std::vector<double>& samples);

// Self-normalized weighted mean with delta-method standard error.
Estimate weighted_mean(const std::vector<double>& values, const std::vector<double>& weights);

double effective_sample_size(const std::vector<double>& weights);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_error = 0.0;
};

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// Upper tail probability of a chi-squared statistic.
double chi_squared_p_value(double statistic, double dof);

// Mean of a matrix-valued ensemble, reduced pairwise.
CMatrix mean_matrix(const std::vector<CMatrix>& samples);

}  // namespace beables
