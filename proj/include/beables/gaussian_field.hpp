#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "beables/rng.hpp"
#include "beables/types.hpp"

namespace beables {

// Second-order statistics of a zero-mean complex Gaussian field:
// covariance(i, j) = E[xi_i conj(xi_j)], relation(i, j) = E[xi_i xi_j].
struct KernelPair {
  CMatrix covariance;
  CMatrix relation;
  // Eigenvalues of the augmented kernel above -psd_floor are clipped to
  // zero; below it the pair is rejected. Negative means 1e-9 * max diag.
  double psd_floor = -1.0;

  std::size_t size() const { return static_cast<std::size_t>(covariance.rows()); }
  void validate() const;
  double effective_floor() const;
  // Real covariance of (Re xi, Im xi), size 2n.
  RMatrix stacked_covariance() const;
  std::string hash() const;
};

struct SamplingFactor {
  RMatrix factor;  // (Re xi; Im xi) = factor * z, z standard normal
  std::size_t size = 0;
  double clipped_mass = 0.0;
  double min_eigenvalue = 0.0;  // smallest eigenvalue of the augmented kernel
  std::string kernel_hash;
};

SamplingFactor factor_kernel(const KernelPair& pair);

struct FieldSample {
  CVector values;
  std::uint64_t seed = 0;
};

FieldSample sample_field(const SamplingFactor& factor, std::uint64_t seed);
// Draws into `out` from an existing stream.
void sample_field(const SamplingFactor& factor, RandomStream& rng, CVector& out);
std::vector<FieldSample> sample_fields(const SamplingFactor& factor, std::uint64_t master_seed, std::size_t count,
                                       unsigned threads = 1);

struct MomentEstimate {
  CMatrix covariance, relation;
  // standard errors of the real and imaginary parts, entrywise
  RMatrix covariance_se_re, covariance_se_im, relation_se_re, relation_se_im;
};
MomentEstimate estimate_moments(const std::vector<FieldSample>& samples);

// Largest deviation of the estimated moments from the pair in units of
// their standard errors.
double max_moment_deviation(const MomentEstimate& estimate, const KernelPair& pair);

// phi(a, b) = E[exp(-i a.xi + i b.conj(xi))] = exp(a G b - (a S a + b S* b)/2)
Complex characteristic_function(const KernelPair& pair, const CVector& a, const CVector& b);

struct CharacteristicCheck {
  Complex empirical;
  Complex analytic;
  double standard_error = 0.0;
  double deviation() const { return standard_error > 0.0 ? std::abs(empirical - analytic) / standard_error : 0.0; }
};
CharacteristicCheck characteristic_check(const KernelPair& pair, const CVector& a, const CVector& b,
                                         std::size_t n_samples, std::uint64_t seed);

struct PsdReport {
  double min_eigenvalue = 0.0;
  double min_quadratic_form = 0.0;  // min over trials of Re(f^+ D f) / |f|^2
  std::size_t trials = 0;
  bool positive_semidefinite = false;
};
PsdReport verify_psd(const CMatrix& kernel, std::size_t trials, std::uint64_t seed, double tolerance = 0.0);

// exp[vol sum_x (2 lambda Im xi^4 - epsilon |xi|^6)] reweighting of a
// Gaussian ensemble.
struct QuarticSpec {
  double lambda = 0.0;
  double epsilon = 0.0;
  double volume = 1.0;
  void validate() const;
};

struct WeightedFieldEnsemble {
  std::vector<FieldSample> samples;
  std::vector<double> log_weights;

  std::vector<double> weights() const;  // exp(log_weights), unnormalized
  double effective_sample_size() const;
};

double quartic_log_weight(const CVector& field, const QuarticSpec& spec);
// Upper bound sum_x vol 32 lambda^3 / (27 epsilon^2) on the log weight.
double quartic_log_weight_bound(std::size_t points, const QuarticSpec& spec);
WeightedFieldEnsemble reweight_quartic(const std::vector<FieldSample>& samples, const QuarticSpec& spec);

}  // namespace beables
