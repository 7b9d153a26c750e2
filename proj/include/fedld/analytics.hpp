#pragma once

#include "fedld/core.hpp"
#include "fedld/potentials.hpp"

namespace fedld {

/// Gaussian law with a symmetric positive-definite covariance.
class GaussianLaw {
 public:
  GaussianLaw(Vector mean, Matrix covariance);

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  Index dim() const { return mean_.size(); }
  /// sum of variances, the mean squared distance to the mean
  double total_variance() const { return covariance_.trace(); }
  Matrix precision() const;

 private:
  Vector mean_;
  Matrix covariance_;
};

/// pi proportional to exp(-sum_i U^i) for an all-Gaussian set, prior included.
GaussianLaw gaussian_product_posterior(const PotentialSet& set);

/// Symmetric square root through an eigendecomposition; eigenvalues below
/// 1e-14 are treated as zero. Throws InputError when clearly indefinite.
Matrix psd_sqrt(const Matrix& a);

/// Bures formula on PSD covariances, no PD check.
double bures_w2(const Vector& mean_a, const Matrix& cov_a, const Vector& mean_b, const Matrix& cov_b);

double w2_gaussian(const GaussianLaw& a, const GaussianLaw& b);

/// 2 / (lambda_min + lambda_max) of the posterior precision.
double reference_step_size(const GaussianLaw& posterior);

/// Two 1-d Gaussian clients N(mu1, var1), N(mu2, var2), each running two
/// local steps between averaging rounds.
struct TwoClientGaussianSpec {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double var1 = 1.0;
  double var2 = 1.0;

  void validate() const;
  double product_variance() const;  // sigma-bar^2
  double product_mean() const;      // m-bar
  /// Largest step for which the two-step averaged kernel is a contraction.
  double max_step() const;
  GaussianLaw target() const;
};

/// Stationary law of the averaged two-local-step chain
///   X' = alpha X + beta + sqrt(gamma) [(1 - gamma / (2 sbar^2)) Z1 + Z2].
GaussianLaw fald_two_step_stationary(const TwoClientGaussianSpec& spec, double gamma);

/// (gamma/2) |mu1 - mu2| |sbar^2/var1 - sbar^2/var2|
double heterogeneity_lower_bound(const TwoClientGaussianSpec& spec, double gamma);

/// One step of the averaged two-client chain given two standard normals.
double two_step_recursion(const TwoClientGaussianSpec& spec, double gamma, double x, double z1, double z2);

}  // namespace fedld
