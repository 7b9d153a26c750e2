#pragma once

#include <span>
#include <vector>

#include "fedld/analytics.hpp"
#include "fedld/core.hpp"
#include "fedld/federation.hpp"

namespace fedld {

struct MomentSummary {
  Vector mean;
  Matrix covariance;  // unbiased
  std::size_t count = 0;
  double mean_sq_dist_to_mean = 0.0;  // (1/n) sum |X - mean|^2

  /// (1/n) sum |X_k - point|^2
  double second_moment_about(const Vector& point) const;
};

MomentSummary moments(std::span<const Vector> samples);
MomentSummary moments(const SampleTrace& trace);

/// ((1/n) sum |X_k - x_*|^2 - tr Sigma_*)^2
double variance_mse(std::span<const Vector> samples, const GaussianLaw& posterior);
double variance_mse(const SampleTrace& trace, const GaussianLaw& posterior);

/// Exact W2 between two 1-d empirical measures (quantile coupling). Unequal
/// sizes are handled by integrating over the merged quantile grid.
double empirical_w2_1d(std::span<const double> a, std::span<const double> b);

struct FitW2 {
  double distance = 0.0;
  bool regularized = false;  // fitted covariance needed +1e-10 I
};

FitW2 gaussian_fit_w2(std::span<const Vector> samples, const GaussianLaw& reference);
FitW2 gaussian_fit_w2(const SampleTrace& trace, const GaussianLaw& reference);

struct HpdEstimate {
  double alpha = 0.0;
  double threshold = 0.0;
};

/// (1 - alpha)-quantile of potential values, linear interpolation between
/// order statistics.
HpdEstimate hpd_threshold(std::span<const double> potential_values, double alpha);

/// Linear-interpolation quantile of unsorted data, q in [0, 1].
double quantile(std::vector<double> values, double q);

/// One coordinate of every sample.
std::vector<double> coordinate(std::span<const Vector> samples, Index k);

}  // namespace fedld
