#include "fedld/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace fedld {

double MomentSummary::second_moment_about(const Vector& point) const {
  if (point.size() != mean.size()) throw InputError("dimension mismatch in second moment");
  // E|X - p|^2 = E|X - mean|^2 + |mean - p|^2
  return mean_sq_dist_to_mean + (mean - point).squaredNorm();
}

MomentSummary moments(std::span<const Vector> samples) {
  if (samples.size() < 2) throw InputError("moments need at least two samples");
  const Index d = samples.front().size();
  MomentSummary s;
  s.count = samples.size();
  s.mean = Vector::Zero(d);
  for (const auto& x : samples) {
    if (x.size() != d) throw InputError("samples differ in dimension");
    s.mean += x;
  }
  s.mean /= static_cast<double>(s.count);
  s.covariance = Matrix::Zero(d, d);
  Vector c(d);
  for (const auto& x : samples) {
    c = x - s.mean;
    s.covariance.selfadjointView<Eigen::Lower>().rankUpdate(c);
  }
  s.covariance = s.covariance.selfadjointView<Eigen::Lower>();
  s.mean_sq_dist_to_mean = s.covariance.trace() / static_cast<double>(s.count);
  s.covariance /= static_cast<double>(s.count - 1);
  return s;
}

MomentSummary moments(const SampleTrace& trace) { return moments(trace.samples); }

double variance_mse(std::span<const Vector> samples, const GaussianLaw& posterior) {
  if (samples.empty()) throw InputError("variance MSE needs at least one sample");
  double acc = 0.0;
  for (const auto& x : samples) {
    if (x.size() != posterior.dim()) throw InputError("sample dimension does not match the posterior");
    acc += (x - posterior.mean()).squaredNorm();
  }
  const double dev = acc / static_cast<double>(samples.size()) - posterior.total_variance();
  return dev * dev;
}

double variance_mse(const SampleTrace& trace, const GaussianLaw& posterior) {
  return variance_mse(trace.samples, posterior);
}

double empirical_w2_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InputError("empirical W2 needs nonempty samples");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double acc = 0.0;
  if (sa.size() == sb.size()) {
    for (std::size_t k = 0; k < sa.size(); ++k) acc += (sa[k] - sb[k]) * (sa[k] - sb[k]);
    return std::sqrt(acc / static_cast<double>(sa.size()));
  }
  // integrate (F_a^{-1}(u) - F_b^{-1}(u))^2 over the merged breakpoints i/n_a, j/n_b
  const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double u = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double next_a = static_cast<double>(i + 1) / na, next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    acc += (next - u) * (sa[i] - sb[j]) * (sa[i] - sb[j]);
    u = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return std::sqrt(acc);
}

FitW2 gaussian_fit_w2(std::span<const Vector> samples, const GaussianLaw& reference) {
  const auto m = moments(samples);
  if (m.mean.size() != reference.dim()) throw InputError("sample dimension does not match the reference");
  FitW2 out;
  Matrix cov = m.covariance;
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < 1e-14) {
    cov += 1e-10 * Matrix::Identity(cov.rows(), cov.cols());
    out.regularized = true;
  }
  out.distance = bures_w2(m.mean, cov, reference.mean(), reference.covariance());
  return out;
}

FitW2 gaussian_fit_w2(const SampleTrace& trace, const GaussianLaw& reference) {
  return gaussian_fit_w2(trace.samples, reference);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw InputError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

HpdEstimate hpd_threshold(std::span<const double> potential_values, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
  return {alpha, quantile({potential_values.begin(), potential_values.end()}, 1.0 - alpha)};
}

std::vector<double> coordinate(std::span<const Vector> samples, Index k) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& x : samples) {
    if (k < 0 || k >= x.size()) throw InputError("coordinate index out of range");
    out.push_back(x[k]);
  }
  return out;
}

}  // namespace fedld
