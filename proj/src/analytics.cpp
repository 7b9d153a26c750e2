#include "fedld/analytics.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace fedld {

namespace {
constexpr double kEigenFloor = 1e-14;

void check_square_symmetric(const Matrix& a, const char* what) {
  if (a.rows() != a.cols()) throw InputError(std::string(what) + " must be square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InputError(std::string(what) + " must be symmetric");
  }
}
}  // namespace

GaussianLaw::GaussianLaw(Vector mean, Matrix covariance) : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  if (covariance_.rows() != mean_.size()) throw InputError("covariance does not match the mean dimension");
  check_square_symmetric(covariance_, "covariance");
  if (!mean_.allFinite() || !covariance_.allFinite()) throw InputError("Gaussian law has non-finite entries");
  covariance_ = 0.5 * (covariance_ + covariance_.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(covariance_, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < kEigenFloor) throw InputError("covariance is not positive definite");
}

Matrix GaussianLaw::precision() const {
  return covariance_.llt().solve(Matrix::Identity(dim(), dim()));
}

GaussianLaw gaussian_product_posterior(const PotentialSet& set) {
  if (!set.all_gaussian()) throw InputError("product posterior needs an all-Gaussian set");
  const Index d = set.dim();
  Matrix precision = set.prior_precision() * Matrix::Identity(d, d);
  Vector shift = Vector::Zero(d);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& g = static_cast<const GaussianPotential&>(set.model(i));
    precision += g.precision();
    shift += g.precision() * g.mean();
  }
  precision = 0.5 * (precision + precision.transpose());
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalError("summed precision is not positive definite");
  Matrix cov = llt.solve(Matrix::Identity(d, d));
  cov = 0.5 * (cov + cov.transpose());
  return GaussianLaw(llt.solve(shift), std::move(cov));
}

Matrix psd_sqrt(const Matrix& a) {
  check_square_symmetric(a, "matrix");
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  Vector ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -1e-10 * scale) throw InputError("matrix is not positive semidefinite");
  for (Index k = 0; k < ev.size(); ++k) ev[k] = ev[k] < kEigenFloor ? 0.0 : std::sqrt(ev[k]);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double bures_w2(const Vector& mean_a, const Matrix& cov_a, const Vector& mean_b, const Matrix& cov_b) {
  if (mean_a.size() != mean_b.size() || cov_a.rows() != mean_a.size() || cov_b.rows() != mean_b.size()) {
    throw InputError("dimension mismatch in Wasserstein distance");
  }
  const Matrix ra = psd_sqrt(cov_a);
  const Matrix cross = psd_sqrt(ra * cov_b * ra);
  const double sq = (mean_a - mean_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
  return std::sqrt(std::max(sq, 0.0));
}

double w2_gaussian(const GaussianLaw& a, const GaussianLaw& b) {
  if (a.dim() != b.dim()) throw InputError("dimension mismatch in Wasserstein distance");
  if (a.dim() == 1) {
    return std::hypot(a.mean()[0] - b.mean()[0],
                      std::sqrt(a.covariance()(0, 0)) - std::sqrt(b.covariance()(0, 0)));
  }
  return bures_w2(a.mean(), a.covariance(), b.mean(), b.covariance());
}

double reference_step_size(const GaussianLaw& posterior) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(posterior.precision(), Eigen::EigenvaluesOnly);
  return 2.0 / (es.eigenvalues().minCoeff() + es.eigenvalues().maxCoeff());
}

void TwoClientGaussianSpec::validate() const {
  if (!(var1 > 0.0) || !(var2 > 0.0)) throw InputError("client variances must be positive");
  if (!std::isfinite(mu1) || !std::isfinite(mu2) || !std::isfinite(var1) || !std::isfinite(var2)) {
    throw InputError("two-client parameters must be finite");
  }
}

double TwoClientGaussianSpec::product_variance() const { return 1.0 / (1.0 / var1 + 1.0 / var2); }

double TwoClientGaussianSpec::product_mean() const { return (mu1 * var2 + mu2 * var1) / (var1 + var2); }

double TwoClientGaussianSpec::max_step() const {
  validate();
  const double s4 = 1.0 / (var1 * var1) + 1.0 / (var2 * var2);
  return 2.0 / (product_variance() * s4);
}

GaussianLaw TwoClientGaussianSpec::target() const {
  validate();
  return GaussianLaw(Vector::Constant(1, product_mean()), Matrix::Constant(1, 1, product_variance()));
}

namespace {
void check_step(const TwoClientGaussianSpec& spec, double gamma) {
  spec.validate();
  if (!(gamma > 0.0) || !(gamma < spec.max_step())) {
    throw InputError("step size outside the admissible interval (0, " + std::to_string(spec.max_step()) + ")");
  }
}
}  // namespace

GaussianLaw fald_two_step_stationary(const TwoClientGaussianSpec& spec, double gamma) {
  check_step(spec, gamma);
  const double v = spec.product_variance();
  const double s = std::sqrt(v);
  const double s4 = 1.0 / (spec.var1 * spec.var1) + 1.0 / (spec.var2 * spec.var2);
  const double m4 = spec.mu1 / (spec.var1 * spec.var1) + spec.mu2 / (spec.var2 * spec.var2);

  const double mean = (spec.product_mean() - 0.5 * gamma * v * m4) / (1.0 - 0.5 * gamma * v * s4);
  const double inner = 1.0 / s - 0.5 * gamma * s * s4;
  const double var = (v - 0.5 * gamma + gamma * gamma / (8.0 * v)) /
                     (1.0 - 0.5 * gamma * v * s4 - 0.5 * gamma * inner * inner);
  return GaussianLaw(Vector::Constant(1, mean), Matrix::Constant(1, 1, var));
}

double heterogeneity_lower_bound(const TwoClientGaussianSpec& spec, double gamma) {
  check_step(spec, gamma);
  const double v = spec.product_variance();
  return 0.5 * gamma * std::abs(spec.mu1 - spec.mu2) * std::abs(v / spec.var1 - v / spec.var2);
}

double two_step_recursion(const TwoClientGaussianSpec& spec, double gamma, double x, double z1, double z2) {
  const double v = spec.product_variance();
  const double m = spec.product_mean();
  const double drift4 = (x - spec.mu1) / (spec.var1 * spec.var1) + (x - spec.mu2) / (spec.var2 * spec.var2);
  return x - gamma / v * (x - m) + 0.5 * gamma * gamma * drift4 +
         std::sqrt(gamma) * ((1.0 - gamma / (2.0 * v)) * z1 + z2);
}

}  // namespace fedld
