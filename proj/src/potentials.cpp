#include "fedld/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fedld {

namespace {

void check_dim(const PotentialModel& model, const Vector& x) {
  if (x.size() != model.dim()) {
    throw InputError("dimension mismatch: expected " + std::to_string(model.dim()) + ", got " +
                     std::to_string(x.size()));
  }
}

// Symmetric within 1e-12 relative; returns the symmetrised matrix.
Matrix checked_symmetric(const Matrix& m, const std::string& what) {
  if (m.rows() != m.cols()) throw InputError(what + " is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InputError(what + " is not symmetric");
  }
  return 0.5 * (m + m.transpose());
}

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

// ----------------------------------------------------------------------------
// PotentialModel defaults

void PotentialModel::add_fixed_grad_diff(const Vector& x, const Vector& y, Vector& out) const {
  Vector tmp = Vector::Zero(dim());
  add_fixed_grad(y, tmp);
  add_fixed_grad(x, out);
  out -= tmp;
}

void PotentialModel::add_term_grad_diff(std::size_t j, const Vector& x, const Vector& y, double scale,
                                        Vector& out) const {
  add_term_grad(j, x, scale, out);
  add_term_grad(j, y, -scale, out);
}

void PotentialModel::add_grad_diff(const Vector& x, const Vector& y, Vector& out) const {
  Vector tmp = Vector::Zero(dim());
  add_grad(y, tmp);
  add_grad(x, out);
  out -= tmp;
}

// ----------------------------------------------------------------------------
// GaussianPotential

GaussianPotential::GaussianPotential(Vector mean, Matrix precision) {
  if (mean.size() == 0) throw InputError("gaussian potential needs a nonempty mean");
  if (precision.rows() != mean.size()) throw InputError("precision/mean dimension mismatch");
  terms_.push_back({std::move(mean), checked_symmetric(precision, "precision")});
  finalize();
}

GaussianPotential GaussianPotential::from_terms(std::vector<GaussianTerm> terms) {
  if (terms.empty()) throw InputError("gaussian potential needs at least one term");
  GaussianPotential g;
  const Index d = terms.front().mean.size();
  for (auto& t : terms) {
    if (t.mean.size() != d || t.precision.rows() != d) {
      throw InputError("gaussian terms have inconsistent dimensions");
    }
    t.precision = checked_symmetric(t.precision, "term precision");
  }
  g.terms_ = std::move(terms);
  g.finalize();
  return g;
}

void GaussianPotential::finalize() {
  const Index d = terms_.front().mean.size();
  precision_ = Matrix::Zero(d, d);
  Vector shift = Vector::Zero(d);
  term_shift_.clear();
  term_lipschitz_.clear();
  for (const auto& t : terms_) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(t.precision, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())) {
      throw InputError("term precision is not positive semidefinite");
    }
    term_lipschitz_.push_back(std::max(0.0, es.eigenvalues().maxCoeff()));
    term_shift_.push_back(t.precision * t.mean);
    precision_ += t.precision;
    shift += term_shift_.back();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(precision_, Eigen::EigenvaluesOnly);
  eig_min_ = es.eigenvalues().minCoeff();
  eig_max_ = es.eigenvalues().maxCoeff();
  if (!(eig_min_ > 0.0)) throw InputError("precision is not positive definite");
  if (terms_.size() == 1) {
    mean_ = terms_.front().mean;
  } else {
    mean_ = precision_.llt().solve(shift);
  }
}

double GaussianPotential::value(const Vector& x) const {
  check_dim(*this, x);
  const Vector r = x - mean_;
  return 0.5 * r.dot(precision_ * r);
}

void GaussianPotential::add_grad(const Vector& x, Vector& out) const {
  out.noalias() += precision_ * (x - mean_);
}

void GaussianPotential::add_term_grad(std::size_t j, const Vector& x, double scale,
                                      Vector& out) const {
  out.noalias() += scale * (terms_[j].precision * x);
  out.noalias() -= scale * term_shift_[j];
}

void GaussianPotential::add_term_grad_diff(std::size_t j, const Vector& x, const Vector& y,
                                           double scale, Vector& out) const {
  out.noalias() += scale * (terms_[j].precision * (x - y));
}

void GaussianPotential::add_grad_diff(const Vector& x, const Vector& y, Vector& out) const {
  out.noalias() += precision_ * (x - y);
}

nlohmann::json GaussianPotential::to_json() const {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto mat = [](const Matrix& m) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) rows[static_cast<std::size_t>(r)].push_back(m(r, c));
    }
    return rows;
  };
  nlohmann::json j{{"type", "gaussian"}, {"mean", vec(mean_)}, {"precision", mat(precision_)}};
  if (terms_.size() > 1) {
    auto arr = nlohmann::json::array();
    for (const auto& t : terms_) arr.push_back({{"mean", vec(t.mean)}, {"precision", mat(t.precision)}});
    j["terms"] = std::move(arr);
  }
  return j;
}

// ----------------------------------------------------------------------------
// LogisticPotential

LogisticPotential::LogisticPotential(Matrix covariates, Vector labels, double ridge)
    : covariates_(std::move(covariates)), labels_(std::move(labels)), ridge_(ridge) {
  if (covariates_.rows() == 0 || covariates_.cols() == 0) {
    throw InputError("logistic potential needs a nonempty covariate matrix");
  }
  if (labels_.size() != covariates_.rows()) {
    throw InputError("labels length does not match covariate rows");
  }
  for (Index j = 0; j < labels_.size(); ++j) {
    if (labels_[j] != 0.0 && labels_[j] != 1.0) throw InputError("labels must be 0 or 1");
  }
  if (!(ridge_ >= 0.0) || !std::isfinite(ridge_)) throw InputError("ridge must be nonnegative");
  Eigen::SelfAdjointEigenSolver<Matrix> es(covariates_.transpose() * covariates_,
                                           Eigen::EigenvaluesOnly);
  gram_eig_max_ = es.eigenvalues().maxCoeff();
}

double LogisticPotential::value(const Vector& x) const {
  check_dim(*this, x);
  const Vector t = covariates_ * x;
  double v = ridge_ * x.squaredNorm();
  for (Index j = 0; j < t.size(); ++j) v += softplus(t[j]) - labels_[j] * t[j];
  return v;
}

void LogisticPotential::add_grad(const Vector& x, Vector& out) const {
  const Vector t = covariates_ * x;
  Vector w(t.size());
  for (Index j = 0; j < t.size(); ++j) w[j] = sigmoid(t[j]) - labels_[j];
  out.noalias() += covariates_.transpose() * w;
  out.noalias() += 2.0 * ridge_ * x;
}

void LogisticPotential::add_fixed_grad(const Vector& x, Vector& out) const {
  out.noalias() += 2.0 * ridge_ * x;
}

void LogisticPotential::add_fixed_grad_diff(const Vector& x, const Vector& y, Vector& out) const {
  out.noalias() += 2.0 * ridge_ * (x - y);
}

void LogisticPotential::add_term_grad(std::size_t j, const Vector& x, double scale,
                                      Vector& out) const {
  const auto row = covariates_.row(static_cast<Index>(j));
  const double r = sigmoid(row.dot(x)) - labels_[static_cast<Index>(j)];
  out.noalias() += (scale * r) * row.transpose();
}

Matrix LogisticPotential::hessian(const Vector& x) const {
  const Vector t = covariates_ * x;
  Vector w(t.size());
  for (Index j = 0; j < t.size(); ++j) {
    const double s = sigmoid(t[j]);
    w[j] = s * (1.0 - s);
  }
  Matrix h = covariates_.transpose() * w.asDiagonal() * covariates_;
  h.diagonal().array() += 2.0 * ridge_;
  return h;
}

double LogisticPotential::term_lipschitz(std::size_t j) const {
  return covariates_.row(static_cast<Index>(j)).squaredNorm() / 4.0;
}

nlohmann::json LogisticPotential::to_json() const {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(covariates_.rows()));
  for (Index r = 0; r < covariates_.rows(); ++r) {
    for (Index c = 0; c < covariates_.cols(); ++c) {
      rows[static_cast<std::size_t>(r)].push_back(covariates_(r, c));
    }
  }
  std::vector<int> labels;
  for (Index j = 0; j < labels_.size(); ++j) labels.push_back(static_cast<int>(labels_[j]));
  return {{"type", "logistic"}, {"covariates", rows}, {"labels", labels}, {"ridge", ridge_}};
}

// ----------------------------------------------------------------------------
// ClientPotential

double ClientPotential::value(const Vector& x) const {
  return 0.5 * prior_weight * prior_precision * x.squaredNorm() + model.value(x);
}

void ClientPotential::add_grad(const Vector& x, Vector& out) const {
  if (prior_weight != 0.0 && prior_precision != 0.0) out.noalias() += (prior_weight * prior_precision) * x;
  model.add_grad(x, out);
}

namespace {
void check_batch(const PotentialModel& model, std::span<const std::size_t> batch) {
  if (batch.empty()) throw InputError("empty minibatch");
  const std::size_t n = model.num_terms();
  for (std::size_t j : batch) {
    if (j >= n) throw InputError("minibatch index " + std::to_string(j) + " out of range");
  }
  if (batch.size() > n) throw InputError("minibatch larger than the number of terms");
}
}  // namespace

void ClientPotential::add_stochastic_grad(const Vector& x, std::span<const std::size_t> batch,
                                          Vector& out) const {
  check_batch(model, batch);
  if (prior_weight != 0.0 && prior_precision != 0.0) out.noalias() += (prior_weight * prior_precision) * x;
  model.add_fixed_grad(x, out);
  const double scale = static_cast<double>(model.num_terms()) / static_cast<double>(batch.size());
  for (std::size_t j : batch) model.add_term_grad(j, x, scale, out);
}

void ClientPotential::add_stochastic_grad_diff(const Vector& x, const Vector& y,
                                               std::span<const std::size_t> batch,
                                               Vector& out) const {
  check_batch(model, batch);
  if (prior_weight != 0.0 && prior_precision != 0.0) {
    out.noalias() += (prior_weight * prior_precision) * (x - y);
  }
  model.add_fixed_grad_diff(x, y, out);
  const double scale = static_cast<double>(model.num_terms()) / static_cast<double>(batch.size());
  for (std::size_t j : batch) model.add_term_grad_diff(j, x, y, scale, out);
}

void ClientPotential::add_grad_diff(const Vector& x, const Vector& y, Vector& out) const {
  if (prior_weight != 0.0 && prior_precision != 0.0) {
    out.noalias() += (prior_weight * prior_precision) * (x - y);
  }
  model.add_grad_diff(x, y, out);
}

Matrix ClientPotential::hessian(const Vector& x) const {
  Matrix h = model.hessian(x);
  h.diagonal().array() += prior_weight * prior_precision;
  return h;
}

Vector grad(const ClientPotential& client, const Vector& x) {
  check_dim(client.model, x);
  Vector out = Vector::Zero(client.dim());
  client.add_grad(x, out);
  return out;
}

Vector stochastic_grad(const ClientPotential& client, const Vector& x,
                       std::span<const std::size_t> batch) {
  check_dim(client.model, x);
  Vector out = Vector::Zero(client.dim());
  client.add_stochastic_grad(x, batch, out);
  return out;
}

// ----------------------------------------------------------------------------
// PotentialSet

PotentialSet::PotentialSet(std::vector<std::shared_ptr<const PotentialModel>> clients,
                           Vector prior_weights, double prior_precision)
    : clients_(std::move(clients)),
      prior_weights_(std::move(prior_weights)),
      prior_precision_(prior_precision) {
  if (clients_.empty()) throw InputError("potential set needs at least one client");
  for (const auto& c : clients_) {
    if (!c) throw InputError("null client model");
  }
  dim_ = clients_.front()->dim();
  for (const auto& c : clients_) {
    if (c->dim() != dim_) throw InputError("clients do not share the same dimension");
  }
  const auto b = static_cast<Index>(clients_.size());
  if (prior_weights_.size() == 0) prior_weights_ = Vector::Constant(b, 1.0 / static_cast<double>(b));
  if (prior_weights_.size() != b) throw InputError("prior_weights length must equal client count");
  if ((prior_weights_.array() < 0.0).any()) throw InputError("prior_weights must be nonnegative");
  // the split only matters when there is a prior to split
  if (prior_precision_ > 0.0 && std::abs(prior_weights_.sum() - 1.0) > 1e-9) {
    throw InputError("prior_weights must sum to 1");
  }
  if (!(prior_precision_ >= 0.0) || !std::isfinite(prior_precision_)) {
    throw InputError("prior_precision must be nonnegative");
  }
}

bool PotentialSet::all_gaussian() const {
  return std::all_of(clients_.begin(), clients_.end(),
                     [](const auto& c) { return c->family() == PotentialFamily::gaussian; });
}

double PotentialSet::total_value(const Vector& x) const {
  double v = 0.0;
  for (std::size_t i = 0; i < size(); ++i) v += client(i).value(x);
  return v;
}

Vector PotentialSet::total_grad(const Vector& x) const {
  if (x.size() != dim_) throw InputError("dimension mismatch");
  Vector g = Vector::Zero(dim_);
  for (std::size_t i = 0; i < size(); ++i) client(i).add_grad(x, g);
  return g;
}

Matrix PotentialSet::total_hessian(const Vector& x) const {
  Matrix h = Matrix::Zero(dim_, dim_);
  for (std::size_t i = 0; i < size(); ++i) h += client(i).hessian(x);
  return h;
}

// ----------------------------------------------------------------------------
// Global quantities

Vector minimizer(const PotentialSet& set) {
  const Index d = set.dim();
  if (set.all_gaussian()) {
    Matrix p = Matrix::Zero(d, d);
    Vector rhs = Vector::Zero(d);
    for (std::size_t i = 0; i < set.size(); ++i) {
      const auto& g = static_cast<const GaussianPotential&>(set.model(i));
      p += g.precision();
      rhs += g.precision() * g.mean();
    }
    p.diagonal().array() += set.prior_precision();
    Eigen::LLT<Matrix> llt(p);
    if (llt.info() != Eigen::Success) throw NumericalError("precision sum is not positive definite");
    return llt.solve(rhs);
  }

  constexpr int kMaxIter = 200;
  constexpr double kTol = 1e-8;
  Vector x = Vector::Zero(d);
  double fx = set.total_value(x);
  for (int it = 0; it < kMaxIter; ++it) {
    const Vector g = set.total_grad(x);
    if (g.norm() <= kTol * (1.0 + x.norm())) {
      // One more full step costs nothing and usually lands at machine precision.
      const Vector polished = x - set.total_hessian(x).ldlt().solve(g);
      if (set.total_grad(polished).norm() < g.norm()) return polished;
      return x;
    }
    const Matrix h = set.total_hessian(x);
    Eigen::LDLT<Matrix> ldlt(h);
    if (ldlt.info() != Eigen::Success) throw NumericalError("singular Hessian in Newton solve");
    const Vector dx = -ldlt.solve(g);
    const double slope = g.dot(dx);
    double t = 1.0;
    double ft = set.total_value(x + dx);
    while (!(ft <= fx + 1e-4 * t * slope) && t > 1e-12) {
      t *= 0.5;
      ft = set.total_value(x + t * dx);
    }
    x += t * dx;
    fx = ft;
    if (!x.allFinite()) break;
  }
  throw NumericalError("Newton solve for the minimizer did not converge in 200 iterations");
}

double heterogeneity(const PotentialSet& set, const Vector& x_star) {
  double h = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) h += grad(set.client(i), x_star).squaredNorm();
  return h / static_cast<double>(set.size());
}

double heterogeneity(const PotentialSet& set) { return heterogeneity(set, minimizer(set)); }

ConstantsReport constants(const PotentialSet& set, std::span<const std::size_t> batch_sizes) {
  const std::size_t b = set.size();
  if (!batch_sizes.empty() && batch_sizes.size() != b) {
    throw InputError("batch_sizes length must equal client count");
  }
  ConstantsReport rep;
  rep.minimizer = minimizer(set);
  rep.heterogeneity = heterogeneity(set, rep.minimizer);
  rep.strong_convexity = std::numeric_limits<double>::infinity();
  rep.smoothness = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double prior = set.prior_weights()[static_cast<Index>(i)] * set.prior_precision();
    rep.strong_convexity = std::min(rep.strong_convexity, set.model(i).strong_convexity() + prior);
    rep.smoothness = std::max(rep.smoothness, set.model(i).smoothness() + prior);
  }
  const double L = rep.smoothness;

  // Sampling-without-replacement factor n(N-n)/(N(N-1)) times max_j L_j, per client.
  double max_factor = 0.0;
  double sum_factor = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto& model = set.model(i);
    const std::size_t N = model.num_terms();
    const std::size_t n = batch_sizes.empty() ? N : batch_sizes[i];
    if (n == 0 || n > N) throw InputError("batch size must lie in [1, N_i]");
    if (n == N) continue;
    double lmax = 0.0;
    for (std::size_t j = 0; j < N; ++j) lmax = std::max(lmax, model.term_lipschitz(j));
    const double nn = static_cast<double>(n);
    const double NN = static_cast<double>(N);
    const double f = nn * (NN - nn) / (NN * (NN - 1.0)) * lmax;
    max_factor = std::max(max_factor, f);
    sum_factor += f;
  }
  rep.stochastic_smoothness = L * std::sqrt(1.0 + max_factor / L);
  rep.vr_variance_const = max_factor * L;
  rep.grad_variance_const = sum_factor / static_cast<double>(b * b) * L;
  return rep;
}

}  // namespace fedld
