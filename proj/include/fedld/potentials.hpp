#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedld/core.hpp"

namespace fedld {

enum class PotentialFamily { gaussian, logistic };

/// A client's local potential, written as a deterministic part plus a finite
/// sum of terms:  U(x) = F(x) + sum_j U_j(x).  The prior allocation is not part
/// of the model; see ClientPotential.
///
/// The `add_*` members accumulate into `out` so the sampler kernels can run
/// without temporaries. Implementations are immutable after construction.
class PotentialModel {
 public:
  virtual ~PotentialModel() = default;

  virtual PotentialFamily family() const = 0;
  virtual Index dim() const = 0;
  virtual std::size_t num_terms() const = 0;

  virtual double value(const Vector& x) const = 0;
  /// out += grad U(x)
  virtual void add_grad(const Vector& x, Vector& out) const = 0;
  /// out += grad F(x), the part that is never subsampled.
  virtual void add_fixed_grad(const Vector& x, Vector& out) const = 0;
  /// out += grad F(x) - grad F(y)
  virtual void add_fixed_grad_diff(const Vector& x, const Vector& y, Vector& out) const;
  /// out += scale * grad U_j(x)
  virtual void add_term_grad(std::size_t j, const Vector& x, double scale, Vector& out) const = 0;
  /// out += scale * (grad U_j(x) - grad U_j(y))
  virtual void add_term_grad_diff(std::size_t j, const Vector& x, const Vector& y, double scale,
                                  Vector& out) const;
  /// out += grad U(x) - grad U(y)
  virtual void add_grad_diff(const Vector& x, const Vector& y, Vector& out) const;

  virtual Matrix hessian(const Vector& x) const = 0;

  /// Lipschitz constant of grad U_j.
  virtual double term_lipschitz(std::size_t j) const = 0;
  /// Strong-convexity and smoothness constants of U (exact for Gaussians,
  /// conservative bounds for logistic models).
  virtual double strong_convexity() const = 0;
  virtual double smoothness() const = 0;

  virtual nlohmann::json to_json() const = 0;
};

struct GaussianTerm {
  Vector mean;
  Matrix precision;
};

/// U(x) = 1/2 (x - mean)^T P (x - mean), optionally split into quadratic terms
/// U_j(x) = 1/2 (x - mean_j)^T P_j (x - mean_j) with P = sum_j P_j and
/// mean = P^{-1} sum_j P_j mean_j. The value uses the aggregate form, which
/// differs from the term sum by a constant.
class GaussianPotential final : public PotentialModel {
 public:
  GaussianPotential(Vector mean, Matrix precision);
  static GaussianPotential from_terms(std::vector<GaussianTerm> terms);

  PotentialFamily family() const override { return PotentialFamily::gaussian; }
  Index dim() const override { return mean_.size(); }
  std::size_t num_terms() const override { return terms_.size(); }

  double value(const Vector& x) const override;
  void add_grad(const Vector& x, Vector& out) const override;
  void add_fixed_grad(const Vector&, Vector&) const override {}
  void add_fixed_grad_diff(const Vector&, const Vector&, Vector&) const override {}
  void add_term_grad(std::size_t j, const Vector& x, double scale, Vector& out) const override;
  void add_term_grad_diff(std::size_t j, const Vector& x, const Vector& y, double scale,
                          Vector& out) const override;
  void add_grad_diff(const Vector& x, const Vector& y, Vector& out) const override;
  Matrix hessian(const Vector&) const override { return precision_; }
  double term_lipschitz(std::size_t j) const override { return term_lipschitz_.at(j); }
  double strong_convexity() const override { return eig_min_; }
  double smoothness() const override { return eig_max_; }
  nlohmann::json to_json() const override;

  const Vector& mean() const { return mean_; }
  const Matrix& precision() const { return precision_; }
  const std::vector<GaussianTerm>& terms() const { return terms_; }

 private:
  GaussianPotential() = default;
  void finalize();

  Vector mean_;
  Matrix precision_;
  std::vector<GaussianTerm> terms_;
  std::vector<Vector> term_shift_;  // P_j mean_j
  std::vector<double> term_lipschitz_;
  double eig_min_ = 0.0;
  double eig_max_ = 0.0;
};

/// Ridge-regularised logistic regression:
///   U(x) = ridge |x|^2 + sum_j [log(1 + exp(z_j^T x)) - o_j z_j^T x].
/// The ridge is the deterministic part; rows are the terms.
class LogisticPotential final : public PotentialModel {
 public:
  LogisticPotential(Matrix covariates, Vector labels, double ridge);

  PotentialFamily family() const override { return PotentialFamily::logistic; }
  Index dim() const override { return covariates_.cols(); }
  std::size_t num_terms() const override { return static_cast<std::size_t>(covariates_.rows()); }

  double value(const Vector& x) const override;
  void add_grad(const Vector& x, Vector& out) const override;
  void add_fixed_grad(const Vector& x, Vector& out) const override;
  void add_fixed_grad_diff(const Vector& x, const Vector& y, Vector& out) const override;
  void add_term_grad(std::size_t j, const Vector& x, double scale, Vector& out) const override;
  Matrix hessian(const Vector& x) const override;
  double term_lipschitz(std::size_t j) const override;
  double strong_convexity() const override { return 2.0 * ridge_; }
  double smoothness() const override { return 2.0 * ridge_ + gram_eig_max_ / 4.0; }
  nlohmann::json to_json() const override;

  const Matrix& covariates() const { return covariates_; }
  const Vector& labels() const { return labels_; }
  double ridge() const { return ridge_; }

 private:
  Matrix covariates_;
  Vector labels_;
  double ridge_;
  double gram_eig_max_ = 0.0;
};

/// One client's view inside a set: its model, its share w_i of the global
/// prior U^0(x) = rho/2 |x|^2, and rho itself.
///   U^i(x) = w_i U^0(x) + F(x) + sum_j U_j(x)
struct ClientPotential {
  const PotentialModel& model;
  double prior_weight = 0.0;
  double prior_precision = 0.0;

  Index dim() const { return model.dim(); }
  double value(const Vector& x) const;
  void add_grad(const Vector& x, Vector& out) const;
  /// out += w_i grad U^0(x) + grad F(x) + (N/n) sum_{j in batch} grad U_j(x)
  void add_stochastic_grad(const Vector& x, std::span<const std::size_t> batch, Vector& out) const;
  /// Same batch at both points; the prior and fixed parts cancel in closed form
  /// for Gaussians and are differenced otherwise.
  void add_stochastic_grad_diff(const Vector& x, const Vector& y, std::span<const std::size_t> batch,
                                Vector& out) const;
  void add_grad_diff(const Vector& x, const Vector& y, Vector& out) const;
  Matrix hessian(const Vector& x) const;
};

class PotentialSet {
 public:
  /// Empty `prior_weights` means uniform 1/b.
  PotentialSet(std::vector<std::shared_ptr<const PotentialModel>> clients, Vector prior_weights = {},
               double prior_precision = 0.0);

  std::size_t size() const { return clients_.size(); }
  Index dim() const { return dim_; }
  ClientPotential client(std::size_t i) const {
    return {*clients_.at(i), prior_weights_[static_cast<Index>(i)], prior_precision_};
  }
  const PotentialModel& model(std::size_t i) const { return *clients_.at(i); }
  const Vector& prior_weights() const { return prior_weights_; }
  double prior_precision() const { return prior_precision_; }
  bool all_gaussian() const;

  double total_value(const Vector& x) const;
  Vector total_grad(const Vector& x) const;
  Matrix total_hessian(const Vector& x) const;

  nlohmann::json to_json() const;
  static PotentialSet from_json(const nlohmann::json& doc);

 private:
  std::vector<std::shared_ptr<const PotentialModel>> clients_;
  Vector prior_weights_;
  double prior_precision_;
  Index dim_ = 0;
};

struct ConstantsReport {
  Vector minimizer;
  double heterogeneity = 0.0;
  double strong_convexity = 0.0;       // m
  double smoothness = 0.0;             // L
  double stochastic_smoothness = 0.0;  // L-hat
  double vr_variance_const = 0.0;      // omega
  double grad_variance_const = 0.0;    // omega-tilde
};

Vector grad(const ClientPotential& client, const Vector& x);
Vector stochastic_grad(const ClientPotential& client, const Vector& x,
                       std::span<const std::size_t> batch);

/// Global minimiser of sum_i U^i: closed form for all-Gaussian sets, damped
/// Newton with backtracking otherwise (200 iterations, residual 1e-8 (1+|x|)).
Vector minimizer(const PotentialSet& set);

/// H = (1/b) sum_i |grad U^i(x_*)|^2
double heterogeneity(const PotentialSet& set);
double heterogeneity(const PotentialSet& set, const Vector& x_star);

/// `batch_sizes` holds n_i per client; an empty span means full batches.
ConstantsReport constants(const PotentialSet& set, std::span<const std::size_t> batch_sizes);

/// Load / save the potential-set JSON document.
PotentialSet load_potential_set(const std::string& path);
void save_potential_set(const PotentialSet& set, const std::string& path);

/// Parameters of the heterogeneous Gaussian generator.
struct GaussianSetParams {
  std::size_t num_clients = 10;
  Index dim = 5;
  std::uint64_t seed = 1;
  double mean_spread = 1.0;        // client means ~ N(0, spread^2 I)
  double condition_number = 10.0;  // per-client precision eigenvalues in [scale, scale*kappa]
  double precision_scale = 1.0;
  std::size_t terms_per_client = 1;
  double term_spread = 0.0;  // term means scatter around the client mean
};

PotentialSet generate_gaussian_set(const GaussianSetParams& params);
GaussianSetParams gaussian_set_params_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const GaussianSetParams& params);

}  // namespace fedld
