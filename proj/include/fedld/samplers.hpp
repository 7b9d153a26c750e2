#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedld/core.hpp"
#include "fedld/potentials.hpp"

namespace fedld {

/// Noise correlation across clients. Each client's Gaussian input is
///   Z^i = sqrt(tau / b) Z_shared + sqrt(1 - tau) Z_local^i
/// so the client average always has covariance I/b and pairs of clients have
/// covariance (tau / b) I. With b = 1 this is sqrt(tau) Z + sqrt(1-tau) Z^1.
struct NoiseSpec {
  double tau = 0.0;
  Index dim = 1;
  std::size_t num_clients = 1;

  void validate() const;
  double shared_coef() const;
  double local_coef() const;
};

Vector correlated_noise(const Vector& shared_draw, const Vector& local_draw, double tau,
                        std::size_t num_clients);

enum class RuleKind { plain, variance_reduced };
enum class GradientMode { stochastic, exact };

/// Which local gradient a client feeds into its Langevin step.
///   plain:             G = grad-hat U^i(X^i)
///   variance_reduced:  G = grad-hat U^i(X^i) - grad-hat U^i(Y) + C   (same batch twice)
/// The exact mode replaces grad-hat by the full gradient.
struct LocalGradientRule {
  RuleKind kind = RuleKind::plain;
  GradientMode mode = GradientMode::stochastic;

  bool uses_control_variate() const { return kind == RuleKind::variance_reduced; }
  std::string name() const;
  static LocalGradientRule parse(const std::string& rule, const std::string& mode = "stochastic");
};

/// Reference point Y and shift C = (1/b) sum_i grad U^i(Y).
struct ControlVariateState {
  Vector reference;
  Vector shift;
};

/// Y_0 = client average, C_0 = (1/b) sum_i grad U^i(Y_0).
ControlVariateState init_control_variate(const PotentialSet& set, std::span<const Vector> client_params);

/// Refreshes (Y, C) from the given client parameters when `triggered`,
/// otherwise returns the state unchanged.
ControlVariateState update_control_variate(const ControlVariateState& cv,
                                           std::span<const Vector> client_params,
                                           const PotentialSet& set, bool triggered);

Vector fald_gradient(const ClientPotential& client, const Vector& x,
                     std::span<const std::size_t> batch, GradientMode mode = GradientMode::stochastic);

Vector vrfald_gradient(const ClientPotential& client, const Vector& x, const ControlVariateState& cv,
                       std::span<const std::size_t> batch,
                       GradientMode mode = GradientMode::stochastic);

/// out = G for the given rule. `cv` is only read by the variance-reduced rule
/// and `batch` only in stochastic mode. A batch of size N_i is taken to be the
/// full index set (batches come from BatchSampler, which never repeats) and
/// uses the exact gradient.
void local_gradient_into(const LocalGradientRule& rule, const ClientPotential& client, const Vector& x,
                         const ControlVariateState& cv, std::span<const std::size_t> batch,
                         Vector& out);

/// x - gamma g + sqrt(2 gamma) z
Vector local_step(const Vector& x, const Vector& g, double gamma, const Vector& z);

/// Centralised Langevin step on sum_i U^i:
///   x - (gamma / b) sum_i grad U^i(x) + sqrt(2 gamma / b) z
Vector ula_step(const PotentialSet& set, const Vector& x, double gamma, const Vector& z);

/// Uniform subsets of [N] of a fixed size, without replacement. Partial
/// Fisher-Yates whose swaps are undone after each draw, so a draw depends on
/// the generator state only.
class BatchSampler {
 public:
  BatchSampler(std::size_t population, std::size_t batch_size);

  std::span<const std::size_t> draw(std::mt19937_64& rng);
  std::size_t population() const { return perm_.size(); }
  std::size_t batch_size() const { return batch_size_; }

 private:
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> picks_;
  std::vector<std::size_t> batch_;
  std::size_t batch_size_;
};

}  // namespace fedld
