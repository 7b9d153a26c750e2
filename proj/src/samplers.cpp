#include "fedld/samplers.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>

namespace fedld {

void NoiseSpec::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InputError("tau must lie in [0, 1]");
  if (dim <= 0) throw InputError("noise dimension must be positive");
  if (num_clients == 0) throw InputError("num_clients must be positive");
}

double NoiseSpec::shared_coef() const { return std::sqrt(tau / static_cast<double>(num_clients)); }
double NoiseSpec::local_coef() const { return std::sqrt(1.0 - tau); }

Vector correlated_noise(const Vector& shared_draw, const Vector& local_draw, double tau,
                        std::size_t num_clients) {
  const NoiseSpec spec{tau, shared_draw.size(), num_clients};
  spec.validate();
  if (local_draw.size() != shared_draw.size()) throw InputError("noise draws differ in dimension");
  return spec.shared_coef() * shared_draw + spec.local_coef() * local_draw;
}

std::string LocalGradientRule::name() const {
  std::string s = kind == RuleKind::plain ? "fald" : "vr_fald";
  return mode == GradientMode::exact ? s + "_exact" : s;
}

LocalGradientRule LocalGradientRule::parse(const std::string& rule, const std::string& mode) {
  LocalGradientRule r;
  if (rule == "fald") {
    r.kind = RuleKind::plain;
  } else if (rule == "vr_fald") {
    r.kind = RuleKind::variance_reduced;
  } else {
    throw ConfigError("unknown rule \"" + rule + "\" (expected fald or vr_fald)", "rule");
  }
  if (mode == "stochastic") {
    r.mode = GradientMode::stochastic;
  } else if (mode == "exact") {
    r.mode = GradientMode::exact;
  } else {
    throw ConfigError("unknown gradient mode \"" + mode + "\" (expected stochastic or exact)",
                      "gradient");
  }
  return r;
}

namespace {
Vector client_average(std::span<const Vector> params) {
  if (params.empty()) throw InputError("no client parameters");
  Vector avg = Vector::Zero(params.front().size());
  for (const auto& p : params) avg += p;
  return avg / static_cast<double>(params.size());
}

Vector average_full_gradient(const PotentialSet& set, const Vector& y) {
  Vector c = Vector::Zero(set.dim());
  for (std::size_t i = 0; i < set.size(); ++i) set.client(i).add_grad(y, c);
  return c / static_cast<double>(set.size());
}
}  // namespace

ControlVariateState init_control_variate(const PotentialSet& set, std::span<const Vector> client_params) {
  ControlVariateState cv;
  cv.reference = client_average(client_params);
  cv.shift = average_full_gradient(set, cv.reference);
  return cv;
}

ControlVariateState update_control_variate(const ControlVariateState& cv,
                                           std::span<const Vector> client_params,
                                           const PotentialSet& set, bool triggered) {
  if (!triggered) return cv;
  return init_control_variate(set, client_params);
}

Vector fald_gradient(const ClientPotential& client, const Vector& x,
                     std::span<const std::size_t> batch, GradientMode mode) {
  return mode == GradientMode::exact ? grad(client, x) : stochastic_grad(client, x, batch);
}

Vector vrfald_gradient(const ClientPotential& client, const Vector& x, const ControlVariateState& cv,
                       std::span<const std::size_t> batch, GradientMode mode) {
  if (x.size() != client.dim() || cv.reference.size() != client.dim() ||
      cv.shift.size() != client.dim()) {
    throw InputError("dimension mismatch in variance-reduced gradient");
  }
  Vector out(client.dim());
  local_gradient_into({RuleKind::variance_reduced, mode}, client, x, cv, batch, out);
  return out;
}

void local_gradient_into(const LocalGradientRule& rule, const ClientPotential& client, const Vector& x,
                         const ControlVariateState& cv, std::span<const std::size_t> batch,
                         Vector& out) {
  out.setZero();
  // a full batch is the exact gradient; take the cheaper aggregate path
  const bool exact = rule.mode == GradientMode::exact || batch.size() == client.model.num_terms();
  if (rule.kind == RuleKind::plain) {
    if (exact) {
      client.add_grad(x, out);
    } else {
      client.add_stochastic_grad(x, batch, out);
    }
    return;
  }
  if (exact) {
    client.add_grad_diff(x, cv.reference, out);
  } else {
    client.add_stochastic_grad_diff(x, cv.reference, batch, out);
  }
  out += cv.shift;
}

Vector local_step(const Vector& x, const Vector& g, double gamma, const Vector& z) {
  if (!(gamma > 0.0)) throw ConfigError("step size must be positive", "gamma");
  if (g.size() != x.size() || z.size() != x.size()) throw InputError("dimension mismatch in local step");
  return x - gamma * g + std::sqrt(2.0 * gamma) * z;
}

Vector ula_step(const PotentialSet& set, const Vector& x, double gamma, const Vector& z) {
  if (!(gamma > 0.0)) throw ConfigError("step size must be positive", "gamma");
  if (x.size() != set.dim() || z.size() != set.dim()) throw InputError("dimension mismatch in ULA step");
  const double b = static_cast<double>(set.size());
  Vector sum = Vector::Zero(set.dim());
  for (std::size_t i = 0; i < set.size(); ++i) set.client(i).add_grad(x, sum);
  return x - (gamma / b) * sum + std::sqrt(2.0 * gamma / b) * z;
}

BatchSampler::BatchSampler(std::size_t population, std::size_t batch_size)
    : perm_(population), picks_(batch_size), batch_(batch_size), batch_size_(batch_size) {
  if (batch_size == 0 || batch_size > population) {
    throw ConfigError("batch size must lie in [1, N_i]", "batch_size");
  }
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  std::iota(batch_.begin(), batch_.end(), std::size_t{0});
}

std::span<const std::size_t> BatchSampler::draw(std::mt19937_64& rng) {
  const std::size_t n = perm_.size();
  if (batch_size_ == n) return batch_;  // full batch, no randomness consumed
  for (std::size_t k = 0; k < batch_size_; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n - 1);
    picks_[k] = pick(rng);
    std::swap(perm_[k], perm_[picks_[k]]);
  }
  std::copy_n(perm_.begin(), batch_size_, batch_.begin());
  for (std::size_t k = batch_size_; k-- > 0;) std::swap(perm_[k], perm_[picks_[k]]);
  return batch_;
}

}  // namespace fedld
