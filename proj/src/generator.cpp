#include <cmath>
#include <random>

#include "fedld/potentials.hpp"

namespace fedld {

PotentialSet generate_gaussian_set(const GaussianSetParams& p) {
  if (p.num_clients == 0) throw ConfigError("must be positive", "clients");
  if (p.dim <= 0) throw ConfigError("must be positive", "dim");
  if (!(p.condition_number >= 1.0)) throw ConfigError("must be >= 1", "condition_number");
  if (!(p.precision_scale > 0.0)) throw ConfigError("must be positive", "precision_scale");
  if (!(p.mean_spread >= 0.0)) throw ConfigError("must be nonnegative", "mean_spread");
  if (!(p.term_spread >= 0.0)) throw ConfigError("must be nonnegative", "term_spread");
  if (p.terms_per_client == 0) throw ConfigError("must be positive", "terms_per_client");

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  auto gaussian_vector = [&](Index n) {
    Vector v(n);
    for (Index k = 0; k < n; ++k) v[k] = normal(rng);
    return v;
  };

  const Index d = p.dim;
  std::vector<std::shared_ptr<const PotentialModel>> clients;
  for (std::size_t i = 0; i < p.num_clients; ++i) {
    Matrix g(d, d);
    for (Index c = 0; c < d; ++c) g.col(c) = gaussian_vector(d);
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    Vector eig(d);
    for (Index k = 0; k < d; ++k) eig[k] = p.precision_scale * std::pow(p.condition_number, unif(rng));
    const Matrix precision = q * eig.asDiagonal() * q.transpose();
    const Vector mean = p.mean_spread * gaussian_vector(d);

    if (p.terms_per_client == 1) {
      clients.push_back(std::make_shared<GaussianPotential>(mean, 0.5 * (precision + precision.transpose())));
      continue;
    }
    const std::size_t n = p.terms_per_client;
    std::vector<double> w(n);
    double total = 0.0;
    for (auto& wj : w) total += (wj = 0.5 + unif(rng));
    std::vector<Vector> delta(n);
    Vector centre = Vector::Zero(d);
    for (std::size_t j = 0; j < n; ++j) {
      w[j] /= total;
      delta[j] = p.term_spread * gaussian_vector(d);
      centre += w[j] * delta[j];
    }
    std::vector<GaussianTerm> terms;
    for (std::size_t j = 0; j < n; ++j) {
      Matrix pj = w[j] * precision;
      terms.push_back({mean + delta[j] - centre, 0.5 * (pj + pj.transpose())});
    }
    clients.push_back(std::make_shared<GaussianPotential>(GaussianPotential::from_terms(std::move(terms))));
  }
  return PotentialSet(std::move(clients));
}

GaussianSetParams gaussian_set_params_from_json(const nlohmann::json& doc) {
  GaussianSetParams p;
  if (!doc.is_object()) throw ConfigError("must be an object", "generate");
  auto get = [&](const char* key, auto& field) {
    if (!doc.contains(key)) return;
    try {
      field = doc[key].get<std::decay_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("has the wrong type", std::string("generate.") + key);
    }
  };
  get("clients", p.num_clients);
  get("dim", p.dim);
  get("seed", p.seed);
  get("mean_spread", p.mean_spread);
  get("condition_number", p.condition_number);
  get("precision_scale", p.precision_scale);
  get("terms_per_client", p.terms_per_client);
  get("term_spread", p.term_spread);
  return p;
}

nlohmann::json to_json(const GaussianSetParams& p) {
  return {{"clients", p.num_clients},           {"dim", p.dim},
          {"seed", p.seed},                     {"mean_spread", p.mean_spread},
          {"condition_number", p.condition_number}, {"precision_scale", p.precision_scale},
          {"terms_per_client", p.terms_per_client}, {"term_spread", p.term_spread}};
}

}  // namespace fedld
