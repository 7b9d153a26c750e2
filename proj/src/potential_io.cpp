#include <fstream>
#include <sstream>

#include "fedld/potentials.hpp"

namespace fedld {

namespace {

using nlohmann::json;

Vector parse_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + " must be an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw ParseError(where + " must contain numbers");
    v[static_cast<Index>(k)] = j[k].get<double>();
  }
  return v;
}

Matrix parse_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ParseError(where + " must be a nonempty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw ParseError(where + " rows must be nonempty arrays");
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ParseError(where + " is ragged");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ParseError(where + " must contain numbers");
      m(static_cast<Index>(r), static_cast<Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

std::shared_ptr<const PotentialModel> parse_client(const json& c, const std::string& where) {
  if (!c.is_object() || !c.contains("type")) throw ParseError(where + ".type is required");
  const auto type = c["type"].get<std::string>();
  if (type == "gaussian") {
    if (c.contains("terms")) {
      std::vector<GaussianTerm> terms;
      const auto& arr = c["terms"];
      if (!arr.is_array() || arr.empty()) throw ParseError(where + ".terms must be a nonempty array");
      for (std::size_t k = 0; k < arr.size(); ++k) {
        const auto w = where + ".terms[" + std::to_string(k) + "]";
        if (!arr[k].contains("mean") || !arr[k].contains("precision")) {
          throw ParseError(w + " needs mean and precision");
        }
        terms.push_back({parse_vector(arr[k]["mean"], w + ".mean"),
                         parse_matrix(arr[k]["precision"], w + ".precision")});
      }
      auto g = std::make_shared<GaussianPotential>(GaussianPotential::from_terms(std::move(terms)));
      if (c.contains("mean")) {
        const Vector m = parse_vector(c["mean"], where + ".mean");
        if (m.size() != g->dim() || (m - g->mean()).norm() > 1e-8 * (1.0 + g->mean().norm())) {
          throw ParseError(where + ".mean is inconsistent with its terms");
        }
      }
      return g;
    }
    if (!c.contains("mean") || !c.contains("precision")) {
      throw ParseError(where + " needs mean and precision");
    }
    return std::make_shared<GaussianPotential>(parse_vector(c["mean"], where + ".mean"),
                                               parse_matrix(c["precision"], where + ".precision"));
  }
  if (type == "logistic") {
    if (!c.contains("covariates") || !c.contains("labels")) {
      throw ParseError(where + " needs covariates and labels");
    }
    const double ridge = c.value("ridge", 0.0);
    return std::make_shared<LogisticPotential>(parse_matrix(c["covariates"], where + ".covariates"),
                                               parse_vector(c["labels"], where + ".labels"), ridge);
  }
  throw ParseError(where + ".type must be \"gaussian\" or \"logistic\"");
}

}  // namespace

PotentialSet PotentialSet::from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("potential set must be a JSON object");
  if (!doc.contains("clients") || !doc["clients"].is_array() || doc["clients"].empty()) {
    throw ParseError("clients must be a nonempty array");
  }
  std::vector<std::shared_ptr<const PotentialModel>> clients;
  const auto& arr = doc["clients"];
  for (std::size_t i = 0; i < arr.size(); ++i) {
    try {
      clients.push_back(parse_client(arr[i], "clients[" + std::to_string(i) + "]"));
    } catch (const InputError& e) {
      throw ParseError("clients[" + std::to_string(i) + "]: " + e.what());
    }
  }
  Vector weights;
  if (doc.contains("prior_weights")) weights = parse_vector(doc["prior_weights"], "prior_weights");
  const double rho = doc.value("prior_precision", 0.0);
  PotentialSet set(std::move(clients), std::move(weights), rho);
  if (doc.contains("dim") && doc["dim"].get<Index>() != set.dim()) {
    throw ParseError("dim does not match the client dimension");
  }
  return set;
}

json PotentialSet::to_json() const {
  json doc;
  doc["dim"] = dim_;
  doc["prior_weights"] = std::vector<double>(prior_weights_.data(), prior_weights_.data() + prior_weights_.size());
  if (prior_precision_ != 0.0) doc["prior_precision"] = prior_precision_;
  auto arr = json::array();
  for (const auto& c : clients_) arr.push_back(c->to_json());
  doc["clients"] = std::move(arr);
  return doc;
}

PotentialSet load_potential_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open potential set file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return PotentialSet::from_json(doc);
}

void save_potential_set(const PotentialSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << set.to_json().dump(2) << '\n';
}

}  // namespace fedld
