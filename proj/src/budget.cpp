#include "fedld/budget.hpp"

#include <cmath>
#include <limits>

namespace fedld {

void BudgetProblem::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(c0) || !finite(c1) || !finite(c2) || !finite(m) || !finite(epsilon)) {
    throw InputError("budget problem has non-finite fields");
  }
  if (c0 < 0.0 || c1 < 0.0 || c2 < 0.0) throw InputError("c0, c1, c2 must be nonnegative");
  if (!(m > 0.0)) throw InputError("m must be positive");
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
}

double budget_max_step(const BudgetProblem& p) {
  const double e2 = p.epsilon * p.epsilon;
  if (p.c2 > 0.0) return 2.0 * e2 / (p.c1 + std::sqrt(p.c1 * p.c1 + 4.0 * p.c2 * e2));
  if (p.c1 > 0.0) return e2 / p.c1;
  return std::numeric_limits<double>::infinity();
}

double budget_iterations(const BudgetProblem& p, double gamma) {
  const double slack = p.epsilon * p.epsilon - p.c1 * gamma - p.c2 * gamma * gamma;
  if (!(gamma > 0.0) || !(slack > 0.0)) return std::numeric_limits<double>::infinity();
  return 8.0 / (gamma * p.m) * std::log(p.c0 / slack);
}

namespace {

// In x = gamma / eps^2 the objective is proportional to f(x) / x with
// f(x) = log(c0 / eps^2) - log(1 - c1 x - c2t x^2). f is convex and increasing,
// so g(x) = x f'(x) - f(x) is increasing and its root is the unique minimiser.
struct Scaled {
  double a, c1, c2t;
  double s(double x) const { return 1.0 - c1 * x - c2t * x * x; }
  double f(double x) const { return a - std::log(s(x)); }
  double df(double x) const { return (c1 + 2.0 * c2t * x) / s(x); }
  double d2f(double x) const {
    const double sx = s(x), u = c1 + 2.0 * c2t * x;
    return (2.0 * c2t * sx + u * u) / (sx * sx);
  }
  double g(double x) const { return x * df(x) - f(x); }
  double objective(double x) const { return f(x) / x; }
};

double golden_section(const Scaled& h, double lo, double hi) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - invphi * (hi - lo), x2 = lo + invphi * (hi - lo);
  double f1 = h.objective(x1), f2 = h.objective(x2);
  for (int it = 0; it < 300 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - invphi * (hi - lo);
      f1 = h.objective(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + invphi * (hi - lo);
      f2 = h.objective(x2);
    }
  }
  return 0.5 * (lo + hi);
}

// Newton on g with a bisection safeguard inside the bracket (lo, hi).
double polish(const Scaled& h, double x, double lo, double hi) {
  for (int it = 0; it < 100; ++it) {
    const double gx = h.g(x);
    if (gx < 0.0) lo = x; else hi = x;
    const double dg = x * h.d2f(x);
    double next = x - gx / dg;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, x)) return next;
    x = next;
  }
  return x;
}

}  // namespace

BudgetSolution budget_optimize(const BudgetProblem& p) {
  p.validate();
  const double e2 = p.epsilon * p.epsilon;
  if (p.c1 == 0.0 && p.c2 == 0.0) {
    throw InfeasibleError("c1 = c2 = 0: K decreases without bound as gamma grows");
  }
  if (p.c0 <= e2) throw InfeasibleError("c0 <= eps^2: the constraint holds with K = 0");

  const Scaled h{std::log(p.c0 / e2), p.c1, e2 * p.c2};
  const double x_max = budget_max_step(p) / e2;
  // the objective blows up at both ends; keep golden section off the boundary
  const double x_opt = polish(h, golden_section(h, x_max * 1e-12, x_max * (1.0 - 1e-12)), 0.0, x_max);

  BudgetSolution sol;
  sol.c2_tilde = h.c2t;
  if (p.c2 > 0.0) {
    const double mu = -p.c1 / (2.0 * h.c2t);
    const double sigma = std::sqrt(p.c1 * p.c1 / (4.0 * h.c2t * h.c2t) + 1.0 / h.c2t);
    const double z = (x_opt - mu) / sigma;
    sol.mu = mu;
    sol.sigma = sigma;
    sol.z = z;
    const double root = std::sqrt(0.25 * p.c1 * p.c1 + h.c2t);
    sol.gamma = e2 * (z * z + (z * z - 1.0) * p.c1 * p.c1 / (4.0 * h.c2t)) / (0.5 * p.c1 + z * root);
  } else {
    sol.gamma = e2 * x_opt;
  }
  sol.iterations_real = budget_iterations(p, sol.gamma);
  if (!std::isfinite(sol.iterations_real)) throw NumericalError("budget optimum left the feasible interval");
  sol.iterations = static_cast<std::uint64_t>(std::ceil(sol.iterations_real));
  sol.constraint_value = p.c0 * std::exp(-sol.iterations_real * sol.gamma * p.m / 8.0) + p.c1 * sol.gamma +
                         p.c2 * sol.gamma * sol.gamma;
  return sol;
}

nlohmann::json to_json(const BudgetProblem& p) {
  return {{"c0", p.c0}, {"c1", p.c1}, {"c2", p.c2}, {"m", p.m}, {"epsilon", p.epsilon}};
}

nlohmann::json to_json(const BudgetSolution& s) {
  nlohmann::json j{{"gamma", s.gamma},
                   {"iterations", s.iterations},
                   {"iterations_real", s.iterations_real},
                   {"c2_tilde", s.c2_tilde},
                   {"constraint_value", s.constraint_value}};
  j["z"] = s.z ? nlohmann::json(*s.z) : nlohmann::json(nullptr);
  j["mu"] = s.mu ? nlohmann::json(*s.mu) : nlohmann::json(nullptr);
  j["sigma"] = s.sigma ? nlohmann::json(*s.sigma) : nlohmann::json(nullptr);
  return j;
}

namespace {
double number_field(const nlohmann::json& doc, const char* key, bool required, double fallback = 0.0) {
  if (!doc.contains(key)) {
    if (required) throw ParseError(std::string("missing field ") + key);
    return fallback;
  }
  if (!doc[key].is_number()) throw ParseError(std::string(key) + " must be a number");
  return doc[key].get<double>();
}

std::optional<double> optional_field(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
  if (!doc[key].is_number()) throw ParseError(std::string(key) + " must be a number or null");
  return doc[key].get<double>();
}
}  // namespace

BudgetProblem budget_problem_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("budget problem must be a JSON object");
  BudgetProblem p;
  p.c0 = number_field(doc, "c0", true);
  p.c1 = number_field(doc, "c1", false, 0.0);
  p.c2 = number_field(doc, "c2", false, 0.0);
  p.m = number_field(doc, "m", true);
  p.epsilon = number_field(doc, "epsilon", true);
  return p;
}

BudgetSolution budget_solution_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("budget solution must be a JSON object");
  BudgetSolution s;
  s.gamma = number_field(doc, "gamma", true);
  s.iterations_real = number_field(doc, "iterations_real", true);
  if (!doc.contains("iterations") || !doc["iterations"].is_number_unsigned()) {
    throw ParseError("iterations must be a nonnegative integer");
  }
  s.iterations = doc["iterations"].get<std::uint64_t>();
  s.c2_tilde = number_field(doc, "c2_tilde", false, 0.0);
  s.constraint_value = number_field(doc, "constraint_value", false, 0.0);
  s.z = optional_field(doc, "z");
  s.mu = optional_field(doc, "mu");
  s.sigma = optional_field(doc, "sigma");
  return s;
}

}  // namespace fedld
