#pragma once

#include <cstdint>
#include <optional>

#include <nlohmann/json.hpp>

#include "fedld/core.hpp"

namespace fedld {

/// Minimise the iteration count K over (K, gamma) subject to
///   c0 exp(-K gamma m / 8) + c1 gamma + c2 gamma^2 <= eps^2.
struct BudgetProblem {
  double c0 = 1.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double m = 1.0;
  double epsilon = 0.1;

  void validate() const;
};

struct BudgetSolution {
  double gamma = 0.0;
  double iterations_real = 0.0;  // K at the saturated constraint
  std::uint64_t iterations = 0;  // ceil of the above
  // Standardised coordinate of gamma / eps^2 inside the feasible interval;
  // absent when c2 = 0 and the constraint is linear in gamma.
  std::optional<double> z;
  std::optional<double> mu;
  std::optional<double> sigma;
  double c2_tilde = 0.0;
  double constraint_value = 0.0;  // left-hand side at (iterations_real, gamma)
};

/// Throws InfeasibleError when no finite optimum exists (c1 = c2 = 0, or
/// c0 <= eps^2 so that K = 0 already works).
BudgetSolution budget_optimize(const BudgetProblem& p);

/// K(gamma) on the saturated constraint; +inf outside the feasible interval.
double budget_iterations(const BudgetProblem& p, double gamma);
/// Largest gamma with c1 gamma + c2 gamma^2 < eps^2.
double budget_max_step(const BudgetProblem& p);

nlohmann::json to_json(const BudgetProblem& p);
nlohmann::json to_json(const BudgetSolution& s);
BudgetProblem budget_problem_from_json(const nlohmann::json& doc);
BudgetSolution budget_solution_from_json(const nlohmann::json& doc);

}  // namespace fedld
