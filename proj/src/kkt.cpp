#include <algorithm>
#include <cmath>

#include "tsm/error.hpp"
#include "tsm/lp.hpp"

namespace tsm {

KktReport verify_kkt(const LpProblem& problem, const LpSolution& solution, double tol) {
  if (solution.status != LpStatus::Optimal) {
    throw Error(ErrorCode::Infeasible, "KKT verification needs an optimal solution");
  }
  const int n = problem.num_vars;
  const int m = static_cast<int>(problem.constraints.size());
  KktReport report;
  report.degenerate = solution.basis_degenerate;

  // Stationarity: c_j - sum_i y_i a_ij - mu_lower_j + mu_upper_j = 0.
  std::vector<double> grad(problem.objective);
  for (int i = 0; i < m; ++i) {
    for (auto [j, a] : problem.constraints[i].terms) grad[j] -= solution.duals[i] * a;
  }
  for (int j = 0; j < n; ++j) {
    const double r = std::abs(grad[j] - solution.mu_lower[j] + solution.mu_upper[j]);
    if (r > report.stationarity) {
      report.stationarity = r;
      report.worst_stationarity_var = j;
    }
  }

  // Dual signs; a bound dual on an infinite bound is a sign violation too.
  for (int j = 0; j < n; ++j) {
    double v = std::max(-solution.mu_lower[j], 0.0);
    v = std::max(v, -solution.mu_upper[j]);
    if (!std::isfinite(problem.lower[j])) v = std::max(v, std::abs(solution.mu_lower[j]));
    if (!std::isfinite(problem.upper[j])) v = std::max(v, std::abs(solution.mu_upper[j]));
    report.dual_sign = std::max(report.dual_sign, v);
  }
  std::vector<double> activity(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    const auto& row = problem.constraints[i];
    for (auto [j, a] : row.terms) activity[i] += a * solution.primal[j];
    const double y = solution.duals[i];
    if (row.sense == Sense::GreaterEqual) report.dual_sign = std::max(report.dual_sign, -y);
    if (row.sense == Sense::LessEqual) report.dual_sign = std::max(report.dual_sign, y);
  }

  // Complementary slackness and primal feasibility.
  for (int j = 0; j < n; ++j) {
    const double x = solution.primal[j];
    if (std::isfinite(problem.lower[j])) {
      report.complementarity =
          std::max(report.complementarity, std::abs(solution.mu_lower[j] * (x - problem.lower[j])));
      report.primal_feasibility = std::max(report.primal_feasibility, problem.lower[j] - x);
    }
    if (std::isfinite(problem.upper[j])) {
      report.complementarity =
          std::max(report.complementarity, std::abs(solution.mu_upper[j] * (problem.upper[j] - x)));
      report.primal_feasibility = std::max(report.primal_feasibility, x - problem.upper[j]);
    }
  }
  double dual_objective = 0.0;
  for (int i = 0; i < m; ++i) {
    const auto& row = problem.constraints[i];
    const double gap = activity[i] - row.rhs;
    if (row.sense != Sense::Equal) {
      report.complementarity = std::max(report.complementarity, std::abs(solution.duals[i] * gap));
    }
    double viol = 0.0;
    switch (row.sense) {
      case Sense::LessEqual: viol = gap; break;
      case Sense::GreaterEqual: viol = -gap; break;
      case Sense::Equal: viol = std::abs(gap); break;
    }
    report.primal_feasibility = std::max(report.primal_feasibility, viol);
    dual_objective += solution.duals[i] * row.rhs;
  }
  for (int j = 0; j < n; ++j) {
    if (solution.mu_lower[j] != 0.0 && std::isfinite(problem.lower[j])) {
      dual_objective += solution.mu_lower[j] * problem.lower[j];
    }
    if (solution.mu_upper[j] != 0.0 && std::isfinite(problem.upper[j])) {
      dual_objective -= solution.mu_upper[j] * problem.upper[j];
    }
  }
  report.duality_gap = std::abs(solution.objective_value - dual_objective) /
                       (1.0 + std::abs(solution.objective_value));

  report.passed = report.stationarity <= tol && report.dual_sign <= tol &&
                  report.complementarity <= tol && report.primal_feasibility <= tol &&
                  report.duality_gap <= tol;
  return report;
}

}  // namespace tsm
