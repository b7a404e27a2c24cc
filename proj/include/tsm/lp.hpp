#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsm/model.hpp"

namespace tsm {

struct LpRow {
  std::vector<std::pair<int, double>> terms;
  Sense sense = Sense::GreaterEqual;
  double rhs = 0.0;
  std::string label;
};

/// min objective . x  s.t. rows, lower <= x <= upper. Bounds may be infinite.
struct LpProblem {
  int num_vars = 0;
  std::vector<double> objective;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<LpRow> constraints;

  int add_var(double cost, double lo, double hi);
  int add_row(LpRow row);
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

std::string_view to_string(LpStatus status);

/// Sign convention: duals of ">=" rows are >= 0 and duals of "<=" rows are
/// <= 0, so the dual of a demand row reads directly as a price. Bound duals
/// satisfy  c - A^T y - mu_lower + mu_upper = 0  with both mu >= 0.
struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  std::vector<double> primal;
  std::vector<double> duals;
  std::vector<double> mu_lower;
  std::vector<double> mu_upper;
  double objective_value = 0.0;
  /// Row multipliers of the phase-one optimum when infeasible.
  std::vector<double> farkas;
  /// Improving direction over the structural variables when unbounded.
  std::vector<double> ray;
  int iterations = 0;
  /// Some basic variable sits on one of its bounds.
  bool basis_degenerate = false;
};

struct LpOptions {
  double pivot_tol = 1e-9;
  double feasibility_tol = 1e-8;
  double optimality_tol = 1e-9;
  /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
  int degenerate_limit = 50;
  int refactor_every = 100;
  int max_iterations = 0;  // 0: scale with problem size
  std::ostream* trace = nullptr;
};

/// Dense bounded-variable two-phase primal simplex. Throws
/// Error(NumericalFailure) when the iteration budget is exhausted even under
/// Bland's rule or the basis becomes singular.
LpSolution solve_lp(const LpProblem& problem, const LpOptions& options = {});

struct MeritOrderResult {
  std::vector<double> dispatch;
  double price = 0.0;
  /// Index of the resource that sets the price, -1 when demand is zero.
  int marginal = -1;
};

/// Closed-form clearing of a single service over box-constrained resources:
/// fill in ascending cost (ties by index) until demand is met. The price is
/// the cost of the last resource used, 0 for zero demand.
MeritOrderResult merit_order_clear(std::span<const double> costs, std::span<const double> caps,
                                   double demand);

struct KktReport {
  double stationarity = 0.0;
  double dual_sign = 0.0;
  double complementarity = 0.0;
  double primal_feasibility = 0.0;
  double duality_gap = 0.0;
  int worst_stationarity_var = -1;
  bool degenerate = false;
  bool passed = false;
};

/// Residuals of the optimality conditions of `solution` for `problem`:
/// stationarity per variable, dual sign conditions, complementary slackness
/// products, plus primal feasibility and relative duality gap.
KktReport verify_kkt(const LpProblem& problem, const LpSolution& solution, double tol);

}  // namespace tsm
