#include <doctest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tsm/error.hpp"
#include "tsm/lp.hpp"

using namespace tsm;

namespace {

LpProblem single_service(const std::vector<double>& costs, const std::vector<double>& caps,
                         double demand) {
  LpProblem p;
  LpRow row;
  for (std::size_t k = 0; k < costs.size(); ++k) {
    int j = p.add_var(costs[k], 0.0, caps[k]);
    row.terms.push_back({j, 1.0});
  }
  row.sense = Sense::GreaterEqual;
  row.rhs = demand;
  p.add_row(row);
  return p;
}

}  // namespace

TEST_CASE("two-resource clearing matches the merit-order oracle") {
  // Oracle: integer split enumeration gives min cost 90 at d=7 and 70 at d=6,
  // so the marginal price (left derivative) is 20.
  auto c7 = oracle::min_cost_integer_split({10, 20}, {5, 5}, 7);
  auto c6 = oracle::min_cost_integer_split({10, 20}, {5, 5}, 6);
  REQUIRE(c7.has_value());
  CHECK(*c7 == 90);
  CHECK(*c7 - *c6 == 20);

  auto p = single_service({10, 20}, {5, 5}, 7);
  auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::Optimal);
  CHECK(sol.primal[0] == doctest::Approx(5.0));
  CHECK(sol.primal[1] == doctest::Approx(2.0));
  CHECK(sol.duals[0] == doctest::Approx(20.0));
  CHECK(sol.objective_value == doctest::Approx(90.0));

  auto report = verify_kkt(p, sol, 1e-7);
  CHECK(report.passed);
  // Resource A sits at its cap: 10 - 20 - 0 + 10 = 0.
  CHECK(sol.mu_upper[0] == doctest::Approx(10.0));
  CHECK(sol.mu_lower[0] == doctest::Approx(0.0));
  CHECK(report.stationarity <= 1e-9);
}

TEST_CASE("identity and infeasible cases") {
  LpProblem p;
  p.add_var(1.0, 0.0, kInf);
  auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::Optimal);
  CHECK(sol.primal[0] == 0.0);
  CHECK(sol.objective_value == 0.0);

  auto infeasible = single_service({1, 1}, {3, 3}, 7);
  auto s2 = solve_lp(infeasible);
  CHECK(s2.status == LpStatus::Infeasible);
  REQUIRE(s2.farkas.size() == 1);
  CHECK(s2.farkas[0] != 0.0);
}

TEST_CASE("unbounded problems report an improving ray") {
  LpProblem p;
  int x = p.add_var(-1.0, 0.0, kInf);
  int y = p.add_var(0.0, 0.0, kInf);
  p.add_row({{{x, 1.0}, {y, -1.0}}, Sense::LessEqual, 1.0, "x-y<=1"});
  auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::Unbounded);
  REQUIRE(sol.ray.size() == 2);
  CHECK(sol.ray[0] > 0.0);
  CHECK(sol.ray[0] - sol.ray[1] <= 1e-12);
}

TEST_CASE("zero demand gives zero duals and zero residuals") {
  auto p = single_service({10, 20}, {5, 5}, 0);
  auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::Optimal);
  CHECK(sol.duals[0] == 0.0);
  auto report = verify_kkt(p, sol, 1e-9);
  CHECK(report.passed);
  CHECK(report.stationarity == 0.0);
  CHECK(report.complementarity == 0.0);
}

TEST_CASE("a corrupted price is caught by the stationarity check") {
  auto p = single_service({10, 20}, {5, 5}, 7);
  auto sol = solve_lp(p);
  sol.duals[0] += 1.0;
  auto report = verify_kkt(p, sol, 1e-7);
  CHECK_FALSE(report.passed);
  CHECK(report.stationarity == doctest::Approx(1.0));
}

TEST_CASE("equality rows, free variables and >= rows with negative rhs") {
  // min x + 2y - z  s.t. x + y + z = 4, x - y >= -2, z <= 3, z free above -1
  LpProblem p;
  int x = p.add_var(1.0, 0.0, 10.0);
  int y = p.add_var(2.0, 0.0, 10.0);
  int z = p.add_var(-1.0, -1.0, kInf);
  p.add_row({{{x, 1}, {y, 1}, {z, 1}}, Sense::Equal, 4.0, "sum"});
  p.add_row({{{x, 1}, {y, -1}}, Sense::GreaterEqual, -2.0, "diff"});
  p.add_row({{{z, 1}}, Sense::LessEqual, 3.0, "zcap"});
  auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::Optimal);
  CHECK(sol.objective_value == doctest::Approx(-2.0));  // z=3, x=1
  CHECK(verify_kkt(p, sol, 1e-9).passed);
  CHECK(sol.duals[2] <= 0.0);

  LpProblem free_var;
  int f = free_var.add_var(1.0, -kInf, kInf);
  free_var.add_row({{{f, 1}}, Sense::GreaterEqual, -3.5, "f>=-3.5"});
  auto s2 = solve_lp(free_var);
  REQUIRE(s2.status == LpStatus::Optimal);
  CHECK(s2.primal[0] == doctest::Approx(-3.5));
  CHECK(s2.duals[0] == doctest::Approx(1.0));
}

TEST_CASE("trace output lists iterations") {
  auto p = single_service({10, 20, 5}, {5, 5, 1}, 7);
  std::ostringstream log;
  LpOptions opts;
  opts.trace = &log;
  auto sol = solve_lp(p, opts);
  REQUIRE(sol.status == LpStatus::Optimal);
  CHECK(log.str().find("iter") != std::string::npos);
}

TEST_CASE("merit order examples") {
  std::vector<double> costs{10, 20}, caps{5, 5};
  auto r = merit_order_clear(costs, caps, 7);
  CHECK(r.dispatch == std::vector<double>{5, 2});
  CHECK(r.price == 20);

  auto zero = merit_order_clear(costs, caps, 0);
  CHECK(zero.dispatch == std::vector<double>{0, 0});
  CHECK(zero.price == 0);
  CHECK(zero.marginal == -1);

  std::vector<double> tied{10, 10};
  auto t = merit_order_clear(tied, caps, 6);
  CHECK(t.dispatch == std::vector<double>{5, 1});
  CHECK(t.price == 10);
  // Brute force over splits: every split costs 60, and one more unit costs 10.
  auto c6 = oracle::min_cost_integer_split({10, 10}, {5, 5}, 6);
  auto c5 = oracle::min_cost_integer_split({10, 10}, {5, 5}, 5);
  CHECK(*c6 == 60);
  CHECK(*c6 - *c5 == 10);

  CHECK_THROWS_AS(merit_order_clear(costs, caps, 11), Error);
  try {
    merit_order_clear(costs, caps, 11);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InfeasibleDemand);
  }
}

TEST_CASE("random small LPs agree with vertex enumeration") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> coef(-3, 3), cost(-5, 5), bound(0, 4), nrows(1, 3),
      nvars(1, 4), sense(0, 2);
  int optimal = 0;
  for (int trial = 0; trial < 300; ++trial) {
    LpProblem p;
    const int n = nvars(rng);
    for (int j = 0; j < n; ++j) {
      int lo = -bound(rng);
      int hi = lo + bound(rng);
      p.add_var(cost(rng), lo, hi);
    }
    const int m = nrows(rng);
    for (int i = 0; i < m; ++i) {
      LpRow row;
      for (int j = 0; j < n; ++j) {
        int a = coef(rng);
        if (a != 0) row.terms.push_back({j, static_cast<double>(a)});
      }
      if (row.terms.empty()) row.terms.push_back({0, 1.0});
      row.sense = static_cast<Sense>(sense(rng));
      row.rhs = coef(rng);
      p.add_row(row);
    }
    auto expect = oracle::brute_force_lp(p);
    auto sol = solve_lp(p);
    if (!expect) {
      CHECK(sol.status == LpStatus::Infeasible);
      continue;
    }
    REQUIRE(sol.status == LpStatus::Optimal);
    ++optimal;
    CHECK(sol.objective_value == doctest::Approx(*expect).epsilon(1e-9));
    auto report = verify_kkt(p, sol, 1e-7);
    CHECK(report.passed);
  }
  CHECK(optimal > 100);
}
