#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "generators.hpp"
#include "tsm/analysis.hpp"
#include "tsm/error.hpp"
#include "tsm/scenario.hpp"

using namespace tsm;

TEST_CASE("factor ranges land on 1.0") {
  const auto f = factor_range(0.9, 1.1, 0.01);
  CHECK(f.size() == 21);
  CHECK(std::count(f.begin(), f.end(), 1.0) == 1);
  CHECK(f.front() == 0.9);
  CHECK(f.back() == 1.1);
  CHECK(factor_range(0.5, 1.5, 0.05).size() == 21);
}

TEST_CASE("misreports scale the target's bid only") {
  const auto tree = fix::t2();
  const auto m = apply_misreport(tree, "A", 1.5, 0.8);
  TreeView view(m);
  const auto& a = view.at(view.require("A")).node->resource();
  const auto& b = view.at(view.require("B")).node->resource();
  CHECK(a.cost("s") == doctest::Approx(15.0));
  CHECK(a.upper("s") == doctest::Approx(4.0));
  CHECK(b.cost("s") == 20.0);
  CHECK_THROWS_AS(apply_misreport(tree, "VPP1", 1.0, 1.0), Error);
}

TEST_CASE("price-taking cost sweep: flat below the price, zero above") {
  // A sells its 5 units at 15 whenever the reported cost 10*f is below 15.
  const auto tree = fix::price_taker(fix::nodes({fix::box("A", 10, 5), fix::box("B", 12, 5)}), 15.0);
  const std::vector<double> factors{0.5, 0.8, 1.0, 1.2, 1.4, 1.6, 2.0};
  const auto grid = misreport_sweep(tree, "A", factors, {1.0});
  REQUIRE(grid.profit.size() == factors.size());
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const double expected = 10.0 * factors[i] < 15.0 ? 25.0 : 0.0;
    CHECK(grid.profit[i][0] == doctest::Approx(expected));
  }
  const auto v = check_ic(grid);
  CHECK(v.incentive_compatible);
  CHECK(v.truthful == doctest::Approx(25.0));
}

TEST_CASE("sweep argument checks") {
  const auto tree = fix::t2();
  try {
    misreport_sweep(tree, "A", {0.9, 1.1}, {1.0});
    FAIL("grid without 1.0 accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidParams);
  }
  try {
    misreport_sweep(tree, "Nobody", {1.0}, {1.0});
    FAIL("unknown target accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownNode);
  }
}

TEST_CASE("check_ic verdicts") {
  MisreportGrid single;
  single.cost_factors = {1.0};
  single.cap_factors = {1.0};
  single.profit = {{3.0}};
  CHECK(check_ic(single).incentive_compatible);

  MisreportGrid g;
  g.cost_factors = {0.9, 1.0, 1.1};
  g.cap_factors = {0.9, 1.0, 1.1};
  g.profit = {{1, 2, 2}, {1, 2, 2}, {1, 2, 2.5}};
  g.truthful_row = 1;
  g.truthful_col = 1;
  const auto v = check_ic(g);
  CHECK_FALSE(v.incentive_compatible);
  CHECK(v.witness_cost_factor == 1.1);
  CHECK(v.witness_cap_factor == 1.1);
  CHECK(v.gain == doctest::Approx(0.5));
  g.profit[2][2] = 2.0 + 1e-12;
  CHECK(check_ic(g, 1e-9).incentive_compatible);
}

TEST_CASE("joint over-reporting pays when a shared cap binds") {
  // EV1 (cost 10, cap 1) and EV2 (cost 11.05, cap 1) share a fleet cap of
  // 1.09. EV2 is marginal inside the fleet, so truthful EV1 earns 1.05.
  // Claiming 1.1 alone makes EV1 marginal at its own cost (profit 0);
  // claiming cost 11 as well sets the price at 11 on 1.09 units.
  std::vector<MarketNode> members = fix::nodes({fix::box("EV1", 10, 1), fix::box("EV2", 11.05, 1)});
  std::vector<MarketNode> fleet;
  fleet.push_back(MarketNode::group("Fleet", std::move(members)));
  std::vector<LinearConstraint> cap{{{{{"Fleet", "s"}, 1.0}}, Sense::LessEqual, 1.09, "fleet cap"}};
  const auto tree = assemble_market_tree(fix::one_service(),
                                         MarketNode::group("VPP", std::move(fleet), std::move(cap)),
                                         {}, ServiceMap{{"s", 20.0}});
  const auto grid = misreport_sweep(tree, "EV1", {0.9, 1.0, 1.1}, {0.9, 1.0, 1.1});
  const double truthful = grid.truthful_profit();
  CHECK(truthful == doctest::Approx(1.05));
  CHECK(grid.profit[0][1] <= truthful + 1e-9);
  CHECK(grid.profit[2][1] <= truthful + 1e-9);
  CHECK(grid.profit[1][0] <= truthful + 1e-9);
  CHECK(grid.profit[1][2] <= truthful + 1e-9);
  CHECK(grid.profit[1][2] == doctest::Approx(0.0));
  CHECK(grid.profit[2][2] == doctest::Approx(1.09));
  CHECK_FALSE(check_ic(grid).incentive_compatible);
}

TEST_CASE("price invariance checks") {
  auto out = clear_monolithic(fix::t2());
  auto v = check_price_invariance(out);
  CHECK(v.passed);
  CHECK(v.max_gap == 0.0);
  CHECK(v.compared == 2);

  out.prices[{"VPP1", "s"}] += 1.0;
  v = check_price_invariance(out);
  CHECK_FALSE(v.passed);
  CHECK(v.max_gap == doctest::Approx(1.0));
  CHECK(v.node == "VPP1");
  CHECK(v.parent == "Market");

  const auto degenerate = check_price_invariance(clear_monolithic(fix::t2(10.0)));
  CHECK(degenerate.passed);
  CHECK_FALSE(degenerate.skipped.empty());

  const auto deep = check_price_invariance(clear_monolithic(fix::t2_deep()));
  CHECK(deep.passed);
  CHECK(deep.compared == 3);
}

TEST_CASE("box aggregation") {
  Box parent{{}, {{"s", 10}}};
  std::vector<Box> kids{{{}, {{"s", 5}}}, {{}, {{"s", 5}}}};
  CHECK(check_assumption1_boxes(parent, kids).passed);
  parent.upper["s"] = 11;
  const auto v = check_assumption1_boxes(parent, kids);
  CHECK_FALSE(v.passed);
  CHECK(v.worst_gap == doctest::Approx(1.0));
  CHECK(v.service == "s");
}

TEST_CASE("aggregate boxes on trees") {
  CHECK(check_assumption1(fix::t2(), "Market").passed);
  CHECK_FALSE(check_assumption1(fix::t2(), "Market").sampled);

  auto corrupted = fix::t2();
  corrupted.root.aggregator().declared_capacities = ServiceMap{{"s", 11.0}};
  CHECK_FALSE(check_assumption1(corrupted, "Market").passed);

  // Storage couples its services through private rows, so the check samples.
  // The summed box holds points such as full energy plus full regulation,
  // which the shared power limit rules out.
  const auto services =
      flatten_services({ServiceKind::Energy, ServiceKind::Regulation, ServiceKind::Reserve}, 2);
  StorageParams p;
  const auto tree = assemble_market_tree(
      services,
      MarketNode::group("VPP", fix::nodes({build_storage_node("ES1", p, 2), build_storage_node("ES2", p, 2)})),
      {});
  const auto s = check_assumption1(tree, "VPP", 50, 7);
  CHECK(s.sampled);
  CHECK(s.samples == 50);
  CHECK(s.infeasible_samples > 0);
  CHECK_FALSE(s.passed);
}

TEST_CASE("aggregate cost never exceeds a split's cost") {
  const auto v = check_assumption2(fix::t2(), "Market", 20, 10, 5);
  CHECK(v.passed);
  CHECK(v.worst_margin >= -1e-7);
  CHECK(v.splits_tested > 0);
  CHECK(v.convexity_checks > 0);
  CHECK(v.convexity_violations == 0);

  const auto single = check_assumption2(fix::t2(), "VPP1", 10, 5, 5);
  CHECK(single.passed);
  CHECK(std::abs(single.worst_margin) <= 1e-9);
}

TEST_CASE("competition check") {
  CHECK(check_competition(fix::price_taker(fix::nodes({fix::box("A", 10, 5)}), 20.0), "A").exogenous);

  // X(10,4), Y(20,4), Z(30,4), d=6: Y sets the price.
  const auto tree = assemble_market_tree(
      fix::one_service(),
      MarketNode::group("M", fix::nodes({fix::box("X", 10, 4), fix::box("Y", 20, 4), fix::box("Z", 30, 4),
                                         fix::box("N", 5, 0)})),
      {{"s", 6}});
  const auto y = check_competition(tree, "Y");
  CHECK_FALSE(y.passed);
  CHECK(y.removed_change == doctest::Approx(10.0));
  CHECK(check_competition(tree, "N").passed);
}

TEST_CASE("subtree markets and dispatch cost") {
  const auto tree = fix::t2();
  const auto out = clear_monolithic(tree);
  CHECK(dispatch_cost(tree, out) == doctest::Approx(90.0));
  const auto sub = subtree_market(tree, "VPP2", {{"s", 3.0}});
  CHECK(sub.root.name == "VPP2");
  CHECK(clear_monolithic(sub).objective == doctest::Approx(60.0));
}

TEST_CASE("random price-taking trees are truthful in cost") {
  std::mt19937_64 rng(5);
  gen::TreeOptions opt;
  opt.price_taking = true;
  const auto factors = factor_range(0.5, 1.5, 0.05);
  for (int k = 0; k < 30; ++k) {
    const auto tree = gen::random_box_tree(rng, opt);
    const auto leaves = TreeView(tree).leaves();
    const std::string target = TreeView(tree).at(leaves.front()).node->name;
    CHECK(check_ic(misreport_sweep(tree, target, factors, {1.0}, Execution::Serial)).incentive_compatible);
  }
}
