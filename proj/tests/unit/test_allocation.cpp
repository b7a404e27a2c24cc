#include <doctest.h>

#include <numeric>

#include "fixtures.hpp"
#include "tsm/allocation.hpp"
#include "tsm/error.hpp"

using namespace tsm;

namespace {

const ServiceMap kPrice20{{"s", 20.0}};

MarketTree ab_market() {
  return fix::price_taker(fix::nodes({fix::box("A", 10, 5), fix::box("B", 20, 5)}), 20.0);
}

/// Leaves in a pool whose total sale is capped at `limit`.
MarketTree capped(std::vector<MarketNode> leaves, double limit, double price) {
  std::vector<MarketNode> pool;
  pool.push_back(MarketNode::group("Pool", std::move(leaves)));
  std::vector<LinearConstraint> cap{{{{{"Pool", "s"}, 1.0}}, Sense::LessEqual, limit, "cap"}};
  return assemble_market_tree(fix::one_service(),
                              MarketNode::group("VPP", std::move(pool), std::move(cap)), {},
                              ServiceMap{{"s", price}});
}

}  // namespace

TEST_CASE("coalition values of the two-resource market") {
  const auto tree = ab_market();
  CHECK(coalition_value(tree, {}, kPrice20) == 0.0);
  CHECK(coalition_value(tree, {"A"}, kPrice20) == doctest::Approx(50.0));
  CHECK(coalition_value(tree, {"B"}, kPrice20) == doctest::Approx(0.0));
  CHECK(coalition_value(tree, {"A", "B"}, kPrice20) == doctest::Approx(50.0));
}

TEST_CASE("Shapley on the two-resource market") {
  // v(A)=50, v(B)=0, v(AB)=50: A gets (50 + 50)/2, B gets (0 + 0)/2.
  const auto r = allocate_shapley(ab_market(), kPrice20);
  CHECK(r.mechanism == Mechanism::Shapley);
  CHECK(r.per_resource.at("A") == doctest::Approx(50.0));
  CHECK(r.per_resource.at("B") == doctest::Approx(0.0));
  CHECK(r.grand_value == doctest::Approx(50.0));
  CHECK(r.total == doctest::Approx(r.grand_value));
}

TEST_CASE("Shapley symmetry and null players under a shared cap") {
  // Pool capped at 6: v(X)=v(Y)=5*10, v(XY)=6*10, Z (cost above price) adds nothing.
  const auto tree = capped(
      fix::nodes({fix::box("X", 10, 5), fix::box("Y", 10, 5), fix::box("Z", 30, 5), fix::box("W", 0, 0)}),
      6.0, 20.0);
  const auto r = allocate_shapley(tree, kPrice20);
  CHECK(r.per_resource.at("X") == doctest::Approx(30.0));
  CHECK(r.per_resource.at("Y") == doctest::Approx(r.per_resource.at("X")));
  CHECK(std::abs(r.per_resource.at("Z")) <= 1e-9);
  CHECK(std::abs(r.per_resource.at("W")) <= 1e-9);
  CHECK(r.total == doctest::Approx(60.0));
  CHECK(r.coalition_evals == 15);  // v(empty) = 0 is not solved
}

TEST_CASE("exact Shapley refuses more than sixteen leaves") {
  std::vector<MarketNode> leaves;
  for (int i = 1; i <= 17; ++i) leaves.push_back(fix::box("R" + std::to_string(i), 10 + i, 1));
  const auto tree = fix::price_taker(std::move(leaves), 30.0);
  try {
    allocate_shapley(tree, tree.top_prices.value());
    FAIL("17 leaves enumerated");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooManyLeaves);
  }
}

TEST_CASE("leave-one-out contributions") {
  SUBCASE("two-resource market") {
    const auto r = allocate_vcg_marginal(ab_market(), kPrice20);
    CHECK(r.per_resource.at("A") == doctest::Approx(50.0));
    CHECK(r.per_resource.at("B") == doctest::Approx(0.0));
  }
  SUBCASE("a lone resource keeps the whole value") {
    const auto tree = fix::price_taker(fix::nodes({fix::box("A", 10, 5)}), 20.0);
    CHECK(allocate_vcg_marginal(tree, kPrice20).per_resource.at("A") == doctest::Approx(50.0));
  }
  SUBCASE("redundant resources get nothing") {
    const auto tree = capped(fix::nodes({fix::box("X", 10, 5), fix::box("Y", 10, 5)}), 5.0, 20.0);
    const auto r = allocate_vcg_marginal(tree, kPrice20);
    CHECK(r.per_resource.at("X") == doctest::Approx(0.0));
    CHECK(r.per_resource.at("Y") == doctest::Approx(0.0));
    CHECK(r.grand_value == doctest::Approx(50.0));
  }
}

TEST_CASE("marginal allocation is the leaf settlement") {
  const auto out = clear_monolithic(fix::t1());
  const auto recs = settle(out);
  const auto r = allocate_marginal(out, recs);
  CHECK(r.per_resource.at("A") == doctest::Approx(50.0));
  CHECK(r.per_resource.at("B") == doctest::Approx(0.0));
  CHECK(r.by_service.at({"A", "s"}) == doctest::Approx(50.0));
  CHECK(r.per_resource.size() == 2);

  const auto zero = clear_monolithic(fix::t1(0.0));
  for (const auto& [leaf, v] : allocate_marginal(zero, settle(zero)).per_resource) CHECK(v == 0.0);
}

TEST_CASE("L1 distance and mechanism names") {
  AllocationReport a, b;
  a.per_resource = {{"A", 3.0}, {"B", 1.0}};
  b.per_resource = {{"A", 1.0}, {"B", 2.0}};
  CHECK(l1_distance(a, b) == doctest::Approx(3.0));
  CHECK(l1_distance(a, a) == 0.0);
  for (auto m : {Mechanism::Marginal, Mechanism::Shapley, Mechanism::VcgMarginal}) {
    CHECK(parse_mechanism(to_string(m)) == m);
  }
  CHECK(leaf_names(fix::t2()) == std::vector<std::string>{"A", "B"});
}
