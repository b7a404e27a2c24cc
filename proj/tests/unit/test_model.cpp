#include <doctest.h>

#include <set>

#include "fixtures.hpp"
#include "tsm/error.hpp"
#include "tsm/model.hpp"

using namespace tsm;

namespace {

bool has(const std::vector<Diagnostic>& ds, DiagnosticKind kind) {
  for (const auto& d : ds) {
    if (d.kind == kind) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("a market over one VPP over two leaves has two levels") {
  const auto tree = assemble_market_tree(
      fix::one_service(),
      MarketNode::group("Market", fix::nodes({MarketNode::group(
                                      "VPP", fix::nodes({fix::box("A", 10, 5), fix::box("B", 20, 5)}))})),
      {{"s", 7}});
  CHECK(tree.levels == 2);
  TreeView view(tree);
  CHECK(view.nodes().size() == 4);
  CHECK(view.leaves().size() == 2);
  CHECK(view.level(0) == 2);
  CHECK(view.level(view.require("VPP")) == 1);
  CHECK(view.level(view.require("A")) == 0);
  CHECK(validate_tree(tree).empty());

  // Leaves straight under the root form a single market level.
  CHECK(fix::t1().levels == 1);
}

TEST_CASE("deeper trees count levels from the deepest leaf") {
  const auto tree = fix::t2_deep();
  CHECK(tree.levels == 3);
  TreeView view(tree);
  CHECK(view.max_depth() == 3);
  CHECK(view.level(view.require("Hub")) == 2);
  CHECK(view.is_descendant(view.require("A"), view.require("Hub")));
  CHECK_FALSE(view.is_descendant(view.require("A"), view.require("VPP2")));
  CHECK(view.leaves_under(view.require("Hub")).size() == 2);
  CHECK(view.services_under(view.require("VPP1")) == std::vector<std::string>{"s"});
}

TEST_CASE("structural errors are rejected on assembly") {
  auto negative = [] {
    return assemble_market_tree(fix::one_service(),
                                MarketNode::group("M", fix::nodes({fix::box("A", 10, -1)})), {{"s", 0}});
  };
  CHECK_THROWS_AS(negative(), Error);
  try {
    negative();
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NegativeCapacity);
  }

  try {
    assemble_market_tree(fix::one_service(),
                         MarketNode::group("M", fix::nodes({fix::box("A", 1, 1), fix::box("A", 2, 1)})),
                         {{"s", 1}});
    FAIL("duplicate names accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DuplicateName);
  }
}

TEST_CASE("validate_tree reports each violated invariant") {
  SUBCASE("infeasible demand") {
    auto tree = fix::t1(7.0);
    tree.demand["s"] = 11.0;
    CHECK(has(validate_tree(tree), DiagnosticKind::InfeasibleDemand));
  }
  SUBCASE("demand above the only leaf") {
    const auto tree = assemble_market_tree(
        fix::one_service(), MarketNode::group("M", fix::nodes({fix::box("A", 10, 5)})), {{"s", 7}});
    CHECK(has(validate_tree(tree), DiagnosticKind::InfeasibleDemand));
  }
  SUBCASE("constraint on a node outside the aggregator") {
    MarketTree tree = fix::t2();
    tree.root.aggregator().children[0].aggregator().public_constraints.push_back(
        {{{{"B", "s"}, 1.0}}, Sense::LessEqual, 3.0, "reaches across"});
    const auto ds = validate_tree(tree);
    CHECK(has(ds, DiagnosticKind::DanglingReference));
  }
  SUBCASE("leaf as root") {
    MarketTree tree = fix::t1();
    tree.root = fix::box("Solo", 1, 1);
    CHECK(has(validate_tree(tree), DiagnosticKind::RootNotAggregator));
  }
  SUBCASE("lower bound above capacity") {
    MarketTree tree = fix::t1();
    tree.root.aggregator().children[0].resource().lower_bounds["s"] = 6.0;
    CHECK(has(validate_tree(tree), DiagnosticKind::InvalidBounds));
  }
}

TEST_CASE("flatten_services enumerates every kind and hour once") {
  CHECK(flatten_services({ServiceKind::Energy}, 1).size() == 1);
  const auto all =
      flatten_services({ServiceKind::Energy, ServiceKind::Regulation, ServiceKind::Reserve}, 24);
  REQUIRE(all.size() == 72);
  std::set<std::string> ids;
  std::set<std::pair<int, int>> pairs;
  for (const auto& s : all) {
    ids.insert(s.id);
    pairs.insert({static_cast<int>(s.kind), s.hour});
    CHECK(s.id == service_id(s.kind, s.hour));
  }
  CHECK(ids.size() == 72);
  CHECK(pairs.size() == 72);
  // Ordered by kind, then hour.
  CHECK(all[0].kind == ServiceKind::Energy);
  CHECK(all[23].hour == 23);
  CHECK(all[24].kind == ServiceKind::Regulation);
  CHECK(all[24].hour == 0);

  try {
    flatten_services({ServiceKind::Energy}, 0);
    FAIL("zero horizon accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidHorizon);
  }
  try {
    flatten_services({}, 4);
    FAIL("empty kinds accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyKinds);
  }
}

TEST_CASE("enum text round-trips") {
  for (auto k : {ServiceKind::Energy, ServiceKind::Regulation, ServiceKind::Reserve}) {
    CHECK(parse_service_kind(to_string(k)) == k);
  }
  for (auto s : {Sense::LessEqual, Sense::Equal, Sense::GreaterEqual}) {
    CHECK(parse_sense(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_sense("~"), Error);
}

TEST_CASE("box detection and bound accessors") {
  ResourceSpec r;
  r.costs["s"] = 3;
  r.capacities["s"] = 4;
  CHECK(r.is_box_only());
  CHECK(r.lower("s") == 0.0);
  CHECK(r.upper("s") == 4.0);
  CHECK(r.cost("missing") == 0.0);
  r.auxiliaries.push_back({"soc", 0.0, 1.0, 0.0});
  CHECK_FALSE(r.is_box_only());
  CHECK(r.aux("soc") != nullptr);
  CHECK(r.aux("nope") == nullptr);
}
