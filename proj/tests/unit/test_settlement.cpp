#include <doctest.h>

#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "generators.hpp"
#include "tsm/error.hpp"
#include "tsm/settlement.hpp"

using namespace tsm;

namespace {

const SettlementRecord& record(const std::vector<SettlementRecord>& rs, const std::string& node) {
  for (const auto& r : rs) {
    if (r.node == node) return r;
  }
  throw std::runtime_error("no record for " + node);
}

}  // namespace

TEST_CASE("two leaves under the root settle at the clearing price") {
  // lambda = 20 (merit order): A earns (20 - 10) * 5, B is marginal.
  const auto recs = settle(clear_monolithic(fix::t1()));
  CHECK(recs.size() == 3);
  CHECK(record(recs, "A").profit == doctest::Approx(50.0));
  CHECK(record(recs, "A").revenue == doctest::Approx(100.0));
  CHECK(record(recs, "A").own_cost == doctest::Approx(50.0));
  CHECK(record(recs, "B").profit == doctest::Approx(0.0));
  CHECK(record(recs, "Market").revenue == doctest::Approx(140.0));
  CHECK(record(recs, "Market").internal_payout == doctest::Approx(140.0));
  CHECK(profit_of("A", recs) == doctest::Approx(50.0));
  CHECK(money_conservation_residual(recs) <= 1e-9);
}

TEST_CASE("aggregators buy and sell at the same price") {
  const auto recs = settle(clear_monolithic(fix::t2()));
  const auto& vpp1 = record(recs, "VPP1");
  CHECK_FALSE(vpp1.is_leaf);
  CHECK(vpp1.level == 1);
  CHECK(vpp1.revenue == doctest::Approx(100.0));
  CHECK(vpp1.internal_payout == doctest::Approx(100.0));
  CHECK(vpp1.profit == doctest::Approx(0.0));
  CHECK(record(recs, "A").level == 0);
  CHECK(record(recs, "A").profit == doctest::Approx(50.0));
  CHECK(money_conservation_residual(recs) <= 1e-9);
}

TEST_CASE("zero demand settles to zero") {
  const auto recs = settle(clear_monolithic(fix::t1(0.0)));
  for (const auto& r : recs) {
    CHECK(r.revenue == 0.0);
    CHECK(r.internal_payout == 0.0);
    CHECK(r.profit == 0.0);
  }
  CHECK(profit_of("Market", recs) == 0.0);
  try {
    profit_of("Nobody", recs);
    FAIL("unknown node accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownNode);
  }
}

TEST_CASE("per-service parts add up to the leaf profit") {
  std::vector<ServiceIndex> services{{"e", "energy", ServiceKind::Other, 0},
                                     {"r", "regulation", ServiceKind::Other, 0},
                                     {"q", "reserve", ServiceKind::Other, 0}};
  ResourceSpec desk;
  desk.costs = {{"e", 4}, {"r", 1}, {"q", 9}};
  desk.capacities = {{"e", 3}, {"r", 2}, {"q", 5}};
  ResourceSpec other;
  other.costs = {{"e", 7}, {"r", 3}, {"q", 2}};
  other.capacities = {{"e", 3}, {"r", 2}, {"q", 5}};
  const auto tree = assemble_market_tree(
      services,
      MarketNode::group("M", fix::nodes({MarketNode::leaf("D", desk), MarketNode::leaf("O", other)})),
      {}, ServiceMap{{"e", 6.5}, {"r", 2.5}, {"q", 10.5}});
  const auto recs = settle(clear_monolithic(tree));
  for (const auto* leaf : {"D", "O"}) {
    const auto& r = record(recs, leaf);
    double sum = 0.0;
    for (const auto& [s, v] : r.by_service) sum += v;
    CHECK(sum == doctest::Approx(r.profit).epsilon(1e-12));
  }
  // D: (6.5-4)*3 + (2.5-1)*2 + (10.5-9)*5
  CHECK(record(recs, "D").profit == doctest::Approx(7.5 + 3.0 + 7.5));
}

TEST_CASE("random trees: conservation, zero margins and rationality") {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 200; ++k) {
    const auto out = clear_monolithic(gen::random_box_tree(rng));
    const auto recs = settle(out);
    CHECK(money_conservation_residual(recs) <= 1e-6);
    for (const auto& r : recs) {
      if (r.is_leaf) CHECK(r.profit >= -1e-9);
      else if (!r.degenerate) CHECK(std::abs(r.profit) <= 1e-6);
    }
  }
}

TEST_CASE("settlement CSV") {
  std::ostringstream os;
  write_settlement_csv(os, settle(clear_monolithic(fix::t1())));
  const auto text = os.str();
  CHECK(text.rfind("node,level,revenue,payout,cost,profit\n", 0) == 0);
  CHECK(text.find("A,0,100,0,50,50") != std::string::npos);
}
