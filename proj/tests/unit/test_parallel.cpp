#include <doctest.h>

#include <random>
#include <stdexcept>

#include <omp.h>

#include "fixtures.hpp"
#include "generators.hpp"
#include "tsm/allocation.hpp"
#include "tsm/analysis.hpp"
#include "tsm/experiments.hpp"
#include "tsm/parallel.hpp"

using namespace tsm;

namespace {

/// n leaves with distinct costs in a pool whose sale is capped.
MarketTree capped_pool(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<MarketNode> leaves;
  for (int i = 1; i <= n; ++i) {
    leaves.push_back(fix::box("R" + std::to_string(i), gen::uniform(rng, 1, 40), gen::uniform(rng, 1, 8)));
  }
  std::vector<MarketNode> pool;
  pool.push_back(MarketNode::group("Pool", std::move(leaves)));
  std::vector<LinearConstraint> cap{{{{{"Pool", "s"}, 1.0}}, Sense::LessEqual, 2.0 * n, "cap"}};
  return assemble_market_tree(fix::one_service(),
                              MarketNode::group("VPP", std::move(pool), std::move(cap)), {},
                              ServiceMap{{"s", 30.5}});
}

}  // namespace

TEST_CASE("Shapley enumeration is identical serial and parallel") {
  const auto tree = capped_pool(10, 1);
  const auto prices = *tree.top_prices;
  const auto serial = allocate_shapley(tree, prices, Execution::Serial);
  const auto parallel = allocate_shapley(tree, prices, Execution::Parallel);
  CHECK(serial.per_resource == parallel.per_resource);
  CHECK(serial.grand_value == parallel.grand_value);
  CHECK(serial.coalition_evals == 1023);
  CHECK(parallel.coalition_evals == 1023);
}

TEST_CASE("leave-one-out is identical serial and parallel") {
  const auto tree = capped_pool(9, 2);
  const auto prices = *tree.top_prices;
  CHECK(allocate_vcg_marginal(tree, prices, Execution::Serial).per_resource ==
        allocate_vcg_marginal(tree, prices, Execution::Parallel).per_resource);
}

TEST_CASE("misreport sweeps are identical serial and parallel") {
  const auto tree = capped_pool(6, 3);
  const auto f = factor_range(0.8, 1.2, 0.05);
  const auto serial = misreport_sweep(tree, "R2", f, f, Execution::Serial);
  const auto parallel = misreport_sweep(tree, "R2", f, f, Execution::Parallel);
  CHECK(serial.profit == parallel.profit);
  CHECK(serial.truthful_row == parallel.truthful_row);
}

TEST_CASE("verify summaries are identical serial and parallel") {
  VerifyBlock block;
  block.ic_grid = {0.8, 1.2, 0.1};
  const auto a = run_verify(fix::t2(), block, 11, Execution::Serial);
  const auto b = run_verify(fix::t2(), block, 11, Execution::Parallel);
  REQUIRE(a.checks.size() == b.checks.size());
  for (std::size_t i = 0; i < a.checks.size(); ++i) {
    CHECK(a.checks[i].name == b.checks[i].name);
    CHECK(a.checks[i].passed == b.checks[i].passed);
    CHECK(a.checks[i].detail == b.checks[i].detail);
  }
  CHECK(a.all_passed());
}

TEST_CASE("exceptions thrown inside a parallel loop reach the caller") {
  CHECK(max_threads() >= 1);
  ExceptionSlot slot;
  int completed = 0;
#pragma omp parallel for reduction(+ : completed)
  for (int i = 0; i < 64; ++i) {
    slot.run([&] {
      if (i == 17) throw std::runtime_error("item 17");
      ++completed;
    });
  }
  CHECK(completed == 63);
  CHECK_THROWS_WITH_AS(slot.rethrow(), "item 17", std::runtime_error);
}
