// Serial reference kernels against their OpenMP versions.

#include <benchmark/benchmark.h>

#include <random>

#include "generators.hpp"
#include "tsm/allocation.hpp"
#include "tsm/analysis.hpp"

using namespace tsm;

namespace {

MarketTree capped_pool(int n) {
  std::mt19937_64 rng(42);
  std::vector<MarketNode> leaves;
  for (int i = 1; i <= n; ++i) {
    ResourceSpec r;
    r.costs["s0"] = gen::uniform(rng, 1, 40);
    r.capacities["s0"] = gen::uniform(rng, 1, 8);
    leaves.push_back(MarketNode::leaf("R" + std::to_string(i), std::move(r)));
  }
  std::vector<MarketNode> pool;
  pool.push_back(MarketNode::group("Pool", std::move(leaves)));
  std::vector<LinearConstraint> cap{{{{{"Pool", "s0"}, 1.0}}, Sense::LessEqual, 2.0 * n, "cap"}};
  return assemble_market_tree(gen::plain_services(1),
                              MarketNode::group("VPP", std::move(pool), std::move(cap)), {},
                              ServiceMap{{"s0", 30.5}});
}

Execution mode(const benchmark::State& state) {
  return state.range(1) == 0 ? Execution::Serial : Execution::Parallel;
}

void BM_Shapley(benchmark::State& state) {
  const auto tree = capped_pool(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(allocate_shapley(tree, *tree.top_prices, mode(state)));
  }
  state.SetLabel(mode(state) == Execution::Serial ? "serial" : "parallel");
}

void BM_Sweep(benchmark::State& state) {
  std::mt19937_64 rng(7);
  gen::TreeOptions opt;
  opt.price_taking = true;
  const auto tree = gen::random_box_tree(rng, opt);
  const std::string target = TreeView(tree).at(TreeView(tree).leaves().front()).node->name;
  const auto f = factor_range(0.9, 1.1, 0.01);
  for (auto _ : state) {
    benchmark::DoNotOptimize(misreport_sweep(tree, target, f, f, mode(state)));
  }
  state.SetLabel(mode(state) == Execution::Serial ? "serial" : "parallel");
}

}  // namespace

BENCHMARK(BM_Shapley)->ArgsProduct({{8, 12}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Sweep)->Args({0, 0})->Args({0, 1})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
