#pragma once

// Random instances for the property suites. Every draw goes through the
// caller's engine, so a seed fixes the whole suite.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tsm/model.hpp"

namespace gen {

struct TreeOptions {
  int min_depth = 2;
  int max_depth = 4;
  int max_leaves = 12;
  int max_services = 3;
  /// Sell into fixed top prices instead of meeting a demand.
  bool price_taking = false;
  /// Guarantee at least one leaf directly under the root.
  bool root_leaf = false;
};

inline int uniform(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline bool coin(std::mt19937_64& rng, double p = 0.5) {
  return std::bernoulli_distribution(p)(rng);
}

class TreeBuilder {
 public:
  TreeBuilder(std::mt19937_64& rng, const TreeOptions& opt, int services)
      : rng_(rng), opt_(opt), services_(services) {
    // Costs are drawn without replacement per service, so merit orders
    // never tie.
    for (int s = 0; s < services_; ++s) {
      std::vector<int> pool(100);
      std::iota(pool.begin(), pool.end(), 1);
      std::shuffle(pool.begin(), pool.end(), rng_);
      cost_pool_.push_back(std::move(pool));
    }
  }

  tsm::MarketNode root(int depth) {
    std::vector<tsm::MarketNode> children;
    if (opt_.root_leaf) children.push_back(leaf());
    children.push_back(subtree(depth - 1));
    add_extras(children, depth - 1);
    if (opt_.root_leaf && coin(rng_)) std::swap(children.front(), children.back());
    return tsm::MarketNode::group("Market", std::move(children));
  }

  int leaves() const { return leaves_; }

 private:
  tsm::MarketNode subtree(int depth) {
    if (depth == 0) return leaf();
    std::vector<tsm::MarketNode> children;
    children.push_back(subtree(depth - 1));
    add_extras(children, depth - 1);
    return tsm::MarketNode::group("A" + std::to_string(++groups_), std::move(children));
  }

  // Siblings of a mandatory child. Each may be a leaf or a shallower subtree,
  // so leaves end up at mixed depths.
  void add_extras(std::vector<tsm::MarketNode>& children, int depth) {
    while (children.size() < 3 && leaves_ < opt_.max_leaves - depth && coin(rng_, 0.6)) {
      children.push_back(subtree(uniform(rng_, 0, depth)));
    }
  }

  tsm::MarketNode leaf() {
    tsm::ResourceSpec spec;
    const int first = uniform(rng_, 0, services_ - 1);
    for (int s = 0; s < services_; ++s) {
      if (s != first && !coin(rng_, 0.7)) continue;
      const std::string id = "s" + std::to_string(s);
      auto& pool = cost_pool_[static_cast<std::size_t>(s)];
      spec.costs[id] = pool.back();
      pool.pop_back();
      spec.capacities[id] = uniform(rng_, 1, 10);
    }
    ++leaves_;
    return tsm::MarketNode::leaf("R" + std::to_string(leaves_), std::move(spec));
  }

  std::mt19937_64& rng_;
  TreeOptions opt_;
  int services_;
  std::vector<std::vector<int>> cost_pool_;
  int leaves_ = 0;
  int groups_ = 0;
};

inline std::vector<tsm::ServiceIndex> plain_services(int n) {
  std::vector<tsm::ServiceIndex> out;
  for (int s = 0; s < n; ++s) {
    out.push_back({"s" + std::to_string(s), "service " + std::to_string(s), tsm::ServiceKind::Other, 0});
  }
  return out;
}

/// Total capacity per service over every leaf below `node`.
inline void add_capacity(const tsm::MarketNode& node, tsm::ServiceMap& total) {
  if (node.is_leaf()) {
    for (const auto& [s, cap] : node.resource().capacities) total[s] += cap;
    return;
  }
  for (const auto& c : node.aggregator().children) add_capacity(c, total);
}

/// Box-only tree with integer data. In demand mode each service's demand is
/// an integer between 1 and the total capacity; in price-taking mode the
/// top prices sit on half-integers so they never equal a cost.
inline tsm::MarketTree random_box_tree(std::mt19937_64& rng, const TreeOptions& opt = {}) {
  const int services = uniform(rng, 1, opt.max_services);
  const int depth = uniform(rng, opt.min_depth, opt.max_depth);
  TreeBuilder builder(rng, opt, services);
  tsm::MarketNode root = builder.root(depth);

  tsm::ServiceMap capacity;
  add_capacity(root, capacity);
  tsm::ServiceMap demand;
  std::optional<tsm::ServiceMap> prices;
  if (opt.price_taking) {
    prices.emplace();
    for (int s = 0; s < services; ++s) {
      (*prices)["s" + std::to_string(s)] = uniform(rng, 1, 100) + 0.5;
    }
  } else {
    for (int s = 0; s < services; ++s) {
      const std::string id = "s" + std::to_string(s);
      const int total = static_cast<int>(capacity[id]);
      demand[id] = total > 0 ? uniform(rng, 1, total) : 0;
    }
  }
  return tsm::assemble_market_tree(plain_services(services), std::move(root), std::move(demand),
                                   std::move(prices));
}

/// Single-service separable instance for merit-order comparisons.
struct Separable {
  std::vector<double> costs;
  std::vector<double> caps;
  double demand = 0.0;
};

inline Separable random_separable(std::mt19937_64& rng, int max_resources = 8) {
  Separable out;
  const int n = uniform(rng, 1, max_resources);
  std::vector<int> pool(50);
  std::iota(pool.begin(), pool.end(), 1);
  std::shuffle(pool.begin(), pool.end(), rng);
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    out.costs.push_back(pool[static_cast<std::size_t>(k)]);
    out.caps.push_back(uniform(rng, 0, 10));
    total += out.caps.back();
  }
  out.demand = uniform(rng, 0, static_cast<int>(total));
  return out;
}

}  // namespace gen
