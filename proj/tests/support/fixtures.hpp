#pragma once

// Small hand-checkable markets shared by the unit tests.

#include <string>
#include <utility>
#include <vector>

#include "tsm/model.hpp"

namespace fix {

inline std::vector<tsm::ServiceIndex> one_service() {
  return {{"s", "service", tsm::ServiceKind::Other, 0}};
}

inline tsm::MarketNode box(const std::string& name, double cost, double cap,
                           const std::string& service = "s") {
  tsm::ResourceSpec spec;
  spec.costs[service] = cost;
  spec.capacities[service] = cap;
  return tsm::MarketNode::leaf(name, std::move(spec));
}

inline std::vector<tsm::MarketNode> nodes(std::initializer_list<tsm::MarketNode> list) {
  return std::vector<tsm::MarketNode>(list);
}

/// A(c10, cap5) and B(c20, cap5) directly under the root.
inline tsm::MarketTree t1(double demand = 7.0) {
  return tsm::assemble_market_tree(
      one_service(), tsm::MarketNode::group("Market", nodes({box("A", 10, 5), box("B", 20, 5)})),
      {{"s", demand}});
}

/// The same leaves, each behind its own aggregator.
inline tsm::MarketTree t2(double demand = 7.0) {
  return tsm::assemble_market_tree(
      one_service(),
      tsm::MarketNode::group("Market",
                             nodes({tsm::MarketNode::group("VPP1", nodes({box("A", 10, 5)})),
                                    tsm::MarketNode::group("VPP2", nodes({box("B", 20, 5)}))})),
      {{"s", demand}});
}

/// T2 with both aggregators under one more layer.
inline tsm::MarketTree t2_deep(double demand = 7.0) {
  auto inner = tsm::MarketNode::group(
      "Hub", nodes({tsm::MarketNode::group("VPP1", nodes({box("A", 10, 5)})),
                    tsm::MarketNode::group("VPP2", nodes({box("B", 20, 5)}))}));
  return tsm::assemble_market_tree(one_service(), tsm::MarketNode::group("Market", nodes({inner})),
                                   {{"s", demand}});
}

/// Price-taking market over the given leaves.
inline tsm::MarketTree price_taker(std::vector<tsm::MarketNode> leaves, double price) {
  return tsm::assemble_market_tree(one_service(), tsm::MarketNode::group("VPP", std::move(leaves)),
                                   {}, tsm::ServiceMap{{"s", price}});
}

}  // namespace fix
