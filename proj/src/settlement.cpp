#include "tsm/settlement.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "tsm/error.hpp"

namespace tsm {

namespace {

int depth_of(const ClearingOutcome& outcome, const std::string& node) {
  int depth = 0;
  for (auto it = outcome.parent.find(node); it != outcome.parent.end();
       it = outcome.parent.find(it->second)) {
    ++depth;
  }
  return depth;
}

}  // namespace

std::vector<SettlementRecord> settle(const ClearingOutcome& outcome) {
  // Awards grouped by node so each parent can pay its children.
  std::map<std::string, std::map<std::string, double>> awards;
  for (const auto& [key, x] : outcome.awards) awards[key.first][key.second] = x;

  std::map<std::string, std::vector<std::string>> children;
  for (const auto& [child, parent] : outcome.parent) children[parent].push_back(child);

  std::vector<SettlementRecord> records;
  auto make = [&](const std::string& name) {
    SettlementRecord r;
    r.node = name;
    r.level = outcome.levels - depth_of(outcome, name);
    r.is_leaf = outcome.leaf_cost.count(name) > 0;
    if (name == outcome.root) {
      for (const auto& [s, x] : outcome.root_awards) {
        auto p = outcome.top_prices.find(s);
        if (p != outcome.top_prices.end()) r.revenue += p->second * x;
      }
    } else {
      const std::string& parent = outcome.parent.at(name);
      for (const auto& [s, x] : awards[name]) {
        const double lambda = outcome.price(parent, s);
        r.revenue += lambda * x;
        r.degenerate = r.degenerate || outcome.is_degenerate(parent, s);
        if (r.is_leaf) r.by_service[s] = lambda * x - outcome.service_cost.at({name, s});
      }
    }
    for (const auto& child : children[name]) {
      for (const auto& [s, x] : awards[child]) r.internal_payout += outcome.price(name, s) * x;
    }
    if (r.is_leaf) {
      r.own_cost = outcome.leaf_cost.at(name);
      double service_cost = 0.0;
      for (const auto& [s, x] : awards[name]) service_cost += outcome.service_cost.at({name, s});
      const double internal = r.own_cost - service_cost;
      if (internal != 0.0) r.by_service["internal"] = -internal;
      r.profit = r.revenue - r.own_cost;
    } else {
      r.profit = r.revenue - r.internal_payout;
    }
    records.push_back(std::move(r));
  };

  make(outcome.root);
  // Deterministic order: parents before children, siblings by name.
  std::vector<std::string> frontier{outcome.root};
  while (!frontier.empty()) {
    std::vector<std::string> next;
    for (const auto& node : frontier) {
      auto kids = children[node];
      std::sort(kids.begin(), kids.end());
      for (const auto& k : kids) {
        make(k);
        next.push_back(k);
      }
    }
    frontier = std::move(next);
  }
  return records;
}

double profit_of(const std::string& node, const std::vector<SettlementRecord>& records) {
  for (const auto& r : records) {
    if (r.node == node) return r.profit;
  }
  throw Error(ErrorCode::UnknownNode, fmt::format("no settlement record for '{}'", node));
}

double money_conservation_residual(const std::vector<SettlementRecord>& records) {
  if (records.empty()) return 0.0;
  double lhs = 0.0;
  for (const auto& r : records) lhs += r.profit + r.own_cost;
  return std::abs(lhs - records.front().revenue);
}

void write_settlement_csv(std::ostream& os, const std::vector<SettlementRecord>& records) {
  os << "node,level,revenue,payout,cost,profit\n";
  for (const auto& r : records) {
    os << fmt::format("{},{},{:.10g},{:.10g},{:.10g},{:.10g}\n", r.node, r.level, r.revenue,
                      r.internal_payout, r.own_cost, r.profit);
  }
}

}  // namespace tsm
