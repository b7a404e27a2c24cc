#include "tsm/allocation.hpp"

#include <cmath>
#include <cstdint>
#include <set>

#include <fmt/format.h>
#include <omp.h>

#include "tsm/error.hpp"

namespace tsm {

int max_threads() { return omp_get_max_threads(); }

std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::Marginal: return "marginal";
    case Mechanism::Shapley: return "shapley";
    case Mechanism::VcgMarginal: return "vcg_marginal";
  }
  return "?";
}

Mechanism parse_mechanism(std::string_view text) {
  if (text == "marginal") return Mechanism::Marginal;
  if (text == "shapley") return Mechanism::Shapley;
  if (text == "vcg_marginal" || text == "vcg") return Mechanism::VcgMarginal;
  throw Error(ErrorCode::Usage, fmt::format("unknown mechanism '{}'", text));
}

std::vector<std::string> leaf_names(const MarketTree& tree) {
  TreeView view(tree);
  std::vector<std::string> names;
  for (int i : view.leaves()) names.push_back(view.at(i).node->name);
  return names;
}

double coalition_value(const MarketTree& tree, const std::vector<std::string>& subset,
                       const ServiceMap& top_prices) {
  if (subset.empty()) return 0.0;
  ClearingOptions options;
  options.detect_degeneracy = false;
  options.verify = false;
  options.active_leaves = subset;
  options.top_prices = top_prices;
  try {
    return -clear_monolithic(tree, options).objective;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Infeasible) return 0.0;
    throw;
  }
}

namespace {

std::vector<std::string> members(const std::vector<std::string>& leaves, std::uint32_t mask) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (mask & (1u << i)) out.push_back(leaves[i]);
  }
  return out;
}

/// v(S) for every subset S, indexed by bitmask.
std::vector<double> all_coalition_values(const MarketTree& tree,
                                         const std::vector<std::string>& leaves,
                                         const ServiceMap& prices, Execution exec) {
  const std::int64_t count = std::int64_t{1} << leaves.size();
  std::vector<double> value(static_cast<std::size_t>(count), 0.0);
  if (exec == Execution::Serial) {
    for (std::int64_t mask = 1; mask < count; ++mask) {
      value[static_cast<std::size_t>(mask)] =
          coalition_value(tree, members(leaves, static_cast<std::uint32_t>(mask)), prices);
    }
    return value;
  }
  ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t mask = 1; mask < count; ++mask) {
    slot.run([&] {
      value[static_cast<std::size_t>(mask)] =
          coalition_value(tree, members(leaves, static_cast<std::uint32_t>(mask)), prices);
    });
  }
  slot.rethrow();
  return value;
}

}  // namespace

AllocationReport allocate_shapley(const MarketTree& tree, const ServiceMap& top_prices,
                                  Execution exec) {
  const auto leaves = leaf_names(tree);
  const int n = static_cast<int>(leaves.size());
  if (n > kMaxShapleyLeaves) {
    throw Error(ErrorCode::TooManyLeaves,
                fmt::format("{} leaves; exact Shapley enumeration allows at most {}", n,
                            kMaxShapleyLeaves));
  }
  AllocationReport report;
  report.mechanism = Mechanism::Shapley;
  const auto value = all_coalition_values(tree, leaves, top_prices, exec);
  report.coalition_evals = static_cast<long>(value.size()) - 1;

  // weight[k] = k! (n-k-1)! / n!
  std::vector<double> weight(static_cast<std::size_t>(std::max(n, 1)), 0.0);
  for (int k = 0; k < n; ++k) {
    double w = 1.0 / n;
    for (int j = 1; j <= k; ++j) w *= static_cast<double>(j) / (n - j);
    weight[static_cast<std::size_t>(k)] = w;
  }
  const std::uint32_t full = n == 0 ? 0u : static_cast<std::uint32_t>((std::int64_t{1} << n) - 1);
  for (int i = 0; i < n; ++i) {
    const std::uint32_t bit = 1u << i;
    double phi = 0.0;
    for (std::uint32_t mask = 0; mask <= full; ++mask) {
      if (mask & bit) continue;
      const int k = __builtin_popcount(mask);
      phi += weight[static_cast<std::size_t>(k)] * (value[mask | bit] - value[mask]);
    }
    report.per_resource[leaves[static_cast<std::size_t>(i)]] = phi;
    report.total += phi;
  }
  report.grand_value = value[full];
  return report;
}

AllocationReport allocate_vcg_marginal(const MarketTree& tree, const ServiceMap& top_prices,
                                       Execution exec) {
  const auto leaves = leaf_names(tree);
  const int n = static_cast<int>(leaves.size());
  AllocationReport report;
  report.mechanism = Mechanism::VcgMarginal;
  report.grand_value = coalition_value(tree, leaves, top_prices);
  std::vector<double> without(static_cast<std::size_t>(n), 0.0);
  auto eval = [&](int i) {
    auto rest = leaves;
    rest.erase(rest.begin() + i);
    without[static_cast<std::size_t>(i)] = coalition_value(tree, rest, top_prices);
  };
  if (exec == Execution::Serial) {
    for (int i = 0; i < n; ++i) eval(i);
  } else {
    ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) slot.run([&] { eval(i); });
    slot.rethrow();
  }
  for (int i = 0; i < n; ++i) {
    const double share = report.grand_value - without[static_cast<std::size_t>(i)];
    report.per_resource[leaves[static_cast<std::size_t>(i)]] = share;
    report.total += share;
  }
  report.coalition_evals = n + 1;
  return report;
}

AllocationReport allocate_marginal(const ClearingOutcome& outcome,
                                   const std::vector<SettlementRecord>& records) {
  AllocationReport report;
  report.mechanism = Mechanism::Marginal;
  for (const auto& r : records) {
    if (!r.is_leaf) continue;
    report.per_resource[r.node] = r.profit;
    report.total += r.profit;
    for (const auto& [s, amount] : r.by_service) report.by_service[{r.node, s}] = amount;
  }
  report.grand_value = -outcome.objective;
  return report;
}

double l1_distance(const AllocationReport& a, const AllocationReport& b) {
  std::set<std::string> names;
  for (const auto& [k, v] : a.per_resource) names.insert(k);
  for (const auto& [k, v] : b.per_resource) names.insert(k);
  double d = 0.0;
  for (const auto& k : names) {
    auto x = a.per_resource.find(k);
    auto y = b.per_resource.find(k);
    d += std::abs((x == a.per_resource.end() ? 0.0 : x->second) -
                  (y == b.per_resource.end() ? 0.0 : y->second));
  }
  return d;
}

}  // namespace tsm
