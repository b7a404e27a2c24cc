#pragma once

#include <map>
#include <string>
#include <vector>

#include "tsm/clearing.hpp"
#include "tsm/parallel.hpp"
#include "tsm/settlement.hpp"

namespace tsm {

enum class Mechanism { Marginal, Shapley, VcgMarginal };

std::string_view to_string(Mechanism m);
Mechanism parse_mechanism(std::string_view text);

struct AllocationReport {
  Mechanism mechanism = Mechanism::Marginal;
  std::map<std::string, double> per_resource;
  /// Marginal mechanism only: (leaf, service) -> lambda*x - c*x.
  std::map<NodeService, double> by_service;
  double total = 0.0;
  /// Value of the grand coalition, when the mechanism computes it.
  double grand_value = 0.0;
  long coalition_evals = 0;
};

/// Largest leaf count accepted by exact Shapley enumeration.
inline constexpr int kMaxShapleyLeaves = 16;

/// Best profit of the root, as a price-taker at `top_prices`, using only the
/// leaves in `subset`. An infeasible coalition is worth 0.
double coalition_value(const MarketTree& tree, const std::vector<std::string>& subset,
                       const ServiceMap& top_prices);

/// Exact Shapley value over all 2^n coalitions of the leaves.
/// Throws Error(TooManyLeaves) above kMaxShapleyLeaves.
AllocationReport allocate_shapley(const MarketTree& tree, const ServiceMap& top_prices,
                                  Execution exec = Execution::Parallel);

/// v(all) - v(all without u) for every leaf u.
AllocationReport allocate_vcg_marginal(const MarketTree& tree, const ServiceMap& top_prices,
                                       Execution exec = Execution::Parallel);

/// Leaf settlement profits, with the per-service breakdown.
AllocationReport allocate_marginal(const ClearingOutcome& outcome,
                                   const std::vector<SettlementRecord>& records);

/// Sum over resources of |a_u - b_u|.
double l1_distance(const AllocationReport& a, const AllocationReport& b);

/// Leaf names of a tree in declaration order.
std::vector<std::string> leaf_names(const MarketTree& tree);

}  // namespace tsm
