#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tsm/clearing.hpp"
#include "tsm/parallel.hpp"

namespace tsm {

struct MisreportGrid {
  std::string target;
  std::vector<double> cost_factors;
  std::vector<double> cap_factors;
  /// profit[i][j] for cost_factors[i], cap_factors[j]; -inf where the
  /// misreported market could not be cleared.
  std::vector<std::vector<double>> profit;
  std::size_t truthful_row = 0;
  std::size_t truthful_col = 0;

  double truthful_profit() const { return profit[truthful_row][truthful_col]; }
};

/// lo, lo+step, ..., hi with each value rounded to 1e-9 so that 1.0 is hit
/// exactly.
std::vector<double> factor_range(double lo, double hi, double step);

/// The target leaf's bid scaled: costs (and auxiliary costs) by
/// `cost_factor`, its whole feasible set (bounds and private right-hand
/// sides) by `cap_factor`.
MarketTree apply_misreport(const MarketTree& tree, const std::string& target, double cost_factor,
                           double cap_factor);

/// Profit credited to `target` in `outcome`: its parent's price times its
/// dispatched quantity, less its true cost (taken from `truth`) on that same
/// quantity.
double credited_profit(const MarketTree& truth, const std::string& target,
                       const ClearingOutcome& outcome);

/// Re-clears the market for every (cost, capacity) misreport of `target`.
/// Factors must be positive and include 1.0. Throws Error(UnknownNode) or
/// Error(InvalidParams).
MisreportGrid misreport_sweep(const MarketTree& tree, const std::string& target,
                              std::vector<double> cost_factors, std::vector<double> cap_factors,
                              Execution exec = Execution::Parallel,
                              ClearingMode mode = ClearingMode::Monolithic);

struct IcVerdict {
  bool incentive_compatible = true;
  double truthful = 0.0;
  double best = 0.0;
  double gain = 0.0;
  /// Best-deviation cell, equal to the truthful cell when IC.
  double witness_cost_factor = 1.0;
  double witness_cap_factor = 1.0;
};

IcVerdict check_ic(const MisreportGrid& grid, double tol = 1e-9);

struct PriceInvarianceVerdict {
  bool passed = true;
  double max_gap = 0.0;
  /// Where the largest gap sits: a node and the parent whose price it is
  /// compared with ("top" for the exogenous price above the root).
  std::string node;
  std::string parent;
  std::string service;
  int compared = 0;
  std::vector<NodeService> skipped;
};

/// Compares every aggregator's price with its parent's, and the root's with
/// the exogenous price when the root is a price-taker. Services flagged
/// degenerate on either side are skipped.
PriceInvarianceVerdict check_price_invariance(const ClearingOutcome& outcome, double tol = 1e-7);

struct Box {
  ServiceMap lower;
  ServiceMap upper;
};

struct Assumption1Verdict {
  bool passed = true;
  bool sampled = false;
  double worst_gap = 0.0;
  std::string service;
  int samples = 0;
  int infeasible_samples = 0;
};

/// Parent box against the Minkowski sum of child boxes.
Assumption1Verdict check_assumption1_boxes(const Box& parent, const std::vector<Box>& children,
                                           double tol = 1e-9);

/// Box check when `aggregator` and everything below it are boxes, otherwise
/// the sampled check: points of the claimed aggregate box are tested for a
/// feasible split among the children.
Assumption1Verdict check_assumption1(const MarketTree& tree, const std::string& aggregator,
                                     int samples = 200, std::uint64_t seed = 2024);

struct Assumption2Verdict {
  bool passed = true;
  int points = 0;
  int splits_tested = 0;
  /// min over tested splits of (split cost - min-cost disaggregation).
  double worst_margin = 0.0;
  int convexity_checks = 0;
  int convexity_violations = 0;
};

Assumption2Verdict check_assumption2(const MarketTree& tree, const std::string& aggregator,
                                     int sample_points = 20, int splits_per_point = 10,
                                     std::uint64_t seed = 2024, double tol = 1e-7);

struct CompetitionVerdict {
  bool passed = true;
  bool exogenous = false;
  double removed_change = 0.0;
  double doubled_change = 0.0;
  std::string worst_service;
};

/// Does `leaf` move the top-level prices? Re-clears with the leaf removed and
/// with its capacity doubled.
CompetitionVerdict check_competition(const MarketTree& tree, const std::string& leaf,
                                     double tol = 1e-7);

/// Copy of the subtree rooted at `aggregator` as a market of its own.
MarketTree subtree_market(const MarketTree& tree, const std::string& aggregator,
                          ServiceMap demand = {});

/// Cost of the leaf dispatch in `outcome` priced at the bids in `tree`.
double dispatch_cost(const MarketTree& tree, const ClearingOutcome& outcome);

}  // namespace tsm
