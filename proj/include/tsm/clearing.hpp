#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tsm/lp.hpp"
#include "tsm/model.hpp"

namespace tsm {

/// (node name, service id)
using NodeService = std::pair<std::string, std::string>;

enum class ClearingMode { Monolithic, Sequential, Flat };

std::string_view to_string(ClearingMode mode);
ClearingMode parse_clearing_mode(std::string_view text);

/// One market level l: the aggregators sitting at level l post prices
/// lambda^l and award quantities to their children at level l-1.
struct LevelOutcome {
  int level = 0;
  std::map<NodeService, double> awards;
  /// Price posted by each aggregator of this level, keyed (aggregator, service).
  std::map<NodeService, double> prices;
  std::map<NodeService, bool> degenerate;
};

struct ClearingOutcome {
  ClearingMode mode = ClearingMode::Monolithic;
  bool price_taking = false;
  int levels = 1;
  /// Ordered from the top level L down to 1.
  std::vector<LevelOutcome> per_level;
  /// LP objective: leaf cost, minus sales revenue when the root is a price-taker.
  double objective = 0.0;
  /// Sum of c * x (and auxiliary costs) over leaves, at the reported bids.
  double total_cost = 0.0;
  /// Cost of each leaf at its dispatch, auxiliary costs included.
  std::map<std::string, double> leaf_cost;
  /// c * x per (leaf, service); auxiliary costs are only in leaf_cost.
  std::map<NodeService, double> service_cost;
  std::map<NodeService, double> leaf_dispatch;
  /// Values of leaves' auxiliary variables, keyed (leaf, aux name).
  std::map<NodeService, double> aux_values;
  /// Award of every non-root node; leaves' awards equal their dispatch.
  std::map<NodeService, double> awards;
  /// Internal price of every aggregator (root included).
  std::map<NodeService, double> prices;
  std::map<NodeService, bool> degenerate;
  /// Quantity the root delivers upward: demand, or the amount sold.
  ServiceMap root_awards;
  /// Price the root is paid: its own demand-row dual, or the exogenous price.
  ServiceMap top_prices;
  /// Parent of every non-root node, for settlement.
  std::map<std::string, std::string> parent;
  std::string root;

  /// Solver artifacts of the LP modes (absent in sequential mode).
  std::optional<LpProblem> problem;
  std::optional<LpSolution> solution;
  std::optional<KktReport> kkt;

  double price(const std::string& aggregator, const std::string& service) const;
  double award(const std::string& node, const std::string& service) const;
  bool is_degenerate(const std::string& aggregator, const std::string& service) const;
  /// Price paid to `node` by its parent for `service`.
  double parent_price(const std::string& node, const std::string& service) const;
};

struct ClearingOptions {
  /// Flag non-unique prices by re-solving with perturbed right-hand sides.
  bool detect_degeneracy = true;
  /// Run the KKT verifier on the solved LP and store the report.
  bool verify = true;
  double kkt_tol = 1e-7;
  LpOptions lp;
  /// Clear with only these leaves present (others and their terms dropped).
  std::optional<std::vector<std::string>> active_leaves;
  /// Replace the tree's pricing at the root by these exogenous prices.
  std::optional<ServiceMap> top_prices;
  /// Emit interface and demand rows as equalities: children deliver exactly
  /// the award. Used to test whether an aggregate quantity can be split.
  bool exact_interfaces = false;
};

/// One LP holding every level's interface row, so each level's price is the
/// dual of its own row. Throws Error(Infeasible) or Error(Unbounded).
ClearingOutcome clear_monolithic(const MarketTree& tree, const ClearingOptions& options = {});

/// Merit-order cascade for box-only trees: bottom-up bid curves, top-level
/// clearing, then top-down re-clearing of every aggregator's children.
/// Throws Error(UnsupportedConstraints) on any non-box feature.
ClearingOutcome clear_sequential(const MarketTree& tree, const ClearingOptions& options = {});

/// All leaves pooled under the root with only the root's public constraints.
ClearingOutcome clear_flat(const MarketTree& tree, const ClearingOptions& options = {});

ClearingOutcome clear(const MarketTree& tree, ClearingMode mode,
                      const ClearingOptions& options = {});

/// Largest violation of any leaf's bounds or private constraints.
double leaf_feasibility_residual(const MarketTree& tree, const ClearingOutcome& outcome);

}  // namespace tsm
