#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "tsm/clearing.hpp"

namespace tsm {

struct SettlementRecord {
  std::string node;
  int level = 0;
  bool is_leaf = false;
  /// Paid by the parent (by the demand side for the root).
  double revenue = 0.0;
  /// Paid to children; zero for leaves.
  double internal_payout = 0.0;
  /// Leaves only.
  double own_cost = 0.0;
  double profit = 0.0;
  /// Some price this node is paid at was flagged non-unique.
  bool degenerate = false;
  /// Leaves only: lambda_s * x_s - c_s * x_s per service. Auxiliary-variable
  /// cost is kept under the key "internal" so the parts sum to the profit.
  std::map<std::string, double> by_service;
};

/// Pay-as-cleared settlement: each node is paid its parent's price on its
/// award and pays its own price on its children's awards.
std::vector<SettlementRecord> settle(const ClearingOutcome& outcome);

/// Throws Error(UnknownNode) when `node` has no record.
double profit_of(const std::string& node, const std::vector<SettlementRecord>& records);

/// |sum of profits + leaf costs - root revenue|.
double money_conservation_residual(const std::vector<SettlementRecord>& records);

void write_settlement_csv(std::ostream& os, const std::vector<SettlementRecord>& records);

}  // namespace tsm
