#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tsm/allocation.hpp"
#include "tsm/analysis.hpp"
#include "tsm/clearing.hpp"
#include "tsm/config.hpp"
#include "tsm/settlement.hpp"

namespace tsm {

struct CaseStudyTimings {
  double clear_s = 0.0;
  double allocate_s = 0.0;
  double sweep_s = 0.0;
  double total_s = 0.0;
};

struct CaseStudyReport {
  MarketTree tree;
  ClearingOutcome outcome;
  std::vector<SettlementRecord> settlement;
  std::vector<AllocationReport> allocations;
  /// Pairwise L1 distance between the allocations, keyed by mechanism names.
  std::map<std::pair<std::string, std::string>, double> l1;
  MisreportGrid grid;
  IcVerdict ic;
  /// Internal prices against their parents and the root against the
  /// exogenous prices, on the cleared aggregate tree.
  PriceInvarianceVerdict prices;
  /// Same comparison on the tree used for the sweep, where the fleet is an
  /// aggregator of single vehicles. Informational.
  PriceInvarianceVerdict member_prices;
  double money_residual = 0.0;
  double feasibility_residual = 0.0;
  CaseStudyTimings timings;
};

/// Clear against the exogenous prices, settle, allocate with all three
/// mechanisms, and sweep the configured EV's misreports.
/// Throws Error(InvalidConfig) when the config has no price data.
CaseStudyReport run_case_study(const ScenarioConfig& config, Execution exec = Execution::Parallel);

struct CheckResult {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct VerifySummary {
  std::vector<CheckResult> checks;
  bool all_passed() const;
};

/// Runs the optimality, price-invariance, truthfulness and aggregate-model
/// checks on one tree. Truthfulness is checked only for leaves that pass the
/// competition test; the others are counted as skipped.
VerifySummary run_verify(const MarketTree& tree, const VerifyBlock& block, std::uint64_t seed,
                         Execution exec = Execution::Parallel);

}  // namespace tsm
