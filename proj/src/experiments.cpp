#include "tsm/experiments.hpp"

#include <chrono>

#include <fmt/format.h>

#include "tsm/error.hpp"

namespace tsm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

CaseStudyReport run_case_study(const ScenarioConfig& config, Execution exec) {
  const auto start = Clock::now();
  CaseStudyReport r;
  r.tree = build_market_tree(config, FleetMode::Aggregate);
  if (!r.tree.top_prices) {
    throw Error(ErrorCode::InvalidConfig, "the case study needs exogenous prices");
  }

  auto t = Clock::now();
  r.outcome = clear_monolithic(r.tree);
  r.settlement = settle(r.outcome);
  r.prices = check_price_invariance(r.outcome);
  r.money_residual = money_conservation_residual(r.settlement);
  r.feasibility_residual = leaf_feasibility_residual(r.tree, r.outcome);
  r.timings.clear_s = seconds_since(t);

  t = Clock::now();
  r.allocations.push_back(allocate_marginal(r.outcome, r.settlement));
  r.allocations.push_back(allocate_shapley(r.tree, *r.tree.top_prices, exec));
  r.allocations.push_back(allocate_vcg_marginal(r.tree, *r.tree.top_prices, exec));
  for (std::size_t a = 0; a < r.allocations.size(); ++a) {
    for (std::size_t b = a + 1; b < r.allocations.size(); ++b) {
      r.l1[{std::string(to_string(r.allocations[a].mechanism)),
            std::string(to_string(r.allocations[b].mechanism))}] =
          l1_distance(r.allocations[a], r.allocations[b]);
    }
  }
  r.timings.allocate_s = seconds_since(t);

  t = Clock::now();
  const SweepBlock sweep = config.sweep.value_or(SweepBlock{"EV1", {}, {}, FleetMode::Individual});
  const MarketTree members = build_market_tree(config, sweep.fleet);
  r.member_prices = check_price_invariance(clear_monolithic(members));
  r.grid = misreport_sweep(members, sweep.target.empty() ? "EV1" : sweep.target,
                           sweep.cost.values(), sweep.cap.values(), exec);
  r.ic = check_ic(r.grid);
  r.timings.sweep_s = seconds_since(t);
  r.timings.total_s = seconds_since(start);
  return r;
}

bool VerifySummary::all_passed() const {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

VerifySummary run_verify(const MarketTree& tree, const VerifyBlock& block, std::uint64_t seed,
                         Execution exec) {
  VerifySummary out;
  const ClearingOutcome outcome = clear_monolithic(tree);

  {
    CheckResult c{"kkt", outcome.kkt && outcome.kkt->passed, ""};
    if (outcome.kkt) {
      c.detail = fmt::format("stationarity {:.3g}, sign {:.3g}, complementarity {:.3g}",
                             outcome.kkt->stationarity, outcome.kkt->dual_sign,
                             outcome.kkt->complementarity);
    }
    out.checks.push_back(std::move(c));
  }

  {
    const auto v = check_price_invariance(outcome);
    std::string detail = fmt::format("{} compared, {} skipped, max gap {:.3g}", v.compared,
                                     v.skipped.size(), v.max_gap);
    for (const auto& [node, service] : v.skipped) detail += fmt::format("; skipped {}.{}", node, service);
    if (!v.passed) detail += fmt::format("; worst {} vs {} on {}", v.node, v.parent, v.service);
    out.checks.push_back({"price_invariance", v.passed, std::move(detail)});
  }

  // Truthful cost reports, split by whether the leaf bids at the top level
  // or through an intermediate aggregator.
  const TreeView view(tree);
  const auto factors = block.ic_grid.values();
  CheckResult top{"ic_top_level", true, ""};
  CheckResult inner{"ic_inductive", true, ""};
  int top_checked = 0, top_skipped = 0, inner_checked = 0, inner_skipped = 0;
  for (int i : view.leaves()) {
    const std::string& name = view.at(i).node->name;
    const bool at_top = view.at(i).parent == 0;
    CheckResult& target = at_top ? top : inner;
    int& checked = at_top ? top_checked : inner_checked;
    int& skipped = at_top ? top_skipped : inner_skipped;
    if (!check_competition(tree, name).passed) {
      ++skipped;
      continue;
    }
    ++checked;
    const auto grid = misreport_sweep(tree, name, factors, {1.0}, exec);
    const auto ic = check_ic(grid);
    if (!ic.incentive_compatible) {
      target.passed = false;
      target.detail += fmt::format("{} gains {:.6g} at cost factor {}; ", name, ic.gain,
                                   ic.witness_cost_factor);
    }
  }
  top.detail += fmt::format("{} leaves checked, {} not price-takers", top_checked, top_skipped);
  inner.detail += fmt::format("{} leaves checked, {} not price-takers", inner_checked, inner_skipped);
  out.checks.push_back(std::move(top));
  out.checks.push_back(std::move(inner));

  CheckResult a1{"assumption1", true, ""};
  CheckResult a2{"assumption2", true, ""};
  for (int i : view.aggregators()) {
    const std::string& name = view.at(i).node->name;
    const auto v1 = check_assumption1(tree, name, block.assumption1_samples, seed);
    if (!v1.passed) {
      a1.passed = false;
      a1.detail += fmt::format("{}: gap {:.6g} on {}; ", name, v1.worst_gap, v1.service);
    }
    const auto v2 = check_assumption2(tree, name, block.assumption2_points,
                                      block.assumption2_splits, seed);
    if (!v2.passed) {
      a2.passed = false;
      a2.detail += fmt::format("{}: margin {:.6g}, {} convexity violations; ", name,
                               v2.worst_margin, v2.convexity_violations);
    }
  }
  a1.detail += fmt::format("{} aggregators", view.aggregators().size());
  a2.detail += fmt::format("{} aggregators", view.aggregators().size());
  out.checks.push_back(std::move(a1));
  out.checks.push_back(std::move(a2));
  return out;
}

}  // namespace tsm
