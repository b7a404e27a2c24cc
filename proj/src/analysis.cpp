#include "tsm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <set>

#include <fmt/format.h>

#include "tsm/error.hpp"

namespace tsm {

namespace {

MarketNode* find_node(MarketNode& node, const std::string& name) {
  if (node.name == name) return &node;
  if (node.is_leaf()) return nullptr;
  for (auto& child : node.aggregator().children) {
    if (auto* hit = find_node(child, name)) return hit;
  }
  return nullptr;
}

const MarketNode* find_node(const MarketNode& node, const std::string& name) {
  return find_node(const_cast<MarketNode&>(node), name);
}

ResourceSpec& require_leaf(MarketTree& tree, const std::string& name) {
  MarketNode* node = find_node(tree.root, name);
  if (!node) throw Error(ErrorCode::UnknownNode, fmt::format("no node named '{}'", name));
  if (!node->is_leaf()) {
    throw Error(ErrorCode::InvalidParams, fmt::format("'{}' is not a leaf resource", name));
  }
  return node->resource();
}

void for_each_leaf(MarketNode& node, const std::function<void(MarketNode&)>& f) {
  if (node.is_leaf()) {
    f(node);
    return;
  }
  for (auto& child : node.aggregator().children) for_each_leaf(child, f);
}

ClearingOptions quiet_options() {
  ClearingOptions o;
  o.detect_degeneracy = false;
  o.verify = false;
  return o;
}

double finite_or(double v, double fallback) { return std::isfinite(v) ? v : fallback; }

}  // namespace

std::vector<double> factor_range(double lo, double hi, double step) {
  if (!(step > 0.0) || !(lo > 0.0) || hi < lo) {
    throw Error(ErrorCode::InvalidParams, "factor range needs 0 < lo <= hi and step > 0");
  }
  std::vector<double> out;
  for (int k = 0;; ++k) {
    const double v = std::round((lo + k * step) * 1e9) / 1e9;
    if (v > hi + 1e-12) break;
    out.push_back(v);
  }
  return out;
}

MarketTree apply_misreport(const MarketTree& tree, const std::string& target, double cost_factor,
                           double cap_factor) {
  if (!(cost_factor > 0.0) || !(cap_factor > 0.0)) {
    throw Error(ErrorCode::InvalidParams, "misreport factors must be positive");
  }
  MarketTree out = tree;
  ResourceSpec& spec = require_leaf(out, target);
  for (auto& [s, c] : spec.costs) c *= cost_factor;
  for (auto& [s, cap] : spec.capacities) cap *= cap_factor;
  for (auto& [s, lo] : spec.lower_bounds) lo *= cap_factor;
  for (auto& a : spec.auxiliaries) {
    a.cost *= cost_factor;
    a.lo *= cap_factor;
    a.hi *= cap_factor;
  }
  for (auto& c : spec.private_constraints) c.rhs *= cap_factor;
  return out;
}

double credited_profit(const MarketTree& truth, const std::string& target,
                       const ClearingOutcome& outcome) {
  const MarketNode* node = find_node(truth.root, target);
  if (!node || !node->is_leaf()) {
    throw Error(ErrorCode::UnknownNode, fmt::format("no leaf named '{}'", target));
  }
  const ResourceSpec& spec = node->resource();
  double profit = 0.0;
  for (const auto& [s, cap] : spec.capacities) {
    auto it = outcome.leaf_dispatch.find({target, s});
    if (it == outcome.leaf_dispatch.end()) continue;
    profit += (outcome.parent_price(target, s) - spec.cost(s)) * it->second;
  }
  for (const auto& a : spec.auxiliaries) {
    auto it = outcome.aux_values.find({target, a.name});
    if (it != outcome.aux_values.end()) profit -= a.cost * it->second;
  }
  return profit;
}

MisreportGrid misreport_sweep(const MarketTree& tree, const std::string& target,
                              std::vector<double> cost_factors, std::vector<double> cap_factors,
                              Execution exec, ClearingMode mode) {
  {
    MarketTree probe = tree;
    require_leaf(probe, target);
  }
  auto prepare = [](std::vector<double>& f, const char* axis) {
    std::sort(f.begin(), f.end());
    f.erase(std::unique(f.begin(), f.end()), f.end());
    if (f.empty() || f.front() <= 0.0) {
      throw Error(ErrorCode::InvalidParams, fmt::format("{} factors must be positive", axis));
    }
    auto one = std::find(f.begin(), f.end(), 1.0);
    if (one == f.end()) {
      throw Error(ErrorCode::InvalidParams, fmt::format("{} factors must include 1.0", axis));
    }
    return static_cast<std::size_t>(one - f.begin());
  };
  MisreportGrid grid;
  grid.target = target;
  grid.truthful_row = prepare(cost_factors, "cost");
  grid.truthful_col = prepare(cap_factors, "capacity");
  grid.cost_factors = std::move(cost_factors);
  grid.cap_factors = std::move(cap_factors);
  const std::size_t rows = grid.cost_factors.size();
  const std::size_t cols = grid.cap_factors.size();
  grid.profit.assign(rows, std::vector<double>(cols, 0.0));

  const ClearingOptions options = quiet_options();
  auto cell = [&](std::size_t k) {
    const std::size_t i = k / cols;
    const std::size_t j = k % cols;
    MarketTree reported = apply_misreport(tree, target, grid.cost_factors[i], grid.cap_factors[j]);
    try {
      grid.profit[i][j] = credited_profit(tree, target, clear(reported, mode, options));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Infeasible && e.code() != ErrorCode::Unbounded) throw;
      grid.profit[i][j] = -kInf;
    }
  };
  const auto cells = static_cast<std::int64_t>(rows * cols);
  if (exec == Execution::Serial) {
    for (std::int64_t k = 0; k < cells; ++k) cell(static_cast<std::size_t>(k));
  } else {
    ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t k = 0; k < cells; ++k) slot.run([&] { cell(static_cast<std::size_t>(k)); });
    slot.rethrow();
  }
  return grid;
}

IcVerdict check_ic(const MisreportGrid& grid, double tol) {
  IcVerdict v;
  v.truthful = grid.truthful_profit();
  v.best = v.truthful;
  v.witness_cost_factor = grid.cost_factors[grid.truthful_row];
  v.witness_cap_factor = grid.cap_factors[grid.truthful_col];
  for (std::size_t i = 0; i < grid.cost_factors.size(); ++i) {
    for (std::size_t j = 0; j < grid.cap_factors.size(); ++j) {
      const double p = grid.profit[i][j];
      if (std::isfinite(p) && p > v.best) {
        v.best = p;
        v.witness_cost_factor = grid.cost_factors[i];
        v.witness_cap_factor = grid.cap_factors[j];
      }
    }
  }
  v.gain = v.best - v.truthful;
  v.incentive_compatible = v.gain <= tol;
  if (v.incentive_compatible) {
    v.witness_cost_factor = grid.cost_factors[grid.truthful_row];
    v.witness_cap_factor = grid.cap_factors[grid.truthful_col];
  }
  return v;
}

PriceInvarianceVerdict check_price_invariance(const ClearingOutcome& outcome, double tol) {
  PriceInvarianceVerdict v;
  auto compare = [&](const std::string& node, const std::string& parent, const std::string& s,
                     double mine, double theirs) {
    ++v.compared;
    const double gap = std::abs(mine - theirs);
    if (v.compared == 1 || gap > v.max_gap) {
      v.max_gap = gap;
      v.node = node;
      v.parent = parent;
      v.service = s;
    }
  };
  for (const auto& [key, lambda] : outcome.prices) {
    const auto& [node, s] = key;
    if (node == outcome.root) {
      if (!outcome.price_taking) continue;
      if (outcome.is_degenerate(node, s)) {
        v.skipped.push_back(key);
        continue;
      }
      auto top = outcome.top_prices.find(s);
      compare(node, "top", s, lambda, top == outcome.top_prices.end() ? 0.0 : top->second);
      continue;
    }
    auto p = outcome.parent.find(node);
    if (p == outcome.parent.end()) continue;
    if (outcome.is_degenerate(node, s) || outcome.is_degenerate(p->second, s)) {
      v.skipped.push_back(key);
      continue;
    }
    compare(node, p->second, s, lambda, outcome.price(p->second, s));
  }
  v.passed = v.max_gap <= tol;
  return v;
}

Assumption1Verdict check_assumption1_boxes(const Box& parent, const std::vector<Box>& children,
                                           double tol) {
  std::set<std::string> services;
  for (const auto& [s, x] : parent.upper) services.insert(s);
  for (const auto& [s, x] : parent.lower) services.insert(s);
  for (const auto& c : children) {
    for (const auto& [s, x] : c.upper) services.insert(s);
    for (const auto& [s, x] : c.lower) services.insert(s);
  }
  auto get = [](const ServiceMap& m, const std::string& s) {
    auto it = m.find(s);
    return it == m.end() ? 0.0 : it->second;
  };
  auto gap = [](double a, double b) {
    if (a == b) return 0.0;  // covers matching infinities
    return std::abs(a - b);
  };
  Assumption1Verdict v;
  for (const auto& s : services) {
    double lo = 0.0;
    double hi = 0.0;
    for (const auto& c : children) {
      lo += get(c.lower, s);
      hi += get(c.upper, s);
    }
    const double g = std::max(gap(get(parent.upper, s), hi), gap(get(parent.lower, s), lo));
    if (g > v.worst_gap) {
      v.worst_gap = g;
      v.service = s;
    }
  }
  v.passed = v.worst_gap <= tol;
  return v;
}

namespace {

bool subtree_is_box(const TreeView& view, int i) {
  const auto& n = *view.at(i).node;
  if (n.is_leaf()) {
    return n.resource().private_constraints.empty() && n.resource().auxiliaries.empty();
  }
  if (!n.aggregator().public_constraints.empty()) return false;
  for (int c : view.at(i).children) {
    if (!subtree_is_box(view, c)) return false;
  }
  return true;
}

/// Box a node reports upward: a leaf's bounds, an aggregator's declared
/// capacities when present, otherwise the sum of its children's boxes.
Box reported_box(const TreeView& view, int i) {
  const auto& n = *view.at(i).node;
  Box box;
  if (n.is_leaf()) {
    for (const auto& [s, cap] : n.resource().capacities) {
      box.upper[s] = cap;
      box.lower[s] = n.resource().lower(s);
    }
    return box;
  }
  for (int c : view.at(i).children) {
    Box child = reported_box(view, c);
    for (const auto& [s, x] : child.upper) box.upper[s] += x;
    for (const auto& [s, x] : child.lower) box.lower[s] += x;
  }
  if (n.aggregator().declared_capacities) {
    for (const auto& [s, x] : *n.aggregator().declared_capacities) box.upper[s] = x;
  }
  return box;
}

}  // namespace

MarketTree subtree_market(const MarketTree& tree, const std::string& aggregator,
                          ServiceMap demand) {
  const MarketNode* node = find_node(tree.root, aggregator);
  if (!node) throw Error(ErrorCode::UnknownNode, fmt::format("no node named '{}'", aggregator));
  if (node->is_leaf()) {
    throw Error(ErrorCode::InvalidParams, fmt::format("'{}' is not an aggregator", aggregator));
  }
  MarketTree sub;
  sub.services = tree.services;
  sub.root = *node;
  sub.demand = std::move(demand);
  sub.levels = std::max(1, TreeView(sub).max_depth());
  return sub;
}

Assumption1Verdict check_assumption1(const MarketTree& tree, const std::string& aggregator,
                                     int samples, std::uint64_t seed) {
  TreeView view(tree);
  const int agg = view.require(aggregator);
  if (view.at(agg).node->is_leaf()) {
    throw Error(ErrorCode::InvalidParams, fmt::format("'{}' is not an aggregator", aggregator));
  }
  if (subtree_is_box(view, agg)) {
    std::vector<Box> children;
    for (int c : view.at(agg).children) children.push_back(reported_box(view, c));
    return check_assumption1_boxes(reported_box(view, agg), children);
  }

  // Sampled route: points of the box the aggregator claims must each admit a
  // feasible split among its children.
  Box claimed = reported_box(view, agg);
  MarketTree sub = subtree_market(tree, aggregator);
  ClearingOptions options = quiet_options();
  options.exact_interfaces = true;
  std::mt19937_64 rng(seed);
  Assumption1Verdict v;
  v.sampled = true;
  for (int k = 0; k < samples; ++k) {
    ServiceMap point;
    for (const auto& [s, hi] : claimed.upper) {
      const double lo = finite_or(claimed.lower[s], 0.0);
      std::uniform_real_distribution<double> u(lo, std::max(lo, finite_or(hi, lo)));
      point[s] = u(rng);
    }
    sub.demand = point;
    ++v.samples;
    try {
      clear_monolithic(sub, options);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Infeasible) throw;
      ++v.infeasible_samples;
    }
  }
  v.worst_gap = v.samples ? static_cast<double>(v.infeasible_samples) / v.samples : 0.0;
  v.passed = v.infeasible_samples == 0;
  return v;
}

double dispatch_cost(const MarketTree& tree, const ClearingOutcome& outcome) {
  TreeView view(tree);
  double total = 0.0;
  for (int i : view.leaves()) {
    const auto& name = view.at(i).node->name;
    const auto& spec = view.at(i).node->resource();
    for (const auto& [s, cap] : spec.capacities) {
      auto it = outcome.leaf_dispatch.find({name, s});
      if (it != outcome.leaf_dispatch.end()) total += spec.cost(s) * it->second;
    }
    for (const auto& a : spec.auxiliaries) {
      auto it = outcome.aux_values.find({name, a.name});
      if (it != outcome.aux_values.end()) total += a.cost * it->second;
    }
  }
  return total;
}

Assumption2Verdict check_assumption2(const MarketTree& tree, const std::string& aggregator,
                                     int sample_points, int splits_per_point, std::uint64_t seed,
                                     double tol) {
  const MarketTree sub = subtree_market(tree, aggregator);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  ClearingOptions exact = quiet_options();
  exact.exact_interfaces = true;

  // The same subtree with random leaf costs: its optimum is an arbitrary
  // vertex of the feasible set.
  auto scrambled = [&] {
    MarketTree t = sub;
    for_each_leaf(t.root, [&](MarketNode& leaf) {
      auto& spec = leaf.resource();
      for (auto& [s, cap] : spec.capacities) spec.costs[s] = unit(rng);
      for (auto& a : spec.auxiliaries) a.cost = 0.0;
    });
    return t;
  };
  auto random_aggregate = [&]() -> std::optional<ServiceMap> {
    MarketTree t = scrambled();
    ClearingOptions o = exact;
    ServiceMap zero;
    for (const auto& s : TreeView(t).services_under(0)) zero[s] = 0.0;
    o.top_prices = zero;
    try {
      return clear_monolithic(t, o).root_awards;
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  auto min_cost = [&](const ServiceMap& q) -> std::optional<double> {
    MarketTree t = sub;
    t.demand = q;
    try {
      return dispatch_cost(sub, clear_monolithic(t, exact));
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  Assumption2Verdict v;
  v.worst_margin = kInf;
  std::vector<std::pair<ServiceMap, double>> evaluated;
  for (int k = 0; k < sample_points; ++k) {
    auto a = random_aggregate();
    auto b = random_aggregate();
    if (!a || !b) continue;
    std::uniform_real_distribution<double> w01(0.0, 1.0);
    const double w = w01(rng);
    ServiceMap q;
    for (const auto& [s, x] : *a) q[s] = w * x + (1.0 - w) * (*b)[s];
    auto best = min_cost(q);
    if (!best) continue;
    ++v.points;
    evaluated.push_back({q, *best});
    for (int r = 0; r < splits_per_point; ++r) {
      MarketTree t = scrambled();
      t.demand = q;
      try {
        const double split = dispatch_cost(sub, clear_monolithic(t, exact));
        ++v.splits_tested;
        v.worst_margin = std::min(v.worst_margin, split - *best);
        if (split - *best < -tol * (1.0 + std::abs(*best))) v.passed = false;
      } catch (const Error&) {
      }
    }
  }
  // Midpoint convexity of the aggregate cost curve.
  for (std::size_t k = 1; k < evaluated.size(); ++k) {
    const auto& [qa, ca] = evaluated[k - 1];
    const auto& [qb, cb] = evaluated[k];
    ServiceMap mid;
    for (const auto& [s, x] : qa) mid[s] = 0.5 * (x + qb.at(s));
    auto cm = min_cost(mid);
    if (!cm) continue;
    ++v.convexity_checks;
    if (*cm > 0.5 * (ca + cb) + tol * (1.0 + std::abs(*cm))) {
      ++v.convexity_violations;
      v.passed = false;
    }
  }
  if (v.splits_tested == 0) v.worst_margin = 0.0;
  return v;
}

CompetitionVerdict check_competition(const MarketTree& tree, const std::string& leaf,
                                     double tol) {
  MarketTree doubled = tree;
  ResourceSpec& spec = require_leaf(doubled, leaf);
  CompetitionVerdict v;
  if (tree.price_taking()) {
    v.exogenous = true;
    return v;
  }
  for (auto& [s, cap] : spec.capacities) cap *= 2.0;

  const ClearingOptions options = quiet_options();
  const ServiceMap base = clear_monolithic(tree, options).top_prices;
  auto change = [&](const MarketTree& t, const ClearingOptions& o) {
    ServiceMap after;
    try {
      after = clear_monolithic(t, o).top_prices;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Infeasible) throw;
      v.worst_service = "(infeasible)";
      return kInf;
    }
    double worst = 0.0;
    for (const auto& [s, p] : base) {
      auto it = after.find(s);
      const double d = std::abs(p - (it == after.end() ? 0.0 : it->second));
      if (d > worst) {
        worst = d;
        if (d > tol) v.worst_service = s;
      }
    }
    return worst;
  };
  ClearingOptions without = options;
  std::vector<std::string> rest;
  TreeView view(tree);
  for (int i : view.leaves()) {
    if (view.at(i).node->name != leaf) rest.push_back(view.at(i).node->name);
  }
  without.active_leaves = rest;
  v.removed_change = change(tree, without);
  v.doubled_change = change(doubled, options);
  v.passed = v.removed_change <= tol && v.doubled_change <= tol;
  return v;
}

}  // namespace tsm
