#include "tsm/clearing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "tsm/error.hpp"

namespace tsm {

std::string_view to_string(ClearingMode mode) {
  switch (mode) {
    case ClearingMode::Monolithic: return "monolithic";
    case ClearingMode::Sequential: return "sequential";
    case ClearingMode::Flat: return "flat";
  }
  return "?";
}

ClearingMode parse_clearing_mode(std::string_view text) {
  if (text == "monolithic") return ClearingMode::Monolithic;
  if (text == "sequential") return ClearingMode::Sequential;
  if (text == "flat") return ClearingMode::Flat;
  throw Error(ErrorCode::Usage, fmt::format("unknown clearing mode '{}'", text));
}

namespace {

template <typename Map>
double lookup(const Map& map, const NodeService& key) {
  auto it = map.find(key);
  return it == map.end() ? 0.0 : it->second;
}

}  // namespace

double ClearingOutcome::price(const std::string& aggregator, const std::string& service) const {
  return lookup(prices, {aggregator, service});
}

double ClearingOutcome::award(const std::string& node, const std::string& service) const {
  if (node == root) {
    auto it = root_awards.find(service);
    return it == root_awards.end() ? 0.0 : it->second;
  }
  return lookup(awards, {node, service});
}

bool ClearingOutcome::is_degenerate(const std::string& aggregator,
                                    const std::string& service) const {
  auto it = degenerate.find({aggregator, service});
  return it != degenerate.end() && it->second;
}

double ClearingOutcome::parent_price(const std::string& node, const std::string& service) const {
  if (node == root) {
    auto it = top_prices.find(service);
    return it == top_prices.end() ? 0.0 : it->second;
  }
  auto p = parent.find(node);
  if (p == parent.end()) throw Error(ErrorCode::UnknownNode, node);
  return price(p->second, service);
}

namespace {

bool close_to(double a, double b, double tol) {
  return std::abs(a - b) <= tol * (1.0 + std::max(std::abs(a), std::abs(b)));
}

std::vector<char> active_mask(const TreeView& view, const ClearingOptions& options) {
  std::vector<char> active(view.nodes().size(), 1);
  if (!options.active_leaves) return active;
  std::set<std::string, std::less<>> keep(options.active_leaves->begin(),
                                          options.active_leaves->end());
  for (int leaf : view.leaves()) {
    active[static_cast<std::size_t>(leaf)] = keep.count(view.at(leaf).node->name) ? 1 : 0;
  }
  return active;
}

/// Services offered by active leaves in each subtree.
std::vector<std::set<std::string>> services_by_node(const TreeView& view,
                                                    const std::vector<char>& active) {
  std::vector<std::set<std::string>> out(view.nodes().size());
  for (int i = static_cast<int>(view.nodes().size()) - 1; i >= 0; --i) {
    const auto& n = view.at(i);
    auto& mine = out[static_cast<std::size_t>(i)];
    if (n.node->is_leaf()) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (const auto& [s, cap] : n.node->resource().capacities) mine.insert(s);
    } else {
      for (int c : n.children) {
        const auto& theirs = out[static_cast<std::size_t>(c)];
        mine.insert(theirs.begin(), theirs.end());
      }
    }
  }
  return out;
}

std::optional<ServiceMap> effective_top_prices(const MarketTree& tree,
                                               const ClearingOptions& options) {
  if (options.top_prices) return options.top_prices;
  return tree.top_prices;
}

void fill_structure(const TreeView& view, ClearingOutcome& out) {
  out.root = view.at(0).node->name;
  for (std::size_t i = 1; i < view.nodes().size(); ++i) {
    const auto& n = view.nodes()[i];
    out.parent[n.node->name] = view.at(n.parent).node->name;
  }
}

/// Linear expression over LP columns plus a constant from fixed variables.
struct Expr {
  std::map<int, double> terms;
  double constant = 0.0;
};

class LpBuilder {
 public:
  LpBuilder(const MarketTree& tree, const TreeView& view, const ClearingOptions& options,
            bool flat)
      : tree_(tree),
        view_(view),
        options_(options),
        flat_(flat),
        active_(active_mask(view, options)),
        services_(services_by_node(view, active_)),
        top_(effective_top_prices(tree, options)) {}

  ClearingOutcome run();

 private:
  void add_leaf_columns();
  void add_award_columns();
  void add_price_rows();
  void add_side_constraints();
  void resolve(int node, const std::string& var, double coef, Expr& expr) const;
  int add_row(const Expr& lhs, Sense sense, double rhs, std::string label);
  std::vector<int> market_children(int aggregator) const;
  [[noreturn]] void report_infeasible(const LpSolution& sol) const;
  void flag_degeneracy(const LpSolution& sol, ClearingOutcome& out) const;
  bool perturbation_degenerate(int row, double dual) const;
  double value(const LpSolution& sol, const VarRef& ref) const;

  const MarketTree& tree_;
  const TreeView& view_;
  const ClearingOptions& options_;
  bool flat_;
  std::vector<char> active_;
  std::vector<std::set<std::string>> services_;
  std::optional<ServiceMap> top_;

  LpProblem lp_;
  double constant_cost_ = 0.0;
  std::map<VarRef, int> leaf_col_;
  std::map<VarRef, double> leaf_fixed_;
  std::map<std::pair<int, std::string>, int> award_col_;
  std::map<std::pair<int, std::string>, int> price_row_;
  std::set<std::pair<int, std::string>> publicly_constrained_;
};

void LpBuilder::add_leaf_columns() {
  for (int i : view_.leaves()) {
    if (!active_[static_cast<std::size_t>(i)]) continue;
    const auto& name = view_.at(i).node->name;
    const auto& spec = view_.at(i).node->resource();
    auto add = [&](const std::string& var, double cost, double lo, double hi) {
      if (lo == hi) {
        leaf_fixed_[{name, var}] = lo;
        constant_cost_ += cost * lo;
      } else {
        leaf_col_[{name, var}] = lp_.add_var(cost, lo, hi);
      }
    };
    for (const auto& [s, cap] : spec.capacities) add(s, spec.cost(s), spec.lower(s), cap);
    for (const auto& a : spec.auxiliaries) add(a.name, a.cost, a.lo, a.hi);
  }
}

void LpBuilder::add_award_columns() {
  if (!flat_) {
    for (int i : view_.aggregators()) {
      if (i == 0) continue;
      const auto& agg = view_.at(i).node->aggregator();
      for (const auto& s : services_[static_cast<std::size_t>(i)]) {
        double hi = kInf;
        if (agg.declared_capacities) {
          auto it = agg.declared_capacities->find(s);
          if (it != agg.declared_capacities->end()) hi = it->second;
        }
        award_col_[{i, s}] = lp_.add_var(0.0, -kInf, hi);
      }
    }
  }
  if (top_) {
    for (const auto& s : services_[0]) {
      double floor = 0.0;
      for (int leaf : view_.leaves_under(0)) {
        if (active_[static_cast<std::size_t>(leaf)]) {
          floor += view_.at(leaf).node->resource().lower(s);
        }
      }
      auto p = top_->find(s);
      const double price = p == top_->end() ? 0.0 : p->second;
      award_col_[{0, s}] = lp_.add_var(-price, floor, kInf);
    }
  }
}

std::vector<int> LpBuilder::market_children(int aggregator) const {
  if (flat_ && aggregator == 0) return view_.leaves_under(0);
  return view_.at(aggregator).children;
}

void LpBuilder::resolve(int node, const std::string& var, double coef, Expr& expr) const {
  const auto& n = view_.at(node);
  if (n.node->is_leaf()) {
    if (!active_[static_cast<std::size_t>(node)]) return;
    VarRef ref{n.node->name, var};
    if (auto it = leaf_col_.find(ref); it != leaf_col_.end()) {
      expr.terms[it->second] += coef;
    } else if (auto f = leaf_fixed_.find(ref); f != leaf_fixed_.end()) {
      expr.constant += coef * f->second;
    }
    return;
  }
  if (flat_) {
    for (int c : n.children) resolve(c, var, coef, expr);
    return;
  }
  if (auto it = award_col_.find({node, var}); it != award_col_.end()) {
    expr.terms[it->second] += coef;
  }
}

int LpBuilder::add_row(const Expr& lhs, Sense sense, double rhs, std::string label) {
  LpRow row;
  for (auto [j, a] : lhs.terms) {
    if (a != 0.0) row.terms.push_back({j, a});
  }
  row.sense = sense;
  row.rhs = rhs - lhs.constant;
  row.label = std::move(label);
  if (row.terms.empty()) {
    const double tol = options_.lp.feasibility_tol;
    const bool ok = (sense == Sense::LessEqual && 0.0 <= row.rhs + tol) ||
                    (sense == Sense::GreaterEqual && 0.0 >= row.rhs - tol) ||
                    (sense == Sense::Equal && std::abs(row.rhs) <= tol);
    if (!ok) {
      throw Error(ErrorCode::Infeasible,
                  fmt::format("constraint '{}' cannot be met by the available resources",
                              row.label));
    }
    return -1;
  }
  return lp_.add_row(std::move(row));
}

void LpBuilder::add_price_rows() {
  for (int i : view_.aggregators()) {
    if (flat_ && i != 0) continue;
    const auto& name = view_.at(i).node->name;
    std::set<std::string> services = services_[static_cast<std::size_t>(i)];
    if (i == 0 && !top_) {
      for (const auto& [s, d] : tree_.demand) services.insert(s);
    }
    for (const auto& s : services) {
      Expr lhs;
      for (int c : market_children(i)) resolve(c, s, 1.0, lhs);
      double rhs = 0.0;
      std::string label;
      if (i == 0 && !top_) {
        auto d = tree_.demand.find(s);
        rhs = d == tree_.demand.end() ? 0.0 : d->second;
        label = fmt::format("demand[{}]", s);
      } else {
        lhs.terms[award_col_.at({i, s})] -= 1.0;
        label = fmt::format("{}[{}]", name, s);
      }
      const Sense sense = options_.exact_interfaces ? Sense::Equal : Sense::GreaterEqual;
      int row = add_row(lhs, sense, rhs, std::move(label));
      if (row >= 0) price_row_[{i, s}] = row;
    }
  }
}

void LpBuilder::add_side_constraints() {
  for (int i : view_.leaves()) {
    if (!active_[static_cast<std::size_t>(i)]) continue;
    const auto& name = view_.at(i).node->name;
    for (const auto& c : view_.at(i).node->resource().private_constraints) {
      Expr lhs;
      for (const auto& t : c.terms) resolve(i, t.ref.var, t.coef, lhs);
      add_row(lhs, c.sense, c.rhs, fmt::format("{}:{}", name, c.label));
    }
  }
  for (int i : view_.aggregators()) {
    if (flat_ && i != 0) continue;
    const auto& name = view_.at(i).node->name;
    for (const auto& c : view_.at(i).node->aggregator().public_constraints) {
      Expr lhs;
      for (const auto& t : c.terms) {
        const int node = view_.require(t.ref.node);
        if (!view_.at(node).node->is_leaf()) publicly_constrained_.insert({node, t.ref.var});
        resolve(node, t.ref.var, t.coef, lhs);
      }
      add_row(lhs, c.sense, c.rhs, fmt::format("{}:{}", name, c.label));
    }
  }
}

void LpBuilder::report_infeasible(const LpSolution& sol) const {
  std::vector<std::pair<double, std::string>> involved;
  for (std::size_t r = 0; r < sol.farkas.size(); ++r) {
    if (std::abs(sol.farkas[r]) > 1e-9) {
      involved.push_back({std::abs(sol.farkas[r]), lp_.constraints[r].label});
    }
  }
  std::sort(involved.begin(), involved.end(), std::greater<>());
  std::string names;
  for (std::size_t k = 0; k < involved.size() && k < 6; ++k) {
    names += (k ? ", " : "") + involved[k].second;
  }
  throw Error(ErrorCode::Infeasible,
              fmt::format("clearing is infeasible; conflicting rows: {}",
                          names.empty() ? "unknown" : names));
}

bool LpBuilder::perturbation_degenerate(int row, double dual) const {
  const double base = lp_.constraints[static_cast<std::size_t>(row)].rhs;
  const double delta = 1e-6 * std::max(1.0, std::abs(base));
  for (double sign : {1.0, -1.0}) {
    LpProblem p = lp_;
    p.constraints[static_cast<std::size_t>(row)].rhs = base + sign * delta;
    LpSolution s = solve_lp(p, options_.lp);
    if (s.status != LpStatus::Optimal) return true;
    if (!close_to(s.duals[static_cast<std::size_t>(row)], dual, 1e-7)) return true;
  }
  return false;
}

void LpBuilder::flag_degeneracy(const LpSolution& sol, ClearingOutcome& out) const {
  for (int i : view_.aggregators()) {
    if (flat_ && i != 0) continue;
    const auto& name = view_.at(i).node->name;
    for (const auto& s : services_[static_cast<std::size_t>(i)]) {
      bool flag = false;
      auto row = price_row_.find({i, s});
      auto col = award_col_.find({i, s});
      if (!options_.detect_degeneracy || row == price_row_.end()) {
        flag = false;
      } else if (i == 0 && top_) {
        const auto j = static_cast<std::size_t>(col->second);
        flag = close_to(sol.primal[j], lp_.lower[j], 1e-9);
      } else if (i == 0) {
        flag = perturbation_degenerate(row->second, sol.duals[static_cast<std::size_t>(row->second)]);
      } else {
        const auto j = static_cast<std::size_t>(col->second);
        const bool at_cap = std::isfinite(lp_.upper[j]) && close_to(sol.primal[j], lp_.upper[j], 1e-9);
        if (at_cap || publicly_constrained_.count({i, s})) {
          flag = perturbation_degenerate(row->second,
                                         sol.duals[static_cast<std::size_t>(row->second)]);
        } else {
          const auto& parent = view_.at(view_.at(i).parent).node->name;
          flag = out.is_degenerate(parent, s);
        }
      }
      out.degenerate[{name, s}] = flag;
    }
  }
}

double LpBuilder::value(const LpSolution& sol, const VarRef& ref) const {
  if (auto it = leaf_col_.find(ref); it != leaf_col_.end()) {
    return sol.primal[static_cast<std::size_t>(it->second)];
  }
  if (auto f = leaf_fixed_.find(ref); f != leaf_fixed_.end()) return f->second;
  return 0.0;
}

ClearingOutcome LpBuilder::run() {
  add_leaf_columns();
  add_award_columns();
  add_price_rows();
  add_side_constraints();

  LpSolution sol = solve_lp(lp_, options_.lp);
  if (sol.status == LpStatus::Infeasible) report_infeasible(sol);
  if (sol.status == LpStatus::Unbounded) {
    throw Error(ErrorCode::Unbounded, "clearing objective is unbounded below");
  }

  ClearingOutcome out;
  out.mode = flat_ ? ClearingMode::Flat : ClearingMode::Monolithic;
  out.price_taking = top_.has_value();
  out.levels = flat_ ? 1 : tree_.levels;
  out.root = view_.at(0).node->name;
  out.objective = sol.objective_value + constant_cost_;

  for (int i : view_.leaves()) {
    if (!active_[static_cast<std::size_t>(i)]) continue;
    const auto& name = view_.at(i).node->name;
    const auto& spec = view_.at(i).node->resource();
    for (const auto& [s, cap] : spec.capacities) {
      const double x = value(sol, {name, s});
      out.leaf_dispatch[{name, s}] = x;
      out.awards[{name, s}] = x;
      out.service_cost[{name, s}] = spec.cost(s) * x;
      out.leaf_cost[name] += spec.cost(s) * x;
    }
    for (const auto& a : spec.auxiliaries) {
      const double y = value(sol, {name, a.name});
      out.aux_values[{name, a.name}] = y;
      out.leaf_cost[name] += a.cost * y;
    }
    out.total_cost += out.leaf_cost[name];
    out.parent[name] = flat_ ? out.root : view_.at(view_.at(i).parent).node->name;
  }

  for (int i : view_.aggregators()) {
    const auto& name = view_.at(i).node->name;
    if (i != 0 && flat_) continue;
    if (i != 0) out.parent[name] = view_.at(view_.at(i).parent).node->name;
    for (const auto& s : services_[static_cast<std::size_t>(i)]) {
      double lambda = 0.0;
      if (auto r = price_row_.find({i, s}); r != price_row_.end()) {
        lambda = sol.duals[static_cast<std::size_t>(r->second)];
      } else if (i != 0) {
        lambda = out.price(out.parent[name], s);
      }
      out.prices[{name, s}] = lambda;
      if (i != 0) out.awards[{name, s}] = sol.primal[static_cast<std::size_t>(award_col_.at({i, s}))];
    }
  }

  if (top_) {
    for (const auto& s : services_[0]) {
      out.root_awards[s] = sol.primal[static_cast<std::size_t>(award_col_.at({0, s}))];
      auto p = top_->find(s);
      out.top_prices[s] = p == top_->end() ? 0.0 : p->second;
    }
  } else {
    for (const auto& [s, d] : tree_.demand) {
      out.root_awards[s] = d;
      if (!out.prices.count({out.root, s})) out.prices[{out.root, s}] = 0.0;
    }
    for (const auto& s : services_[0]) out.root_awards.try_emplace(s, 0.0);
    for (const auto& [key, lambda] : out.prices) {
      if (key.first == out.root) out.top_prices[key.second] = lambda;
    }
  }

  flag_degeneracy(sol, out);

  // Per-level views, top level first.
  for (int l = out.levels; l >= 1; --l) {
    LevelOutcome level;
    level.level = l;
    for (int i : view_.aggregators()) {
      if (flat_ ? i != 0 : view_.level(i) != l) continue;
      const auto& name = view_.at(i).node->name;
      for (const auto& s : services_[static_cast<std::size_t>(i)]) {
        level.prices[{name, s}] = out.prices[{name, s}];
        level.degenerate[{name, s}] = out.is_degenerate(name, s);
      }
      for (int c : market_children(i)) {
        const auto& child = view_.at(c).node->name;
        for (const auto& s : services_[static_cast<std::size_t>(c)]) {
          level.awards[{child, s}] = out.award(child, s);
        }
      }
    }
    out.per_level.push_back(std::move(level));
  }

  if (options_.verify) out.kkt = verify_kkt(lp_, sol, options_.kkt_tol);
  out.problem = std::move(lp_);
  out.solution = std::move(sol);
  return out;
}

// ---------------------------------------------------------------------------
// Sequential merit-order cascade

struct Segment {
  double cost = 0.0;
  double cap = 0.0;
  int owner = -1;  // child index within the aggregator, or leaf for curves
};

class Cascade {
 public:
  Cascade(const MarketTree& tree, const TreeView& view, const ClearingOptions& options)
      : tree_(tree),
        view_(view),
        active_(active_mask(view, options)),
        services_(services_by_node(view, active_)),
        top_(effective_top_prices(tree, options)) {}

  ClearingOutcome run();

 private:
  void check_supported() const;
  /// Aggregate bid curve of node i for service s: its leaves' segments in
  /// merit order, ties kept in declaration order.
  std::vector<Segment> curve(int i, const std::string& s) const;
  void dispatch(int i, const std::string& s, double award, double price, bool degenerate,
                ClearingOutcome& out) const;

  const MarketTree& tree_;
  const TreeView& view_;
  std::vector<char> active_;
  std::vector<std::set<std::string>> services_;
  std::optional<ServiceMap> top_;
};

void Cascade::check_supported() const {
  for (int i : view_.leaves()) {
    const auto& n = *view_.at(i).node;
    if (!n.resource().is_box_only()) {
      throw Error(ErrorCode::UnsupportedConstraints,
                  fmt::format("leaf '{}' has constraints beyond a box", n.name));
    }
    for (const auto& [s, c] : n.resource().costs) {
      if (c < 0.0) {
        throw Error(ErrorCode::UnsupportedConstraints,
                    fmt::format("leaf '{}' has a negative cost for {}", n.name, s));
      }
    }
  }
  for (int i : view_.aggregators()) {
    const auto& n = *view_.at(i).node;
    if (!n.aggregator().public_constraints.empty() || n.aggregator().declared_capacities) {
      throw Error(ErrorCode::UnsupportedConstraints,
                  fmt::format("aggregator '{}' has public constraints", n.name));
    }
  }
}

std::vector<Segment> Cascade::curve(int i, const std::string& s) const {
  const auto& n = view_.at(i);
  std::vector<Segment> out;
  if (n.node->is_leaf()) {
    if (!active_[static_cast<std::size_t>(i)]) return out;
    const auto& spec = n.node->resource();
    const double cap = spec.upper(s);
    if (cap > 0.0) out.push_back({spec.cost(s), cap, i});
    return out;
  }
  for (int c : n.children) {
    auto part = curve(c, s);
    out.insert(out.end(), part.begin(), part.end());
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Segment& a, const Segment& b) { return a.cost < b.cost; });
  return out;
}

void Cascade::dispatch(int i, const std::string& s, double award, double price, bool degenerate,
                       ClearingOutcome& out) const {
  const auto& n = view_.at(i);
  if (n.node->is_leaf()) {
    const auto& spec = n.node->resource();
    if (!spec.capacities.count(s)) return;
    const double x = std::clamp(award, 0.0, spec.upper(s));
    out.leaf_dispatch[{n.node->name, s}] = x;
    out.awards[{n.node->name, s}] = x;
    return;
  }
  // Re-clear this aggregator's children against its award. The price the
  // aggregator posts is the one it receives: it takes its parent's price.
  std::vector<double> costs, caps;
  std::vector<int> owner;
  for (std::size_t k = 0; k < n.children.size(); ++k) {
    for (const auto& seg : curve(n.children[k], s)) {
      costs.push_back(seg.cost);
      caps.push_back(seg.cap);
      owner.push_back(static_cast<int>(k));
    }
  }
  const double total = std::accumulate(caps.begin(), caps.end(), 0.0);
  const double demand = std::clamp(award, 0.0, total);
  auto merit = merit_order_clear(costs, caps, demand);
  std::vector<double> child_award(n.children.size(), 0.0);
  for (std::size_t k = 0; k < merit.dispatch.size(); ++k) {
    child_award[static_cast<std::size_t>(owner[k])] += merit.dispatch[k];
  }
  out.prices[{n.node->name, s}] = price;
  out.degenerate[{n.node->name, s}] = degenerate;
  for (std::size_t k = 0; k < n.children.size(); ++k) {
    const int c = n.children[k];
    if (services_[static_cast<std::size_t>(c)].count(s) == 0) continue;
    if (!view_.at(c).node->is_leaf()) out.awards[{view_.at(c).node->name, s}] = child_award[k];
    dispatch(c, s, child_award[k], price, degenerate, out);
  }
}

ClearingOutcome Cascade::run() {
  check_supported();
  ClearingOutcome out;
  out.mode = ClearingMode::Sequential;
  out.price_taking = top_.has_value();
  out.levels = tree_.levels;
  fill_structure(view_, out);
  for (int leaf : view_.leaves()) {
    if (!active_[static_cast<std::size_t>(leaf)]) out.parent.erase(view_.at(leaf).node->name);
  }

  std::set<std::string> services = services_[0];
  if (!top_) {
    for (const auto& [s, d] : tree_.demand) services.insert(s);
  }
  for (const auto& s : services) {
    auto segs = curve(0, s);
    std::vector<double> costs, caps;
    for (const auto& seg : segs) {
      costs.push_back(seg.cost);
      caps.push_back(seg.cap);
    }
    double award = 0.0;
    double price = 0.0;
    bool degenerate = false;
    if (top_) {
      auto p = top_->find(s);
      price = p == top_->end() ? 0.0 : p->second;
      for (const auto& seg : segs) {
        if (seg.cost < price) award += seg.cap;
      }
      degenerate = award == 0.0;
    } else {
      auto d = tree_.demand.find(s);
      award = d == tree_.demand.end() ? 0.0 : d->second;
      const double total = std::accumulate(caps.begin(), caps.end(), 0.0);
      if (award > total * (1.0 + 1e-12) + 1e-12) {
        throw Error(ErrorCode::Infeasible,
                    fmt::format("demand for {} exceeds total capacity", s));
      }
      if (segs.empty()) {
        out.root_awards[s] = award;
        out.prices[{out.root, s}] = 0.0;
        out.top_prices[s] = 0.0;
        continue;
      }
      auto merit = merit_order_clear(costs, caps, std::min(award, total));
      price = merit.price;
      // The price is unique iff the next unit costs the same as the last one.
      double filled = 0.0;
      double next = kInf;
      for (const auto& seg : segs) {
        filled += seg.cap;
        if (filled > award + 1e-9 * (1.0 + award)) {
          next = seg.cost;
          break;
        }
      }
      degenerate = !(next <= price + 1e-9 * (1.0 + std::abs(price)));
    }
    out.root_awards[s] = award;
    out.top_prices[s] = price;
    dispatch(0, s, award, price, degenerate, out);
  }

  for (int leaf : view_.leaves()) {
    if (active_[static_cast<std::size_t>(leaf)]) out.leaf_cost[view_.at(leaf).node->name] = 0.0;
  }
  for (const auto& [key, x] : out.leaf_dispatch) {
    const auto& spec = view_.at(view_.require(key.first)).node->resource();
    const double c = spec.cost(key.second) * x;
    out.service_cost[key] = c;
    out.leaf_cost[key.first] += c;
    out.total_cost += c;
  }
  out.objective = out.total_cost;
  if (top_) {
    for (const auto& [s, x] : out.root_awards) out.objective -= out.top_prices[s] * x;
  }

  for (int l = out.levels; l >= 1; --l) {
    LevelOutcome level;
    level.level = l;
    for (int i : view_.aggregators()) {
      if (view_.level(i) != l) continue;
      const auto& name = view_.at(i).node->name;
      for (const auto& s : services_[static_cast<std::size_t>(i)]) {
        level.prices[{name, s}] = out.price(name, s);
        level.degenerate[{name, s}] = out.is_degenerate(name, s);
      }
      for (int c : view_.at(i).children) {
        const auto& child = view_.at(c).node->name;
        for (const auto& s : services_[static_cast<std::size_t>(c)]) {
          level.awards[{child, s}] = out.award(child, s);
        }
      }
    }
    out.per_level.push_back(std::move(level));
  }
  return out;
}

}  // namespace

ClearingOutcome clear_monolithic(const MarketTree& tree, const ClearingOptions& options) {
  TreeView view(tree);
  return LpBuilder(tree, view, options, false).run();
}

ClearingOutcome clear_flat(const MarketTree& tree, const ClearingOptions& options) {
  TreeView view(tree);
  return LpBuilder(tree, view, options, true).run();
}

ClearingOutcome clear_sequential(const MarketTree& tree, const ClearingOptions& options) {
  TreeView view(tree);
  return Cascade(tree, view, options).run();
}

ClearingOutcome clear(const MarketTree& tree, ClearingMode mode, const ClearingOptions& options) {
  switch (mode) {
    case ClearingMode::Monolithic: return clear_monolithic(tree, options);
    case ClearingMode::Sequential: return clear_sequential(tree, options);
    case ClearingMode::Flat: return clear_flat(tree, options);
  }
  throw Error(ErrorCode::Usage, "unknown clearing mode");
}

double leaf_feasibility_residual(const MarketTree& tree, const ClearingOutcome& outcome) {
  TreeView view(tree);
  double worst = 0.0;
  for (int i : view.leaves()) {
    const auto& name = view.at(i).node->name;
    const auto& spec = view.at(i).node->resource();
    auto val = [&](const std::string& var) {
      if (auto it = outcome.leaf_dispatch.find({name, var}); it != outcome.leaf_dispatch.end()) {
        return it->second;
      }
      return lookup(outcome.aux_values, {name, var});
    };
    bool present = false;
    for (const auto& [s, cap] : spec.capacities) {
      if (!outcome.leaf_dispatch.count({name, s})) continue;
      present = true;
      const double x = val(s);
      worst = std::max({worst, spec.lower(s) - x, x - cap});
    }
    if (!present) continue;
    for (const auto& a : spec.auxiliaries) {
      const double y = val(a.name);
      worst = std::max({worst, a.lo - y, y - a.hi});
    }
    for (const auto& c : spec.private_constraints) {
      double act = 0.0;
      for (const auto& t : c.terms) act += t.coef * val(t.ref.var);
      switch (c.sense) {
        case Sense::LessEqual: worst = std::max(worst, act - c.rhs); break;
        case Sense::GreaterEqual: worst = std::max(worst, c.rhs - act); break;
        case Sense::Equal: worst = std::max(worst, std::abs(act - c.rhs)); break;
      }
    }
  }
  return worst;
}

}  // namespace tsm
