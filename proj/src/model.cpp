#include "tsm/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "tsm/error.hpp"

namespace tsm {

std::string_view to_string(ServiceKind kind) {
  switch (kind) {
    case ServiceKind::Energy: return "energy";
    case ServiceKind::Regulation: return "regulation";
    case ServiceKind::Reserve: return "reserve";
    case ServiceKind::Other: return "other";
  }
  return "other";
}

ServiceKind parse_service_kind(std::string_view text) {
  if (text == "energy") return ServiceKind::Energy;
  if (text == "regulation") return ServiceKind::Regulation;
  if (text == "reserve") return ServiceKind::Reserve;
  if (text == "other") return ServiceKind::Other;
  throw Error(ErrorCode::InvalidConfig, fmt::format("unknown service kind '{}'", text));
}

std::string_view to_string(Sense sense) {
  switch (sense) {
    case Sense::LessEqual: return "<=";
    case Sense::Equal: return "=";
    case Sense::GreaterEqual: return ">=";
  }
  return "<=";
}

Sense parse_sense(std::string_view text) {
  if (text == "<=" || text == "le") return Sense::LessEqual;
  if (text == "=" || text == "==" || text == "eq") return Sense::Equal;
  if (text == ">=" || text == "ge") return Sense::GreaterEqual;
  throw Error(ErrorCode::InvalidConfig, fmt::format("unknown constraint sense '{}'", text));
}

double ResourceSpec::cost(const std::string& service) const {
  auto it = costs.find(service);
  return it == costs.end() ? 0.0 : it->second;
}

double ResourceSpec::lower(const std::string& service) const {
  auto it = lower_bounds.find(service);
  return it == lower_bounds.end() ? 0.0 : it->second;
}

double ResourceSpec::upper(const std::string& service) const {
  auto it = capacities.find(service);
  return it == capacities.end() ? 0.0 : it->second;
}

const AuxVariable* ResourceSpec::aux(std::string_view name) const {
  for (const auto& a : auxiliaries) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

bool ResourceSpec::is_box_only() const {
  if (!private_constraints.empty() || !auxiliaries.empty()) return false;
  return std::all_of(lower_bounds.begin(), lower_bounds.end(),
                     [](const auto& kv) { return kv.second == 0.0; });
}

MarketNode MarketNode::leaf(std::string name, ResourceSpec spec) {
  return MarketNode{std::move(name), std::move(spec)};
}

MarketNode MarketNode::group(std::string name, std::vector<MarketNode> children,
                             std::vector<LinearConstraint> public_constraints) {
  Aggregator agg;
  agg.children = std::move(children);
  agg.public_constraints = std::move(public_constraints);
  return MarketNode{std::move(name), std::move(agg)};
}

const ServiceIndex* MarketTree::service(std::string_view id) const {
  for (const auto& s : services) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

TreeView::TreeView(const MarketTree& tree) : levels_(tree.levels) {
  add(tree.root, -1, 0);
}

void TreeView::add(const MarketNode& node, int parent, int depth) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{&node, parent, depth, {}});
  by_name_.emplace(node.name, index);  // first wins; duplicates are diagnosed separately
  if (parent >= 0) nodes_[static_cast<std::size_t>(parent)].children.push_back(index);
  max_depth_ = std::max(max_depth_, depth);
  if (node.is_leaf()) {
    leaves_.push_back(index);
    return;
  }
  aggregators_.push_back(index);
  for (const auto& child : node.aggregator().children) add(child, index, depth + 1);
}

std::optional<int> TreeView::find(std::string_view name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

int TreeView::require(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw Error(ErrorCode::UnknownNode, fmt::format("no node named '{}'", name));
}

bool TreeView::is_descendant(int node, int ancestor) const {
  for (int p = at(node).parent; p >= 0; p = at(p).parent) {
    if (p == ancestor) return true;
  }
  return false;
}

std::vector<int> TreeView::leaves_under(int i) const {
  std::vector<int> out;
  std::vector<int> stack{i};
  while (!stack.empty()) {
    int n = stack.back();
    stack.pop_back();
    if (at(n).node->is_leaf()) {
      out.push_back(n);
      continue;
    }
    const auto& ch = at(n).children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

std::vector<std::string> TreeView::services_under(int i) const {
  std::set<std::string> ids;
  for (int leaf : leaves_under(i)) {
    for (const auto& [s, cap] : at(leaf).node->resource().capacities) ids.insert(s);
  }
  return {ids.begin(), ids.end()};
}

std::string service_id(ServiceKind kind, int hour) {
  return fmt::format("{}@{}", to_string(kind), hour);
}

std::vector<ServiceIndex> flatten_services(const std::vector<ServiceKind>& kinds, int horizon) {
  if (kinds.empty()) throw Error(ErrorCode::EmptyKinds, "no service kinds given");
  if (horizon < 1) {
    throw Error(ErrorCode::InvalidHorizon, fmt::format("horizon must be >= 1, got {}", horizon));
  }
  std::vector<ServiceKind> unique;
  for (auto k : kinds) {
    if (std::find(unique.begin(), unique.end(), k) == unique.end()) unique.push_back(k);
  }
  std::vector<ServiceIndex> out;
  out.reserve(unique.size() * static_cast<std::size_t>(horizon));
  for (auto k : unique) {
    for (int h = 0; h < horizon; ++h) {
      out.push_back(ServiceIndex{service_id(k, h),
                                 horizon == 1 ? std::string(to_string(k))
                                              : fmt::format("{} h{:02d}", to_string(k), h),
                                 k, h});
    }
  }
  return out;
}

std::string_view to_string(DiagnosticKind kind) {
  switch (kind) {
    case DiagnosticKind::DuplicateName: return "DuplicateName";
    case DiagnosticKind::DanglingReference: return "DanglingReference";
    case DiagnosticKind::NegativeCapacity: return "NegativeCapacity";
    case DiagnosticKind::InvalidBounds: return "InvalidBounds";
    case DiagnosticKind::NonFiniteValue: return "NonFiniteValue";
    case DiagnosticKind::EmptyConstraint: return "EmptyConstraint";
    case DiagnosticKind::EmptyLeaf: return "EmptyLeaf";
    case DiagnosticKind::UnknownService: return "UnknownService";
    case DiagnosticKind::InfeasibleDemand: return "InfeasibleDemand";
    case DiagnosticKind::RootNotAggregator: return "RootNotAggregator";
    case DiagnosticKind::LevelMismatch: return "LevelMismatch";
  }
  return "Unknown";
}

namespace {

bool names_var(const TreeView& view, int node, const std::string& var) {
  const MarketNode& n = *view.at(node).node;
  if (n.is_leaf()) {
    const auto& spec = n.resource();
    return spec.capacities.count(var) > 0 || spec.aux(var) != nullptr;
  }
  auto services = view.services_under(node);
  return std::binary_search(services.begin(), services.end(), var);
}

void check_constraint(const TreeView& view, const LinearConstraint& c, int owner,
                      bool is_private, std::vector<Diagnostic>& out) {
  const std::string& owner_name = view.at(owner).node->name;
  if (c.terms.empty()) {
    out.push_back({DiagnosticKind::EmptyConstraint, owner_name,
                   fmt::format("constraint '{}' has no terms", c.label)});
  }
  if (!std::isfinite(c.rhs)) {
    out.push_back({DiagnosticKind::NonFiniteValue, owner_name,
                   fmt::format("constraint '{}' has a non-finite rhs", c.label)});
  }
  for (const auto& t : c.terms) {
    if (!std::isfinite(t.coef)) {
      out.push_back({DiagnosticKind::NonFiniteValue, owner_name,
                     fmt::format("constraint '{}' has a non-finite coefficient", c.label)});
    }
    const std::string& target = t.ref.node.empty() ? owner_name : t.ref.node;
    auto idx = view.find(target);
    bool ok = idx.has_value();
    if (ok) {
      ok = is_private ? *idx == owner : view.is_descendant(*idx, owner);
    }
    if (ok) ok = names_var(view, *idx, t.ref.var);
    if (!ok) {
      out.push_back({DiagnosticKind::DanglingReference, owner_name,
                     fmt::format("constraint '{}' references {}.{} outside its scope", c.label,
                                 target, t.ref.var)});
    }
  }
}

}  // namespace

std::vector<Diagnostic> validate_tree(const MarketTree& tree) {
  std::vector<Diagnostic> out;
  TreeView view(tree);
  std::set<std::string> known_services;
  for (const auto& s : tree.services) known_services.insert(s.id);

  if (tree.root.is_leaf()) {
    out.push_back({DiagnosticKind::RootNotAggregator, tree.root.name, "root must be an aggregator"});
  }

  std::set<std::string> seen;
  for (const auto& n : view.nodes()) {
    if (!seen.insert(n.node->name).second) {
      out.push_back({DiagnosticKind::DuplicateName, n.node->name, "node name used more than once"});
    }
  }
  if (view.max_depth() > tree.levels) {
    out.push_back({DiagnosticKind::LevelMismatch, tree.root.name,
                   fmt::format("leaf depth {} exceeds levels {}", view.max_depth(), tree.levels)});
  }

  for (int i = 0; i < static_cast<int>(view.nodes().size()); ++i) {
    const MarketNode& node = *view.at(i).node;
    if (!node.is_leaf()) {
      const auto& agg = node.aggregator();
      for (const auto& c : agg.public_constraints) check_constraint(view, c, i, false, out);
      if (agg.declared_capacities) {
        for (const auto& [s, cap] : *agg.declared_capacities) {
          if (!known_services.count(s)) {
            out.push_back({DiagnosticKind::UnknownService, node.name,
                           fmt::format("declared capacity for unknown service '{}'", s)});
          }
          if (cap < 0) {
            out.push_back({DiagnosticKind::NegativeCapacity, node.name,
                           fmt::format("declared capacity {} for '{}'", cap, s)});
          }
        }
      }
      continue;
    }
    const auto& spec = node.resource();
    bool any_positive = false;
    for (const auto& [s, cap] : spec.capacities) {
      if (!known_services.count(s)) {
        out.push_back({DiagnosticKind::UnknownService, node.name,
                       fmt::format("capacity for unknown service '{}'", s)});
      }
      if (!std::isfinite(cap)) {
        out.push_back({DiagnosticKind::NonFiniteValue, node.name,
                       fmt::format("capacity for '{}' is not finite", s)});
      } else if (cap < 0) {
        out.push_back({DiagnosticKind::NegativeCapacity, node.name,
                       fmt::format("capacity {} for '{}'", cap, s)});
      }
      if (spec.lower(s) > cap) {
        out.push_back({DiagnosticKind::InvalidBounds, node.name,
                       fmt::format("lower bound exceeds capacity for '{}'", s)});
      }
      if (cap > 0) any_positive = true;
    }
    for (const auto& [s, lo] : spec.lower_bounds) {
      if (!spec.capacities.count(s)) {
        out.push_back({DiagnosticKind::UnknownService, node.name,
                       fmt::format("lower bound for '{}' without a capacity", s)});
      }
      if (!std::isfinite(lo)) {
        out.push_back({DiagnosticKind::NonFiniteValue, node.name,
                       fmt::format("lower bound for '{}' is not finite", s)});
      }
    }
    for (const auto& [s, c] : spec.costs) {
      if (!std::isfinite(c)) {
        out.push_back({DiagnosticKind::NonFiniteValue, node.name,
                       fmt::format("cost for '{}' is not finite", s)});
      }
      if (!spec.capacities.count(s)) {
        out.push_back({DiagnosticKind::UnknownService, node.name,
                       fmt::format("cost for '{}' without a capacity", s)});
      }
    }
    for (const auto& a : spec.auxiliaries) {
      if (a.lo > a.hi || !std::isfinite(a.cost)) {
        out.push_back({DiagnosticKind::InvalidBounds, node.name,
                       fmt::format("auxiliary '{}' has invalid bounds or cost", a.name)});
      }
    }
    if (!any_positive) {
      out.push_back({DiagnosticKind::EmptyLeaf, node.name, "no service with positive capacity"});
    }
    for (const auto& c : spec.private_constraints) check_constraint(view, c, i, true, out);
  }

  if (!tree.price_taking()) {
    ServiceMap supply;
    for (int leaf : view.leaves()) {
      for (const auto& [s, cap] : view.at(leaf).node->resource().capacities) supply[s] += cap;
    }
    for (const auto& [s, d] : tree.demand) {
      if (!known_services.count(s)) {
        out.push_back({DiagnosticKind::UnknownService, tree.root.name,
                       fmt::format("demand for unknown service '{}'", s)});
        continue;
      }
      if (d > supply[s]) {
        out.push_back({DiagnosticKind::InfeasibleDemand, tree.root.name,
                       fmt::format("demand {} for '{}' exceeds total capacity {}", d, s, supply[s])});
      }
    }
  } else {
    for (const auto& [s, p] : *tree.top_prices) {
      if (!known_services.count(s)) {
        out.push_back({DiagnosticKind::UnknownService, tree.root.name,
                       fmt::format("price for unknown service '{}'", s)});
      } else if (!std::isfinite(p)) {
        out.push_back({DiagnosticKind::NonFiniteValue, tree.root.name,
                       fmt::format("price for '{}' is not finite", s)});
      }
    }
  }
  return out;
}

MarketTree assemble_market_tree(std::vector<ServiceIndex> services, MarketNode root,
                                ServiceMap demand, std::optional<ServiceMap> top_prices) {
  std::set<std::string> ids;
  for (const auto& s : services) {
    if (!ids.insert(s.id).second) {
      throw Error(ErrorCode::DuplicateName, fmt::format("service id '{}' repeated", s.id));
    }
  }
  MarketTree tree{std::move(services), std::move(root), std::move(demand), std::move(top_prices), 1};
  tree.levels = std::max(1, TreeView(tree).max_depth());

  for (const auto& d : validate_tree(tree)) {
    switch (d.kind) {
      case DiagnosticKind::DuplicateName:
        throw Error(ErrorCode::DuplicateName, fmt::format("{}: {}", d.node, d.message));
      case DiagnosticKind::DanglingReference:
      case DiagnosticKind::UnknownService:
        throw Error(ErrorCode::DanglingReference, fmt::format("{}: {}", d.node, d.message));
      case DiagnosticKind::NegativeCapacity:
        throw Error(ErrorCode::NegativeCapacity, fmt::format("{}: {}", d.node, d.message));
      case DiagnosticKind::InvalidBounds:
      case DiagnosticKind::NonFiniteValue:
      case DiagnosticKind::EmptyConstraint:
      case DiagnosticKind::RootNotAggregator:
        throw Error(ErrorCode::InvalidBounds, fmt::format("{}: {}", d.node, d.message));
      default:
        break;  // infeasibility and empty leaves are reported, not rejected
    }
  }
  return tree;
}

}  // namespace tsm
