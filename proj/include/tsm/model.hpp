#pragma once

#include <compare>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tsm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ServiceKind { Energy, Regulation, Reserve, Other };

std::string_view to_string(ServiceKind kind);
ServiceKind parse_service_kind(std::string_view text);

/// One tradable product. Multi-period instances give every (kind, hour)
/// pair its own index, so a day of three services is 72 indices.
struct ServiceIndex {
  std::string id;
  std::string label;
  ServiceKind kind = ServiceKind::Other;
  int hour = 0;

  bool operator==(const ServiceIndex&) const = default;
};

/// Service id -> value. Ordered so every iteration is deterministic.
using ServiceMap = std::map<std::string, double>;

enum class Sense { LessEqual, Equal, GreaterEqual };

std::string_view to_string(Sense sense);
Sense parse_sense(std::string_view text);

/// Names one decision variable: a service quantity of a node (leaf or
/// aggregator award) or an auxiliary variable declared on a leaf.
struct VarRef {
  std::string node;
  std::string var;

  auto operator<=>(const VarRef&) const = default;
};

struct Term {
  VarRef ref;
  double coef = 0.0;
};

struct LinearConstraint {
  std::vector<Term> terms;
  Sense sense = Sense::LessEqual;
  double rhs = 0.0;
  std::string label;
};

/// Internal variable of a resource (state of charge, charge/discharge split).
/// Not traded, but may carry a cost and appear in private constraints.
struct AuxVariable {
  std::string name;
  double lo = 0.0;
  double hi = kInf;
  double cost = 0.0;
};

/// Bid of a physical resource. Every service in `capacities` is a variable
/// bounded by [lower_bounds (default 0), capacities].
struct ResourceSpec {
  ServiceMap costs;
  ServiceMap capacities;
  ServiceMap lower_bounds;
  std::vector<AuxVariable> auxiliaries;
  std::vector<LinearConstraint> private_constraints;

  double cost(const std::string& service) const;
  double lower(const std::string& service) const;
  double upper(const std::string& service) const;
  const AuxVariable* aux(std::string_view name) const;

  /// True when the feasible set is the plain box 0 <= x <= capacity.
  bool is_box_only() const;
};

struct MarketNode;

struct Aggregator {
  std::vector<MarketNode> children;
  std::vector<LinearConstraint> public_constraints;
  /// Box the aggregator reports upward, if it declares one. Enforced as an
  /// upper bound on its award and checked against its children's boxes.
  std::optional<ServiceMap> declared_capacities;
};

struct MarketNode {
  std::string name;
  std::variant<ResourceSpec, Aggregator> body;

  bool is_leaf() const { return std::holds_alternative<ResourceSpec>(body); }
  const ResourceSpec& resource() const { return std::get<ResourceSpec>(body); }
  ResourceSpec& resource() { return std::get<ResourceSpec>(body); }
  const Aggregator& aggregator() const { return std::get<Aggregator>(body); }
  Aggregator& aggregator() { return std::get<Aggregator>(body); }

  static MarketNode leaf(std::string name, ResourceSpec spec);
  static MarketNode group(std::string name, std::vector<MarketNode> children,
                          std::vector<LinearConstraint> public_constraints = {});
};

/// The whole hierarchy. The root either meets `demand` (an endogenous
/// market) or, when `top_prices` is set, sells into an exogenous market as
/// a price-taker and `demand` is ignored.
struct MarketTree {
  std::vector<ServiceIndex> services;
  MarketNode root;
  ServiceMap demand;
  std::optional<ServiceMap> top_prices;
  int levels = 1;

  const ServiceIndex* service(std::string_view id) const;
  bool price_taking() const { return top_prices.has_value(); }
};

/// Flat, index-based view of a tree. Node 0 is the root; nodes appear in
/// depth-first declaration order. Holds pointers into the tree, so the tree
/// must outlive the view.
class TreeView {
 public:
  struct Node {
    const MarketNode* node = nullptr;
    int parent = -1;
    int depth = 0;
    std::vector<int> children;
  };

  explicit TreeView(const MarketTree& tree);

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& at(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  std::optional<int> find(std::string_view name) const;
  int require(std::string_view name) const;
  const std::vector<int>& leaves() const { return leaves_; }
  const std::vector<int>& aggregators() const { return aggregators_; }
  int max_depth() const { return max_depth_; }
  /// Market level of a node: the root sits at `levels`, its children one below.
  int level(int i) const { return levels_ - at(i).depth; }
  bool is_descendant(int node, int ancestor) const;
  std::vector<int> leaves_under(int i) const;
  /// Services any leaf under node i can provide (union of capacity keys).
  std::vector<std::string> services_under(int i) const;

 private:
  void add(const MarketNode& node, int parent, int depth);

  std::vector<Node> nodes_;
  std::vector<int> leaves_;
  std::vector<int> aggregators_;
  std::map<std::string, int, std::less<>> by_name_;
  int max_depth_ = 0;
  int levels_ = 1;
};

std::vector<ServiceIndex> flatten_services(const std::vector<ServiceKind>& kinds, int horizon);
std::string service_id(ServiceKind kind, int hour);

/// Assembles a tree and rejects structural errors (DuplicateName,
/// DanglingReference, NegativeCapacity, InvalidBounds). Levels are set to the
/// maximum leaf depth.
MarketTree assemble_market_tree(std::vector<ServiceIndex> services, MarketNode root,
                                ServiceMap demand,
                                std::optional<ServiceMap> top_prices = std::nullopt);

enum class DiagnosticKind {
  DuplicateName,
  DanglingReference,
  NegativeCapacity,
  InvalidBounds,
  NonFiniteValue,
  EmptyConstraint,
  EmptyLeaf,
  UnknownService,
  InfeasibleDemand,
  RootNotAggregator,
  LevelMismatch,
};

std::string_view to_string(DiagnosticKind kind);

struct Diagnostic {
  DiagnosticKind kind;
  std::string node;
  std::string message;
};

/// Empty iff every structural invariant holds.
std::vector<Diagnostic> validate_tree(const MarketTree& tree);

}  // namespace tsm
