#include "tsm/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "tsm/analysis.hpp"
#include "tsm/error.hpp"

namespace tsm {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!j.is_object()) invalid(fmt::format("{} must be an object", where));
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      invalid(fmt::format("unknown key '{}' in {}", key, where));
    }
  }
}

ServiceMap parse_service_map(const json& j, const std::string& where) {
  if (!j.is_object()) invalid(fmt::format("{} must map service ids to numbers", where));
  ServiceMap out;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) invalid(fmt::format("{}.{} must be a number", where, key));
    out[key] = value.get<double>();
  }
  return out;
}

/// A scalar is repeated over the horizon; an array must have one entry per hour.
std::vector<double> parse_profile(const json& j, int horizon, const std::string& where) {
  if (j.is_number()) return std::vector<double>(static_cast<std::size_t>(horizon), j.get<double>());
  if (!j.is_array()) invalid(fmt::format("{} must be a number or an array", where));
  auto out = j.get<std::vector<double>>();
  if (static_cast<int>(out.size()) != horizon) {
    invalid(fmt::format("{} has {} entries, horizon is {}", where, out.size(), horizon));
  }
  return out;
}

LinearConstraint parse_constraint(const json& j, const std::string& where) {
  check_keys(j, {"terms", "sense", "rhs", "label"}, where);
  LinearConstraint c;
  for (const auto& t : j.at("terms")) {
    check_keys(t, {"node", "var", "coef"}, where + ".terms");
    c.terms.push_back({{t.value("node", std::string{}), t.at("var").get<std::string>()},
                       t.value("coef", 1.0)});
  }
  c.sense = parse_sense(j.at("sense").get<std::string>());
  c.rhs = j.at("rhs").get<double>();
  c.label = j.value("label", std::string{});
  return c;
}

std::vector<LinearConstraint> parse_constraints(const json& j, const std::string& where) {
  std::vector<LinearConstraint> out;
  if (j.is_null()) return out;
  if (!j.is_array()) invalid(fmt::format("{} must be an array", where));
  for (const auto& c : j) out.push_back(parse_constraint(c, where));
  return out;
}

FleetMode parse_fleet_mode(const json& j) {
  const auto text = j.get<std::string>();
  if (text == "aggregate") return FleetMode::Aggregate;
  if (text == "individual") return FleetMode::Individual;
  invalid(fmt::format("unknown fleet mode '{}'", text));
}

GridSpec parse_grid_json(const json& j, const GridSpec& fallback, const std::string& where) {
  if (j.is_null()) return fallback;
  check_keys(j, {"lo", "hi", "step"}, where);
  GridSpec g = fallback;
  g.lo = j.value("lo", g.lo);
  g.hi = j.value("hi", g.hi);
  g.step = j.value("step", g.step);
  return g;
}

struct BuildContext {
  int horizon = 1;
  FleetMode fleet = FleetMode::Aggregate;
};

StorageParams storage_params(const json& p, const std::string& where) {
  check_keys(p, {"power_cap", "energy_cap", "efficiency", "initial_soc", "marginal_cost",
                 "regulation_cost", "reserve_cost"},
             where);
  StorageParams s;
  s.power_cap = p.value("power_cap", s.power_cap);
  s.energy_cap = p.value("energy_cap", s.energy_cap);
  s.efficiency = p.value("efficiency", s.efficiency);
  s.initial_soc = p.value("initial_soc", s.initial_soc);
  s.marginal_cost = p.value("marginal_cost", s.marginal_cost);
  s.regulation_cost = p.value("regulation_cost", s.regulation_cost);
  s.reserve_cost = p.value("reserve_cost", s.reserve_cost);
  return s;
}

MarketNode build_fleet(const std::string& name, const json& p, const BuildContext& ctx) {
  const std::string where = name + ".params";
  check_keys(p, {"count", "charger_kw", "bidirectional", "availability", "marginal_cost",
                 "members", "member_prefix"},
             where);
  EvFleetParams f;
  f.count = p.value("count", f.count);
  f.charger_kw = p.value("charger_kw", f.charger_kw);
  f.bidirectional = p.value("bidirectional", f.bidirectional);
  f.marginal_cost = p.value("marginal_cost", f.marginal_cost);
  if (p.contains("availability")) {
    f.availability = parse_profile(p["availability"], ctx.horizon, where + ".availability");
  }
  std::vector<EvMemberOverride> members;
  for (const auto& m : p.value("members", json::array())) {
    check_keys(m, {"marginal_cost", "charger_kw", "availability"}, where + ".members");
    EvMemberOverride o;
    if (m.contains("marginal_cost")) o.marginal_cost = m["marginal_cost"].get<double>();
    if (m.contains("charger_kw")) o.charger_kw = m["charger_kw"].get<double>();
    if (m.contains("availability")) {
      o.availability = parse_profile(m["availability"], ctx.horizon, where + ".members.availability");
    }
    members.push_back(std::move(o));
  }
  if (ctx.fleet == FleetMode::Individual) {
    const std::string prefix = p.value("member_prefix", std::string("EV"));
    return MarketNode::group(name, build_ev_members(prefix, f, ctx.horizon, members));
  }
  return build_ev_fleet_node(name, aggregate_fleet(f, ctx.horizon, members), ctx.horizon);
}

MarketNode parse_node(const json& j, const BuildContext& ctx) {
  if (!j.is_object() || !j.contains("name")) invalid("every tree node needs a name");
  const std::string name = j.at("name").get<std::string>();

  if (j.contains("builder")) {
    check_keys(j, {"name", "builder", "params"}, name);
    const std::string builder = j.at("builder").get<std::string>();
    const json params = j.value("params", json::object());
    if (builder == "storage") {
      return build_storage_node(name, storage_params(params, name + ".params"), ctx.horizon);
    }
    if (builder == "ev_fleet") return build_fleet(name, params, ctx);
    if (builder == "tcl") {
      check_keys(params, {"rated_mw", "flexible_fraction", "marginal_cost", "regulation_share",
                         "energy_shifting"},
                 name + ".params");
      TclParams t;
      t.rated_mw = params.value("rated_mw", t.rated_mw);
      t.marginal_cost = params.value("marginal_cost", t.marginal_cost);
      t.regulation_share = params.value("regulation_share", t.regulation_share);
      t.energy_shifting = params.value("energy_shifting", t.energy_shifting);
      if (params.contains("flexible_fraction")) {
        t.flexible_fraction =
            parse_profile(params["flexible_fraction"], ctx.horizon, name + ".flexible_fraction");
      }
      return build_tcl_node(name, t, ctx.horizon);
    }
    invalid(fmt::format("node '{}': unknown builder '{}'", name, builder));
  }

  if (j.contains("children")) {
    check_keys(j, {"name", "children", "public_constraints", "declared_capacities"}, name);
    std::vector<MarketNode> children;
    for (const auto& c : j.at("children")) children.push_back(parse_node(c, ctx));
    MarketNode node = MarketNode::group(
        name, std::move(children),
        parse_constraints(j.value("public_constraints", json()), name + ".public_constraints"));
    if (j.contains("declared_capacities")) {
      node.aggregator().declared_capacities =
          parse_service_map(j["declared_capacities"], name + ".declared_capacities");
    }
    return node;
  }

  check_keys(j, {"name", "costs", "capacities", "lower_bounds", "aux", "private_constraints"}, name);
  ResourceSpec spec;
  spec.capacities = parse_service_map(j.value("capacities", json::object()), name + ".capacities");
  spec.costs = parse_service_map(j.value("costs", json::object()), name + ".costs");
  spec.lower_bounds =
      parse_service_map(j.value("lower_bounds", json::object()), name + ".lower_bounds");
  for (const auto& a : j.value("aux", json::array())) {
    check_keys(a, {"name", "lo", "hi", "cost"}, name + ".aux");
    AuxVariable v;
    v.name = a.at("name").get<std::string>();
    v.lo = a.value("lo", 0.0);
    v.hi = a.contains("hi") && !a["hi"].is_null() ? a["hi"].get<double>() : kInf;
    v.cost = a.value("cost", 0.0);
    spec.auxiliaries.push_back(std::move(v));
  }
  spec.private_constraints =
      parse_constraints(j.value("private_constraints", json()), name + ".private_constraints");
  return MarketNode::leaf(name, std::move(spec));
}

int horizon_of(const std::vector<ServiceIndex>& services) {
  int h = 0;
  for (const auto& s : services) h = std::max(h, s.hour + 1);
  return std::max(h, 1);
}

json service_map_json(const ServiceMap& m) {
  json out = json::object();
  for (const auto& [k, v] : m) out[k] = v;
  return out;
}

json constraint_json(const LinearConstraint& c) {
  json terms = json::array();
  for (const auto& t : c.terms) {
    json term{{"var", t.ref.var}, {"coef", t.coef}};
    if (!t.ref.node.empty()) term["node"] = t.ref.node;
    terms.push_back(std::move(term));
  }
  return json{{"terms", std::move(terms)},
              {"sense", std::string(to_string(c.sense))},
              {"rhs", c.rhs},
              {"label", c.label}};
}

json node_json(const MarketNode& node) {
  json out{{"name", node.name}};
  if (node.is_leaf()) {
    const auto& spec = node.resource();
    out["costs"] = service_map_json(spec.costs);
    out["capacities"] = service_map_json(spec.capacities);
    out["lower_bounds"] = service_map_json(spec.lower_bounds);
    json aux = json::array();
    for (const auto& a : spec.auxiliaries) {
      json v{{"name", a.name}, {"lo", a.lo}, {"cost", a.cost}};
      v["hi"] = std::isfinite(a.hi) ? json(a.hi) : json(nullptr);
      aux.push_back(std::move(v));
    }
    out["aux"] = std::move(aux);
    json cons = json::array();
    for (const auto& c : spec.private_constraints) cons.push_back(constraint_json(c));
    out["private_constraints"] = std::move(cons);
    return out;
  }
  const auto& agg = node.aggregator();
  json children = json::array();
  for (const auto& c : agg.children) children.push_back(node_json(c));
  out["children"] = std::move(children);
  json cons = json::array();
  for (const auto& c : agg.public_constraints) cons.push_back(constraint_json(c));
  out["public_constraints"] = std::move(cons);
  if (agg.declared_capacities) out["declared_capacities"] = service_map_json(*agg.declared_capacities);
  return out;
}

}  // namespace

std::string_view to_string(FleetMode mode) {
  return mode == FleetMode::Aggregate ? "aggregate" : "individual";
}

std::vector<double> GridSpec::values() const { return factor_range(lo, hi, step); }

GridSpec parse_grid(std::string_view text) {
  GridSpec g;
  double* slots[3] = {&g.lo, &g.hi, &g.step};
  std::size_t start = 0;
  for (int k = 0; k < 3; ++k) {
    const auto end = k < 2 ? text.find(':', start) : text.size();
    if (end == std::string_view::npos) {
      throw Error(ErrorCode::Usage, fmt::format("grid '{}' is not lo:hi:step", text));
    }
    const auto part = text.substr(start, end - start);
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), *slots[k]);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size()) {
      throw Error(ErrorCode::Usage, fmt::format("grid '{}' is not lo:hi:step", text));
    }
    start = end + 1;
  }
  if (!(g.step > 0.0) || !(g.lo > 0.0) || g.hi < g.lo) {
    throw Error(ErrorCode::Usage, fmt::format("grid '{}' needs 0 < lo <= hi and step > 0", text));
  }
  return g;
}

ScenarioConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  try {
    check_keys(doc, {"schema_version", "seed", "services", "tree", "demand", "prices", "experiments"},
               "config");
    ScenarioConfig c;
    c.base_dir = base_dir;
    if (!doc.contains("schema_version")) invalid("schema_version is required");
    c.schema_version = doc["schema_version"].get<int>();
    if (c.schema_version != kSchemaVersion) {
      invalid(fmt::format("schema_version {} is not supported (expected {})", c.schema_version,
                          kSchemaVersion));
    }
    if (!doc.contains("seed")) invalid("seed is required");
    c.seed = doc["seed"].get<std::uint64_t>();
    if (!doc.contains("services") || !doc.contains("tree")) invalid("services and tree are required");
    c.services = doc["services"];
    c.tree = doc["tree"];
    if (doc.contains("demand")) c.demand = parse_service_map(doc["demand"], "demand");
    if (doc.contains("prices")) {
      const json& p = doc["prices"];
      check_keys(p, {"file", "top"}, "prices");
      if (p.contains("file") == p.contains("top")) invalid("prices needs exactly one of file, top");
      if (p.contains("file")) c.price_file = p["file"].get<std::string>();
      if (p.contains("top")) c.top_prices = parse_service_map(p["top"], "prices.top");
    }

    const json ex = doc.value("experiments", json::object());
    check_keys(ex, {"clear", "allocate", "sweep", "verify", "casestudy"}, "experiments");
    if (ex.contains("clear")) {
      check_keys(ex["clear"], {"mode", "fleet"}, "experiments.clear");
      ClearBlock b;
      if (ex["clear"].contains("mode")) b.mode = parse_clearing_mode(ex["clear"]["mode"].get<std::string>());
      if (ex["clear"].contains("fleet")) b.fleet = parse_fleet_mode(ex["clear"]["fleet"]);
      c.clear = b;
    }
    if (ex.contains("allocate")) {
      const json& a = ex["allocate"];
      check_keys(a, {"mechanisms", "fleet"}, "experiments.allocate");
      AllocateBlock b;
      if (a.contains("mechanisms")) {
        b.mechanisms.clear();
        for (const auto& m : a["mechanisms"]) b.mechanisms.push_back(parse_mechanism(m.get<std::string>()));
      }
      if (a.contains("fleet")) b.fleet = parse_fleet_mode(a["fleet"]);
      c.allocate = b;
    }
    if (ex.contains("sweep")) {
      const json& s = ex["sweep"];
      check_keys(s, {"target", "grid", "cost_grid", "cap_grid", "fleet"}, "experiments.sweep");
      SweepBlock b;
      b.target = s.value("target", std::string{});
      const GridSpec both = parse_grid_json(s.value("grid", json()), GridSpec{}, "sweep.grid");
      b.cost = parse_grid_json(s.value("cost_grid", json()), both, "sweep.cost_grid");
      b.cap = parse_grid_json(s.value("cap_grid", json()), both, "sweep.cap_grid");
      if (s.contains("fleet")) b.fleet = parse_fleet_mode(s["fleet"]);
      c.sweep = b;
    }
    if (ex.contains("verify")) {
      const json& v = ex["verify"];
      check_keys(v, {"fleet", "ic_grid", "assumption1_samples", "assumption2_points",
                     "assumption2_splits"},
                 "experiments.verify");
      VerifyBlock b;
      if (v.contains("fleet")) b.fleet = parse_fleet_mode(v["fleet"]);
      b.ic_grid = parse_grid_json(v.value("ic_grid", json()), b.ic_grid, "verify.ic_grid");
      b.assumption1_samples = v.value("assumption1_samples", b.assumption1_samples);
      b.assumption2_points = v.value("assumption2_points", b.assumption2_points);
      b.assumption2_splits = v.value("assumption2_splits", b.assumption2_splits);
      c.verify = b;
    }
    if (ex.contains("casestudy")) {
      check_keys(ex["casestudy"], {}, "experiments.casestudy");
      c.casestudy = true;
    }
    return c;
  } catch (const json::exception& e) {
    invalid(e.what());
  }
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) invalid(fmt::format("cannot read config '{}'", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    invalid(fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_config(doc, path.parent_path());
}

std::vector<ServiceIndex> config_services(const ScenarioConfig& config) {
  const json& s = config.services;
  try {
    if (s.is_object()) {
      check_keys(s, {"kinds", "horizon"}, "services");
      std::vector<ServiceKind> kinds;
      for (const auto& k : s.at("kinds")) kinds.push_back(parse_service_kind(k.get<std::string>()));
      return flatten_services(kinds, s.at("horizon").get<int>());
    }
    if (!s.is_array()) invalid("services must be an object or an array");
    std::vector<ServiceIndex> out;
    for (const auto& item : s) {
      if (item.is_string()) {
        const auto id = item.get<std::string>();
        out.push_back({id, id, ServiceKind::Other, 0});
        continue;
      }
      check_keys(item, {"id", "label", "kind", "hour"}, "services[]");
      ServiceIndex si;
      si.id = item.at("id").get<std::string>();
      si.label = item.value("label", si.id);
      si.kind = parse_service_kind(item.value("kind", std::string("other")));
      si.hour = item.value("hour", 0);
      if (si.hour < 0) invalid(fmt::format("service '{}' has a negative hour", si.id));
      out.push_back(std::move(si));
    }
    return out;
  } catch (const json::exception& e) {
    invalid(e.what());
  }
}

std::optional<PriceSeries> load_config_prices(const ScenarioConfig& config) {
  if (!config.price_file) return std::nullopt;
  std::filesystem::path p = *config.price_file;
  if (p.is_relative()) p = config.base_dir / p;
  return load_prices_csv(p);
}

MarketTree build_market_tree(const ScenarioConfig& config, FleetMode fleet) {
  auto services = config_services(config);
  BuildContext ctx{horizon_of(services), fleet};

  std::optional<ServiceMap> top = config.top_prices;
  if (auto prices = load_config_prices(config)) {
    if (prices->horizon != ctx.horizon) {
      invalid(fmt::format("price file covers {} hours, services cover {}", prices->horizon,
                          ctx.horizon));
    }
    ServiceMap all = prices->as_top_prices();
    top = ServiceMap{};
    for (const auto& s : services) {
      auto it = all.find(s.id);
      if (it == all.end()) invalid(fmt::format("price file has no price for '{}'", s.id));
      (*top)[s.id] = it->second;
    }
  }
  MarketNode root;
  try {
    root = parse_node(config.tree, ctx);
  } catch (const json::exception& e) {
    invalid(e.what());
  }
  return assemble_market_tree(std::move(services), std::move(root), config.demand, std::move(top));
}

json tree_to_json(const MarketTree& tree) {
  json services = json::array();
  for (const auto& s : tree.services) {
    services.push_back(json{{"id", s.id},
                            {"label", s.label},
                            {"kind", std::string(to_string(s.kind))},
                            {"hour", s.hour}});
  }
  json out{{"schema_version", kSchemaVersion},
           {"services", std::move(services)},
           {"tree", node_json(tree.root)},
           {"demand", service_map_json(tree.demand)}};
  if (tree.top_prices) out["prices"] = json{{"top", service_map_json(*tree.top_prices)}};
  return out;
}

}  // namespace tsm
