#include "tsm/report_io.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>

namespace tsm {

using nlohmann::json;

namespace {

/// JSON has no infinities; unclearable cells are written as null.
json number_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json map_json(const ServiceMap& m) {
  json out = json::object();
  for (const auto& [k, v] : m) out[k] = number_json(v);
  return out;
}

}  // namespace

std::string format_number(double v) {
  if (v == 0.0) return "0";  // folds -0
  return fmt::format("{:.12g}", v);
}

json outcome_to_json(const ClearingOutcome& o) {
  json levels = json::array();
  for (const auto& lv : o.per_level) {
    json awards = json::array();
    for (const auto& [key, q] : lv.awards) {
      awards.push_back({{"node", key.first}, {"service", key.second}, {"award", q}});
    }
    json prices = json::array();
    for (const auto& [key, p] : lv.prices) {
      auto d = lv.degenerate.find(key);
      prices.push_back({{"node", key.first},
                        {"service", key.second},
                        {"price", p},
                        {"degenerate", d != lv.degenerate.end() && d->second}});
    }
    levels.push_back({{"level", lv.level}, {"awards", std::move(awards)}, {"prices", std::move(prices)}});
  }
  json dispatch = json::array();
  for (const auto& [key, q] : o.leaf_dispatch) {
    dispatch.push_back({{"node", key.first}, {"service", key.second}, {"quantity", q}});
  }
  json out{{"mode", std::string(to_string(o.mode))},
           {"price_taking", o.price_taking},
           {"levels", o.levels},
           {"root", o.root},
           {"objective", o.objective},
           {"total_cost", o.total_cost},
           {"root_awards", map_json(o.root_awards)},
           {"top_prices", map_json(o.top_prices)},
           {"per_level", std::move(levels)},
           {"leaf_dispatch", std::move(dispatch)}};
  if (o.kkt) {
    out["kkt"] = {{"passed", o.kkt->passed},
                  {"stationarity", o.kkt->stationarity},
                  {"dual_sign", o.kkt->dual_sign},
                  {"complementarity", o.kkt->complementarity},
                  {"primal_feasibility", o.kkt->primal_feasibility}};
  }
  return out;
}

void write_outcome_csv(std::ostream& os, const ClearingOutcome& o) {
  os << "level,node,service,award,price,degenerate\n";
  for (const auto& [s, q] : o.root_awards) {
    os << fmt::format("{},{},{},{},{},{}\n", o.levels, o.root, s, format_number(q),
                      format_number(o.parent_price(o.root, s)), o.is_degenerate(o.root, s) ? 1 : 0);
  }
  for (const auto& lv : o.per_level) {
    for (const auto& [key, q] : lv.awards) {
      const auto& [node, s] = key;
      const std::string& parent = o.parent.at(node);
      os << fmt::format("{},{},{},{},{},{}\n", lv.level - 1, node, s, format_number(q),
                        format_number(o.price(parent, s)), o.is_degenerate(parent, s) ? 1 : 0);
    }
  }
}

void write_allocations_csv(std::ostream& os, const std::vector<AllocationReport>& reports) {
  os << "mechanism,resource,service,amount\n";
  for (const auto& r : reports) {
    const auto mech = to_string(r.mechanism);
    for (const auto& [leaf, v] : r.per_resource) {
      os << fmt::format("{},{},total,{}\n", mech, leaf, format_number(v));
    }
    for (const auto& [key, v] : r.by_service) {
      os << fmt::format("{},{},{},{}\n", mech, key.first, key.second, format_number(v));
    }
  }
}

json allocations_to_json(const std::vector<AllocationReport>& reports) {
  json out = json::array();
  for (const auto& r : reports) {
    json per = json::object();
    for (const auto& [leaf, v] : r.per_resource) per[leaf] = v;
    out.push_back({{"mechanism", std::string(to_string(r.mechanism))},
                   {"per_resource", std::move(per)},
                   {"total", r.total},
                   {"grand_value", r.grand_value},
                   {"coalition_evals", r.coalition_evals}});
  }
  return out;
}

void write_grid_csv(std::ostream& os, const MisreportGrid& grid) {
  os << "cost_factor,cap_factor,profit\n";
  for (std::size_t i = 0; i < grid.cost_factors.size(); ++i) {
    for (std::size_t j = 0; j < grid.cap_factors.size(); ++j) {
      os << fmt::format("{},{},{}\n", format_number(grid.cost_factors[i]),
                        format_number(grid.cap_factors[j]), format_number(grid.profit[i][j]));
    }
  }
}

json ic_to_json(const IcVerdict& v) {
  return {{"incentive_compatible", v.incentive_compatible},
          {"truthful", v.truthful},
          {"best", v.best},
          {"gain", v.gain},
          {"witness", {{"cost_factor", v.witness_cost_factor}, {"cap_factor", v.witness_cap_factor}}}};
}

json verify_to_json(const VerifySummary& summary) {
  json checks = json::array();
  for (const auto& c : summary.checks) {
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  return {{"all_passed", summary.all_passed()}, {"checks", std::move(checks)}};
}

json case_study_to_json(const CaseStudyReport& r) {
  json l1 = json::array();
  for (const auto& [pair, d] : r.l1) {
    l1.push_back({{"a", pair.first}, {"b", pair.second}, {"l1", d}});
  }
  json skipped = json::array();
  for (const auto& [node, s] : r.prices.skipped) skipped.push_back(node + "." + s);
  return {{"prices",
           {{"passed", r.prices.passed},
            {"compared", r.prices.compared},
            {"max_gap", r.prices.max_gap},
            {"skipped", std::move(skipped)}}},
          {"member_prices",
           {{"passed", r.member_prices.passed},
            {"max_gap", r.member_prices.max_gap},
            {"node", r.member_prices.node},
            {"service", r.member_prices.service}}},
          {"money_residual", r.money_residual},
          {"feasibility_residual", r.feasibility_residual},
          {"allocations", allocations_to_json(r.allocations)},
          {"l1", std::move(l1)},
          {"sweep_target", r.grid.target},
          {"ic", ic_to_json(r.ic)}};
}

}  // namespace tsm
