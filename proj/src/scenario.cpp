#include "tsm/scenario.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "tsm/error.hpp"

namespace tsm {

namespace {

constexpr std::string_view kPriceHeader = "hour,energy,regulation,reserve";

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidParams, what);
}

void check_fractions(const std::vector<double>& values, int horizon, const char* what) {
  if (values.empty()) return;
  require(static_cast<int>(values.size()) == horizon,
          fmt::format("{} has {} entries, horizon is {}", what, values.size(), horizon));
  for (double v : values) {
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0,
            fmt::format("{} entries must lie in [0, 1], got {}", what, v));
  }
}

double fraction_at(const std::vector<double>& values, int h) {
  return values.empty() ? 1.0 : values[static_cast<std::size_t>(h)];
}

LinearConstraint row(std::vector<Term> terms, Sense sense, double rhs, std::string label) {
  return LinearConstraint{std::move(terms), sense, rhs, std::move(label)};
}

}  // namespace

ServiceMap PriceSeries::as_top_prices() const {
  ServiceMap out;
  for (int h = 0; h < horizon; ++h) {
    const auto i = static_cast<std::size_t>(h);
    out[service_id(ServiceKind::Energy, h)] = energy[i];
    out[service_id(ServiceKind::Regulation, h)] = regulation[i];
    out[service_id(ServiceKind::Reserve, h)] = reserve[i];
  }
  return out;
}

const std::vector<double>* PriceSeries::series(ServiceKind kind) const {
  switch (kind) {
    case ServiceKind::Energy: return &energy;
    case ServiceKind::Regulation: return &regulation;
    case ServiceKind::Reserve: return &reserve;
    case ServiceKind::Other: return nullptr;
  }
  return nullptr;
}

PriceSeries parse_prices_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kPriceHeader) {
    throw Error(ErrorCode::MalformedRow,
                fmt::format("expected header '{}', got '{}'", kPriceHeader, line));
  }
  std::map<int, std::array<double, 3>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_commas(line);
    if (fields.size() != 4) {
      throw Error(ErrorCode::MalformedRow,
                  fmt::format("line {}: expected 4 fields, got {}", line_no, fields.size()));
    }
    int hour = 0;
    if (!parse_number(fields[0], hour) || hour < 0) {
      throw Error(ErrorCode::MalformedRow, fmt::format("line {}: bad hour '{}'", line_no, fields[0]));
    }
    std::array<double, 3> values{};
    for (std::size_t k = 0; k < 3; ++k) {
      if (!parse_number(fields[k + 1], values[k]) || !std::isfinite(values[k])) {
        throw Error(ErrorCode::MalformedRow,
                    fmt::format("line {}: bad price '{}'", line_no, fields[k + 1]));
      }
    }
    if (!rows.emplace(hour, values).second) {
      throw Error(ErrorCode::DuplicateHour, fmt::format("hour {} appears twice", hour));
    }
  }
  if (rows.empty()) throw Error(ErrorCode::MissingHour, "price file has no rows");

  PriceSeries out;
  out.horizon = rows.rbegin()->first + 1;
  for (int h = 0; h < out.horizon; ++h) {
    auto it = rows.find(h);
    if (it == rows.end()) throw Error(ErrorCode::MissingHour, fmt::format("hour {} is missing", h));
    out.energy.push_back(it->second[0]);
    out.regulation.push_back(it->second[1]);
    out.reserve.push_back(it->second[2]);
  }
  return out;
}

PriceSeries load_prices_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MalformedRow, fmt::format("cannot read '{}'", path.string()));
  return parse_prices_csv(in);
}

void write_prices_csv(std::ostream& os, const PriceSeries& prices) {
  os << kPriceHeader << '\n';
  for (int h = 0; h < prices.horizon; ++h) {
    const auto i = static_cast<std::size_t>(h);
    os << fmt::format("{},{},{},{}\n", h, prices.energy[i], prices.regulation[i], prices.reserve[i]);
  }
}

MarketNode build_storage_node(const std::string& name, const StorageParams& p, int horizon) {
  require(horizon >= 1, "storage horizon must be >= 1");
  require(std::isfinite(p.power_cap) && p.power_cap > 0.0, "storage power_cap must be > 0");
  require(std::isfinite(p.energy_cap) && p.energy_cap > 0.0, "storage energy_cap must be > 0");
  require(p.efficiency > 0.0 && p.efficiency <= 1.0, "storage efficiency must lie in (0, 1]");
  require(p.initial_soc >= 0.0 && p.initial_soc <= p.energy_cap,
          "storage initial_soc must lie in [0, energy_cap]");
  require(std::isfinite(p.marginal_cost) && std::isfinite(p.regulation_cost) &&
              std::isfinite(p.reserve_cost),
          "storage costs must be finite");

  const double eta = p.efficiency;
  ResourceSpec spec;
  auto& cons = spec.private_constraints;
  for (int h = 0; h < horizon; ++h) {
    const std::string e = service_id(ServiceKind::Energy, h);
    const std::string r = service_id(ServiceKind::Regulation, h);
    const std::string q = service_id(ServiceKind::Reserve, h);
    const std::string ch = fmt::format("charge@{}", h);
    const std::string dis = fmt::format("discharge@{}", h);
    const std::string soc = fmt::format("soc@{}", h);

    spec.capacities[e] = p.power_cap;
    spec.lower_bounds[e] = -p.power_cap;
    spec.capacities[r] = p.power_cap;
    spec.capacities[q] = p.power_cap;
    spec.costs[r] = p.regulation_cost;
    spec.costs[q] = p.reserve_cost;
    spec.auxiliaries.push_back({ch, 0.0, p.power_cap, 0.0});
    spec.auxiliaries.push_back({dis, 0.0, p.power_cap, p.marginal_cost});
    spec.auxiliaries.push_back({soc, 0.0, p.energy_cap, 0.0});

    cons.push_back(row({{{name, e}, 1.0}, {{name, dis}, -1.0}, {{name, ch}, 1.0}}, Sense::Equal,
                       0.0, fmt::format("net@{}", h)));
    cons.push_back(row({{{name, e}, 1.0}, {{name, r}, 1.0}, {{name, q}, 1.0}}, Sense::LessEqual,
                       p.power_cap, fmt::format("power_up@{}", h)));
    cons.push_back(row({{{name, e}, -1.0}, {{name, r}, 1.0}, {{name, q}, 1.0}}, Sense::LessEqual,
                       p.power_cap, fmt::format("power_down@{}", h)));

    std::vector<Term> balance{{{name, soc}, 1.0}, {{name, ch}, -eta}, {{name, dis}, 1.0 / eta}};
    double rhs = p.initial_soc;
    if (h > 0) {
      balance.push_back({{name, fmt::format("soc@{}", h - 1)}, -1.0});
      rhs = 0.0;
    }
    cons.push_back(row(std::move(balance), Sense::Equal, rhs, fmt::format("soc_balance@{}", h)));
    // A reserve award must be deliverable for one hour from stored energy.
    cons.push_back(row({{{name, q}, 1.0}, {{name, soc}, -1.0}}, Sense::LessEqual, 0.0,
                       fmt::format("reserve_energy@{}", h)));
  }
  cons.push_back(row({{{name, fmt::format("soc@{}", horizon - 1)}, 1.0}}, Sense::GreaterEqual,
                     p.initial_soc, "terminal_soc"));
  return MarketNode::leaf(name, std::move(spec));
}

MarketNode build_ev_fleet_node(const std::string& name, const EvFleetParams& p, int horizon) {
  require(horizon >= 1, "fleet horizon must be >= 1");
  require(p.count >= 1, fmt::format("fleet count must be >= 1, got {}", p.count));
  require(std::isfinite(p.charger_kw) && p.charger_kw > 0.0, "charger_kw must be > 0");
  require(std::isfinite(p.marginal_cost), "fleet marginal_cost must be finite");
  check_fractions(p.availability, horizon, "availability");

  ResourceSpec spec;
  LinearConstraint net;
  net.sense = Sense::LessEqual;
  net.label = "daily_net_charge";
  for (int h = 0; h < horizon; ++h) {
    const double power = p.count * p.charger_kw * fraction_at(p.availability, h) / 1000.0;
    const std::string e = service_id(ServiceKind::Energy, h);
    const std::string r = service_id(ServiceKind::Regulation, h);
    spec.capacities[e] = p.bidirectional ? power : 0.0;
    spec.lower_bounds[e] = -power;
    spec.capacities[r] = power;
    spec.costs[r] = p.marginal_cost;
    if (power > 0.0) net.terms.push_back({{name, e}, 1.0});
  }
  // Discharge has to be paid back within the day; without this the battery
  // would sell energy it never bought.
  if (p.bidirectional && !net.terms.empty()) spec.private_constraints.push_back(std::move(net));
  return MarketNode::leaf(name, std::move(spec));
}

std::vector<MarketNode> build_ev_members(const std::string& prefix, const EvFleetParams& params,
                                         int horizon,
                                         const std::vector<EvMemberOverride>& overrides) {
  require(params.count >= 1, "fleet count must be >= 1");
  require(static_cast<int>(overrides.size()) <= params.count,
          fmt::format("{} member overrides for a fleet of {}", overrides.size(), params.count));
  std::vector<MarketNode> out;
  out.reserve(static_cast<std::size_t>(params.count));
  for (int i = 0; i < params.count; ++i) {
    EvFleetParams one = params;
    one.count = 1;
    if (static_cast<std::size_t>(i) < overrides.size()) {
      const auto& o = overrides[static_cast<std::size_t>(i)];
      if (o.marginal_cost) one.marginal_cost = *o.marginal_cost;
      if (o.charger_kw) one.charger_kw = *o.charger_kw;
      if (o.availability) one.availability = *o.availability;
    }
    out.push_back(build_ev_fleet_node(fmt::format("{}{}", prefix, i + 1), one, horizon));
  }
  return out;
}

EvFleetParams aggregate_fleet(const EvFleetParams& params, int horizon,
                              const std::vector<EvMemberOverride>& overrides) {
  require(horizon >= 1, "fleet horizon must be >= 1");
  require(params.count >= 1, "fleet count must be >= 1");
  check_fractions(params.availability, horizon, "availability");
  if (overrides.empty()) return params;

  EvFleetParams out = params;
  out.availability.assign(static_cast<std::size_t>(horizon), 0.0);
  const double fleet_kw = params.count * params.charger_kw;
  for (int i = 0; i < params.count; ++i) {
    double kw = params.charger_kw;
    const std::vector<double>* avail = &params.availability;
    if (static_cast<std::size_t>(i) < overrides.size()) {
      const auto& o = overrides[static_cast<std::size_t>(i)];
      if (o.charger_kw) kw = *o.charger_kw;
      if (o.availability) {
        check_fractions(*o.availability, horizon, "member availability");
        avail = &*o.availability;
      }
    }
    for (int h = 0; h < horizon; ++h) {
      out.availability[static_cast<std::size_t>(h)] += kw * fraction_at(*avail, h) / fleet_kw;
    }
  }
  return out;
}

MarketNode build_tcl_node(const std::string& name, const TclParams& p, int horizon) {
  require(horizon >= 1, "TCL horizon must be >= 1");
  require(std::isfinite(p.rated_mw) && p.rated_mw > 0.0, "TCL rated_mw must be > 0");
  require(std::isfinite(p.marginal_cost), "TCL marginal_cost must be finite");
  check_fractions(p.flexible_fraction, horizon, "flexible_fraction");
  require(p.regulation_share >= 0.0 && p.regulation_share <= 1.0,
          "TCL regulation_share must lie in [0, 1]");

  ResourceSpec spec;
  LinearConstraint neutral;
  neutral.sense = Sense::Equal;
  neutral.label = "energy_neutral";
  for (int h = 0; h < horizon; ++h) {
    const double cap = p.rated_mw * fraction_at(p.flexible_fraction, h);
    const std::string r = service_id(ServiceKind::Regulation, h);
    const std::string q = service_id(ServiceKind::Reserve, h);
    spec.capacities[r] = cap * p.regulation_share;
    spec.capacities[q] = cap;
    spec.costs[r] = p.marginal_cost;
    spec.costs[q] = p.marginal_cost;
    if (cap <= 0.0) continue;
    if (p.energy_shifting) {
      const std::string e = service_id(ServiceKind::Energy, h);
      spec.capacities[e] = cap;
      spec.lower_bounds[e] = -cap;
      neutral.terms.push_back({{name, e}, 1.0});
      spec.private_constraints.push_back(row(
          {{{name, e}, 1.0}, {{name, r}, 1.0}, {{name, q}, 1.0}}, Sense::LessEqual, cap,
          fmt::format("flex_up@{}", h)));
      spec.private_constraints.push_back(row(
          {{{name, e}, -1.0}, {{name, r}, 1.0}, {{name, q}, 1.0}}, Sense::LessEqual, cap,
          fmt::format("flex_down@{}", h)));
    } else {
      spec.private_constraints.push_back(row({{{name, r}, 1.0}, {{name, q}, 1.0}},
                                             Sense::LessEqual, cap, fmt::format("flex@{}", h)));
    }
  }
  if (!neutral.terms.empty()) spec.private_constraints.push_back(std::move(neutral));
  return MarketNode::leaf(name, std::move(spec));
}

}  // namespace tsm
