#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tsm/model.hpp"

namespace tsm {

/// Hourly prices for the three traded kinds: $/MWh for energy, $/MW-h for
/// the two capacity products. Negative energy prices are allowed.
struct PriceSeries {
  int horizon = 0;
  std::vector<double> energy;
  std::vector<double> regulation;
  std::vector<double> reserve;

  /// Keyed by service id ("energy@7", ...), ready to use as top prices.
  ServiceMap as_top_prices() const;
  /// Prices for one kind, or nullptr for ServiceKind::Other.
  const std::vector<double>* series(ServiceKind kind) const;
};

/// Header must be exactly `hour,energy,regulation,reserve`. Rows may come in
/// any order; hours must cover 0..H-1 exactly once.
/// Throws Error(MalformedRow), Error(MissingHour) or Error(DuplicateHour).
PriceSeries parse_prices_csv(std::istream& in);
PriceSeries load_prices_csv(const std::filesystem::path& path);
void write_prices_csv(std::ostream& os, const PriceSeries& prices);

/// Battery. Charging and discharging both lose `efficiency`, so a full
/// cycle returns efficiency^2 of the energy drawn.
struct StorageParams {
  double power_cap = 0.5;
  double energy_cap = 1.0;
  double efficiency = 1.0;
  double initial_soc = 0.5;
  /// Charged on discharged energy.
  double marginal_cost = 0.0;
  double regulation_cost = 0.0;
  double reserve_cost = 0.0;
};

struct EvFleetParams {
  int count = 30;
  double charger_kw = 7.68;
  bool bidirectional = true;
  /// Connected fraction per hour; empty means fully available.
  std::vector<double> availability;
  /// Cost of regulation capacity.
  double marginal_cost = 0.0;
};

/// Overrides for one vehicle when the fleet is split into individual leaves.
struct EvMemberOverride {
  std::optional<double> marginal_cost;
  std::optional<double> charger_kw;
  std::optional<std::vector<double>> availability;
};

struct TclParams {
  double rated_mw = 1.0;
  /// Flexible share of rated power per hour; empty means 1 everywhere.
  std::vector<double> flexible_fraction;
  /// Cost of regulation and reserve capacity.
  double marginal_cost = 0.0;
  /// Share of the flexible capacity that can follow a regulation signal.
  double regulation_share = 1.0;
  /// Adds energy variables with a daily energy-neutrality equality.
  bool energy_shifting = false;
};

/// Leaf with energy (signed, via a charge/discharge split), regulation and
/// reserve for each hour, plus SoC state. Throws Error(InvalidParams).
MarketNode build_storage_node(const std::string& name, const StorageParams& params, int horizon);

/// Leaf with energy and regulation per hour bounded by the connected power
/// count * charger_kw * availability / 1000 MW. Energy is signed (positive is
/// discharge to the grid) and must net to a charge over the day; a
/// unidirectional fleet can only charge. Throws Error(InvalidParams).
MarketNode build_ev_fleet_node(const std::string& name, const EvFleetParams& params, int horizon);

/// One leaf per vehicle, named `prefix`1 .. `prefix`count, each a fleet of one.
/// `overrides[i]` applies to vehicle i+1.
std::vector<MarketNode> build_ev_members(const std::string& prefix, const EvFleetParams& params,
                                         int horizon,
                                         const std::vector<EvMemberOverride>& overrides = {});

/// Aggregate leaf equivalent in capacity to the individual members: the
/// availability is the mean over vehicles of connected power share.
EvFleetParams aggregate_fleet(const EvFleetParams& params, int horizon,
                              const std::vector<EvMemberOverride>& overrides);

/// Leaf offering regulation and reserve up to rated_mw * flexible_fraction
/// each hour, with optional energy shifting. Throws Error(InvalidParams).
MarketNode build_tcl_node(const std::string& name, const TclParams& params, int horizon);

}  // namespace tsm
