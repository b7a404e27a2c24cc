#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsm/allocation.hpp"
#include "tsm/clearing.hpp"
#include "tsm/model.hpp"
#include "tsm/scenario.hpp"

namespace tsm {

inline constexpr int kSchemaVersion = 1;

/// How an `ev_fleet` builder node is expanded: one aggregate leaf, or an
/// aggregator with one leaf per vehicle.
enum class FleetMode { Aggregate, Individual };

std::string_view to_string(FleetMode mode);

/// Inclusive factor grid lo, lo+step, ..., hi.
struct GridSpec {
  double lo = 0.9;
  double hi = 1.1;
  double step = 0.01;

  std::vector<double> values() const;
};

/// Parses "lo:hi:step". Throws Error(Usage).
GridSpec parse_grid(std::string_view text);

struct ClearBlock {
  ClearingMode mode = ClearingMode::Monolithic;
  FleetMode fleet = FleetMode::Aggregate;
};

struct AllocateBlock {
  std::vector<Mechanism> mechanisms{Mechanism::Marginal, Mechanism::Shapley,
                                    Mechanism::VcgMarginal};
  FleetMode fleet = FleetMode::Aggregate;
};

struct SweepBlock {
  std::string target;
  GridSpec cost;
  GridSpec cap;
  FleetMode fleet = FleetMode::Individual;
};

struct VerifyBlock {
  FleetMode fleet = FleetMode::Aggregate;
  /// Cost factors for the per-leaf truthfulness sweeps.
  GridSpec ic_grid{0.5, 1.5, 0.05};
  int assumption1_samples = 200;
  int assumption2_points = 20;
  int assumption2_splits = 10;
};

struct ScenarioConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  nlohmann::json services;
  nlohmann::json tree;
  ServiceMap demand;
  /// Resolved against `base_dir` when relative.
  std::optional<std::filesystem::path> price_file;
  std::optional<ServiceMap> top_prices;
  std::optional<ClearBlock> clear;
  std::optional<AllocateBlock> allocate;
  std::optional<SweepBlock> sweep;
  std::optional<VerifyBlock> verify;
  bool casestudy = false;
  std::filesystem::path base_dir;
};

/// Throws Error(InvalidConfig) on schema violations.
ScenarioConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Price series named by the config, if any.
std::optional<PriceSeries> load_config_prices(const ScenarioConfig& config);

std::vector<ServiceIndex> config_services(const ScenarioConfig& config);

/// Builds and validates the tree. Top prices come from the price file or the
/// inline table; without either the root meets `demand`.
MarketTree build_market_tree(const ScenarioConfig& config, FleetMode fleet = FleetMode::Aggregate);

/// Canonical JSON of a tree. Identical trees give identical text.
nlohmann::json tree_to_json(const MarketTree& tree);

}  // namespace tsm
