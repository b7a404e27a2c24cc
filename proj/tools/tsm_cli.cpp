// Batch driver for the hierarchical market engine. Each subcommand reads a
// scenario config and writes its artifacts into the working directory.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tsm/allocation.hpp"
#include "tsm/analysis.hpp"
#include "tsm/clearing.hpp"
#include "tsm/config.hpp"
#include "tsm/error.hpp"
#include "tsm/experiments.hpp"
#include "tsm/report_io.hpp"
#include "tsm/settlement.hpp"

namespace fs = std::filesystem;
using namespace tsm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::string config;
  std::string workdir = ".";
  bool strict = false;
  bool serial = false;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("tsm");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("TSM_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

fs::path in_workdir(const Common& c, const fs::path& p) {
  return p.is_absolute() ? p : fs::path(c.workdir) / p;
}

/// Output path inside the workdir, creating the directory on first use.
fs::path output_path(const Common& c, const std::string& name) {
  const fs::path path = in_workdir(c, name);
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  return path;
}

void write_file(const Common& c, const std::string& name, const std::string& text) {
  const fs::path path = output_path(c, name);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Usage, fmt::format("cannot write '{}'", path.string()));
  out << text;
  spdlog::info("wrote {}", path.string());
}

void write_json(const Common& c, const std::string& name, const nlohmann::json& j) {
  write_file(c, name, j.dump(2) + "\n");
}

template <typename F>
std::string to_text(F&& writer) {
  std::ostringstream os;
  writer(os);
  return os.str();
}

Execution exec_of(const Common& c) { return c.serial ? Execution::Serial : Execution::Parallel; }

ScenarioConfig read_config(const Common& c) {
  if (c.config.empty()) throw Error(ErrorCode::Usage, "--config is required");
  return load_config(in_workdir(c, c.config));
}

void write_clearing(const Common& c, const ClearingOutcome& outcome) {
  const auto records = settle(outcome);
  write_json(c, "outcome.json", outcome_to_json(outcome));
  write_file(c, "outcome.csv", to_text([&](std::ostream& os) { write_outcome_csv(os, outcome); }));
  write_file(c, "settlement.csv",
             to_text([&](std::ostream& os) { write_settlement_csv(os, records); }));
}

int cmd_clear(const Common& c, const std::string& mode_text, bool lp_trace) {
  const auto config = read_config(c);
  ClearBlock block = config.clear.value_or(ClearBlock{});
  if (!mode_text.empty()) block.mode = parse_clearing_mode(mode_text);
  const MarketTree tree = build_market_tree(config, block.fleet);

  ClearingOptions options;
  std::ofstream trace;
  if (lp_trace) {
    trace.open(output_path(c, "lp_trace.txt"), std::ios::binary);
    options.lp.trace = &trace;
  }
  const auto outcome = clear(tree, block.mode, options);
  write_clearing(c, outcome);
  fmt::print("{} clearing: objective {}, {} level(s)\n", to_string(block.mode),
             format_number(outcome.objective), outcome.levels);
  if (outcome.kkt && !outcome.kkt->passed) {
    fmt::print("KKT check FAILED (stationarity {:.3g})\n", outcome.kkt->stationarity);
    if (c.strict) return kExitDomain;
  }
  return kExitOk;
}

std::vector<Mechanism> parse_mechanism_list(const std::string& text) {
  std::vector<Mechanism> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_mechanism(item));
  }
  if (out.empty()) throw Error(ErrorCode::Usage, "--mechanisms lists no mechanism");
  return out;
}

int cmd_allocate(const Common& c, const std::string& mechanisms) {
  const auto config = read_config(c);
  AllocateBlock block = config.allocate.value_or(AllocateBlock{});
  if (!mechanisms.empty()) block.mechanisms = parse_mechanism_list(mechanisms);
  const MarketTree tree = build_market_tree(config, block.fleet);

  // Without exogenous prices, coalitions are valued at the cleared prices.
  const ClearingOutcome outcome = clear_monolithic(tree);
  const ServiceMap prices = tree.top_prices.value_or(outcome.top_prices);
  std::vector<AllocationReport> reports;
  for (Mechanism m : block.mechanisms) {
    switch (m) {
      case Mechanism::Marginal:
        reports.push_back(allocate_marginal(outcome, settle(outcome)));
        break;
      case Mechanism::Shapley:
        reports.push_back(allocate_shapley(tree, prices, exec_of(c)));
        break;
      case Mechanism::VcgMarginal:
        reports.push_back(allocate_vcg_marginal(tree, prices, exec_of(c)));
        break;
    }
  }
  write_file(c, "allocations.csv",
             to_text([&](std::ostream& os) { write_allocations_csv(os, reports); }));

  nlohmann::json distances = nlohmann::json::array();
  std::string l1_csv = "mechanism_a,mechanism_b,l1\n";
  for (std::size_t a = 0; a < reports.size(); ++a) {
    for (std::size_t b = a + 1; b < reports.size(); ++b) {
      const double d = l1_distance(reports[a], reports[b]);
      const auto na = std::string(to_string(reports[a].mechanism));
      const auto nb = std::string(to_string(reports[b].mechanism));
      distances.push_back({{"a", na}, {"b", nb}, {"l1", d}});
      l1_csv += fmt::format("{},{},{}\n", na, nb, format_number(d));
      fmt::print("L1({}, {}) = {}\n", na, nb, format_number(d));
    }
  }
  write_json(c, "allocations.json", {{"reports", allocations_to_json(reports)}, {"l1", distances}});
  write_file(c, "l1.csv", l1_csv);
  for (const auto& r : reports) {
    fmt::print("{}: total {}\n", to_string(r.mechanism), format_number(r.total));
  }
  return kExitOk;
}

int report_ic(const Common& c, const MisreportGrid& grid) {
  const auto ic = check_ic(grid);
  write_file(c, "grid.csv", to_text([&](std::ostream& os) { write_grid_csv(os, grid); }));
  write_json(c, "ic.json", ic_to_json(ic));
  if (ic.incentive_compatible) {
    fmt::print("IC: truthful profit {} is the grid maximum\n", format_number(ic.truthful));
    return kExitOk;
  }
  fmt::print("NotIC: {} earns {} at cost x{} / capacity x{} (truthful {}, gain {})\n", grid.target,
             format_number(ic.best), format_number(ic.witness_cost_factor),
             format_number(ic.witness_cap_factor), format_number(ic.truthful),
             format_number(ic.gain));
  return c.strict ? kExitDomain : kExitOk;
}

std::vector<double> checked_factors(const GridSpec& g) {
  auto values = g.values();
  if (std::find(values.begin(), values.end(), 1.0) == values.end()) {
    throw Error(ErrorCode::Usage, "the factor grid must contain 1.0 (truthful report)");
  }
  return values;
}

int cmd_sweep(const Common& c, const std::string& target, const std::string& grid_text) {
  const auto config = read_config(c);
  SweepBlock block = config.sweep.value_or(SweepBlock{});
  if (!target.empty()) block.target = target;
  if (!grid_text.empty()) block.cost = block.cap = parse_grid(grid_text);
  if (block.target.empty()) throw Error(ErrorCode::Usage, "no sweep target given");
  const auto cost = checked_factors(block.cost);
  const auto cap = checked_factors(block.cap);
  const MarketTree tree = build_market_tree(config, block.fleet);
  return report_ic(c, misreport_sweep(tree, block.target, cost, cap, exec_of(c)));
}

int cmd_verify(const Common& c) {
  const auto config = read_config(c);
  const VerifyBlock block = config.verify.value_or(VerifyBlock{});
  const MarketTree tree = build_market_tree(config, block.fleet);
  const auto summary = run_verify(tree, block, config.seed, exec_of(c));
  write_json(c, "verify.json", verify_to_json(summary));
  for (const auto& check : summary.checks) {
    fmt::print("{} {}: {}\n", check.passed ? "PASS" : "FAIL", check.name, check.detail);
  }
  return summary.all_passed() || !c.strict ? kExitOk : kExitDomain;
}

int cmd_casestudy(const Common& c) {
  const auto config = read_config(c);
  const auto report = run_case_study(config, exec_of(c));
  write_clearing(c, report.outcome);
  write_file(c, "allocations.csv",
             to_text([&](std::ostream& os) { write_allocations_csv(os, report.allocations); }));
  write_json(c, "casestudy.json", case_study_to_json(report));
  spdlog::info("clear {:.2f}s, allocate {:.2f}s, sweep {:.2f}s, total {:.2f}s",
               report.timings.clear_s, report.timings.allocate_s, report.timings.sweep_s,
               report.timings.total_s);

  fmt::print("internal vs top prices: {} ({} compared, {} degenerate skipped, max gap {:.3g})\n",
             report.prices.passed ? "equal" : "DIFFERENT", report.prices.compared,
             report.prices.skipped.size(), report.prices.max_gap);
  fmt::print("money conservation residual {:.3g}\n", report.money_residual);
  for (const auto& [pair, d] : report.l1) {
    fmt::print("L1({}, {}) = {}\n", pair.first, pair.second, format_number(d));
  }
  const int ic_exit = report_ic(c, report.grid);
  const bool ok = report.prices.passed && report.money_residual <= 1e-6;
  if (!ok && c.strict) return kExitDomain;
  return ic_exit;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Hierarchical market clearing, settlement and mechanism checks"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Scenario JSON (relative to --workdir)")->required();
    sub->add_option("--workdir", common.workdir, "Directory for inputs and outputs");
    sub->add_flag("--strict", common.strict, "Exit 1 when a verification fails");
    sub->add_flag("--serial", common.serial, "Run kernels on one thread");
  };

  std::string mode, mechanisms, target, grid;
  bool lp_trace = false;
  auto* clear_cmd = app.add_subcommand("clear", "Clear the market and settle");
  add_common(clear_cmd);
  clear_cmd->add_option("--mode", mode, "monolithic | sequential | flat");
  clear_cmd->add_flag("--lp-trace", lp_trace, "Write simplex iterations to lp_trace.txt");

  auto* alloc_cmd = app.add_subcommand("allocate", "Profit allocation reports");
  add_common(alloc_cmd);
  alloc_cmd->add_option("--mechanisms", mechanisms, "Comma list of marginal,shapley,vcg_marginal");

  auto* sweep_cmd = app.add_subcommand("sweep", "Misreport grid for one leaf");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--target", target, "Leaf to misreport");
  sweep_cmd->add_option("--grid", grid, "Factor grid lo:hi:step for both axes");

  auto* verify_cmd = app.add_subcommand("verify", "Check optimality, prices and assumptions");
  add_common(verify_cmd);

  auto* case_cmd = app.add_subcommand("casestudy", "Full case study run");
  add_common(case_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*clear_cmd) return cmd_clear(common, mode, lp_trace);
    if (*alloc_cmd) return cmd_allocate(common, mechanisms);
    if (*sweep_cmd) return cmd_sweep(common, target, grid);
    if (*verify_cmd) return cmd_verify(common);
    if (*case_cmd) return cmd_casestudy(common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    const bool usage = e.code() == ErrorCode::Usage || e.code() == ErrorCode::InvalidConfig;
    return usage ? kExitUsage : kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}
