#pragma once

#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "tsm/allocation.hpp"
#include "tsm/analysis.hpp"
#include "tsm/clearing.hpp"
#include "tsm/experiments.hpp"

namespace tsm {

/// Every output file formats numbers the same way so reruns compare equal.
std::string format_number(double v);

nlohmann::json outcome_to_json(const ClearingOutcome& outcome);

/// Long format, one row per (node, service): the node's award and the price
/// it is paid for it. Header `level,node,service,award,price,degenerate`.
void write_outcome_csv(std::ostream& os, const ClearingOutcome& outcome);

/// Header `mechanism,resource,service,amount`; per-resource totals use the
/// service "total".
void write_allocations_csv(std::ostream& os, const std::vector<AllocationReport>& reports);
nlohmann::json allocations_to_json(const std::vector<AllocationReport>& reports);

/// Header `cost_factor,cap_factor,profit`.
void write_grid_csv(std::ostream& os, const MisreportGrid& grid);
nlohmann::json ic_to_json(const IcVerdict& verdict);

nlohmann::json verify_to_json(const VerifySummary& summary);
nlohmann::json case_study_to_json(const CaseStudyReport& report);

}  // namespace tsm
