#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "p2pm/clearing.hpp"
#include "p2pm/grid.hpp"
#include "p2pm/model.hpp"
#include "p2pm/oracle.hpp"
#include "p2pm/selection.hpp"

namespace p2pm {

/// Everything needed to clear one market: agents, trading graph, optional feeder and solver settings.
struct Instance {
    Market market;
    std::optional<GridModel> grid;
    ClearingConfig clearing;
};

nlohmann::json to_json(const Instance& inst);
Instance instance_from_json(const nlohmann::json& doc);

Instance load_instance(const std::string& path);
void save_instance(const Instance& inst, const std::string& path);

/// Trace CSV: header `k,mismatch_inf,welfare,dual_value,dual_gap,wall_ms`, 9 significant digits.
void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& trace);

nlohmann::json to_json(const ConstraintReport& rep);
nlohmann::json result_summary(const Instance& inst, const ClearingResult& res,
                              const std::optional<SelectionResult>& selection = std::nullopt);
nlohmann::json to_json(const Instance& inst, const OracleSolution& sol);

/// FNV-1a over the compact JSON dump; stable across runs and platforms.
std::string spec_hash(const nlohmann::json& doc);

std::string to_string(NetworkMode mode);
std::string to_string(TieBreak rule);

}  // namespace p2pm
