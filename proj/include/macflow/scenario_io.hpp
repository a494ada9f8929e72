#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "macflow/analysis.hpp"
#include "macflow/model.hpp"
#include "macflow/solver.hpp"
#include "macflow/transcription.hpp"

namespace macflow {

// Scenario documents are JSON with snake_case fields mirroring the config
// types; all values are SI (seconds, meters, Watts, bits, Hz, m/s).
ScenarioConfig scenario_from_json_text(const std::string& text);
ScenarioConfig load_scenario(const std::string& path);

// Canonical serialized form: sorted keys, stable number formatting. Equal
// configs produce byte-identical text.
std::string canonical_json(const ScenarioConfig& cfg);
std::uint64_t config_hash(const ScenarioConfig& cfg);

// CSV with one row per knot: t_s, then per node p/r per link, buffer,
// position, speed, thrust.
std::string solution_csv(const ScenarioConfig& cfg, const Solution& solution);

// Machine-readable run summary (energy breakdown, solver stats, optional
// priority trace and policy comparison).
std::string summary_json(const ScenarioConfig& cfg, const Solution& solution,
                         const EnergyBreakdown& energy, const PriorityTrace* trace,
                         const PolicyComparison* comparison, bool report_units);

std::string solver_options_json(const SolverOptions& opts);

}  // namespace macflow
