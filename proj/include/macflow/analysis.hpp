#pragma once

#include <string>
#include <vector>

#include "macflow/solver.hpp"
#include "macflow/transcription.hpp"

namespace macflow {

// Decoding priority over time for a two-transmitter, single-receiver solve.
// weight == 1 means node 1's data is decoded last (interference-free);
// weight == 0 means node 2 is. Knots where either power is at or under the
// activity threshold are undefined (NaN weight).
struct PriorityTrace {
  std::vector<double> knot_times_s;
  std::vector<double> weight;
  std::vector<bool> active;
  std::vector<double> off_segment_rel;  // projection residual where active
  int flagged_knots = 0;                // active knots beyond the residual tolerance
  double segment_tolerance = 0.0;
};

// power_threshold_w < 0 selects the default 1e-4 * min(p_max).
PriorityTrace priority_trace(const Solution& solution, const ScenarioConfig& cfg,
                             double power_threshold_w = -1.0, double segment_rel_tol = 1e-4);

struct PolicyComparison {
  bool joint_feasible = false;
  double joint_energy_j = 0.0;
  double joint_transmission_j = 0.0;
  double joint_propulsion_j = 0.0;
  bool fixed_feasible = false;
  double fixed_energy_j = 0.0;
  double fixed_transmission_j = 0.0;
  double fixed_propulsion_j = 0.0;
  double variable_max_data_bits = 0.0;
  double fixed_max_data_bits = 0.0;
  double uplift_ratio = 0.0;  // variable over fixed maximum deliverable data
  std::string notes;
};

// Runs (a) the joint speed/power optimization and (b) the fixed-speed policy
// at the required mean speed with optimal powers, and compares energies and
// maximum deliverable data.
PolicyComparison compare_policies(const ScenarioConfig& cfg, const SolverOptions& opts = {});

// Drag work of the solution above the constant-mean-speed cruise over the
// same path and horizon, summed over nodes. Non-negative up to quadrature
// error because v * drag(v) is convex.
double energy_vs_baseline(const Solution& solution, const ScenarioConfig& cfg);

}  // namespace macflow
