#pragma once

#include <span>
#include <string>
#include <vector>

#include "macflow/program.hpp"

namespace macflow {

enum class TerminationStatus { optimal, max_iterations, infeasible, numerical_failure };

std::string to_string(TerminationStatus s);

struct SolveStats {
  int iterations = 0;
  double kkt_stationarity = 0.0;
  double kkt_feasibility = 0.0;
  double kkt_complementarity = 0.0;
  double objective = 0.0;
  TerminationStatus status = TerminationStatus::numerical_failure;
  std::string message;
};

struct LinkSeries {
  int from = 0;
  int to = 0;
  std::vector<double> power_w;
  std::vector<double> rate_bps;
};

struct NodeTrajectory {
  int node_id = 0;
  std::vector<LinkSeries> links;
  std::vector<double> buffer_bits;
  std::vector<double> position_m;
  std::vector<double> speed_mps;
  std::vector<double> thrust_n;
};

// A solved (or candidate) trajectory set. objective_value is the minimized
// cost: transmit energy + drag work + terminal kinetic term; the constant
// initial kinetic term is excluded and re-added by the energy breakdown.
struct Solution {
  std::vector<double> knot_times_s;
  std::vector<NodeTrajectory> nodes;
  double objective_value = 0.0;
  SolveStats stats;
  std::vector<double> decision_vector;  // flat values in layout order
};

struct NodeEnergy {
  int node_id = 0;
  double transmission_j = 0.0;
  double propulsion_j = 0.0;       // trapezoid of v * F with recovered thrust
  double kinetic_delta_j = 0.0;    // m/2 (v_T^2 - v_0^2)
  double extra_propulsion_j = 0.0; // drag work above the constant-mean-speed profile
};

struct EnergyBreakdown {
  std::vector<NodeEnergy> nodes;
  double total_transmission_j = 0.0;
  double total_propulsion_j = 0.0;
  double total_j = 0.0;  // transmission + propulsion
};

struct ConstraintViolation {
  std::string label;
  double magnitude = 0.0;  // scaled violation, 0 when satisfied
};

struct FeasibilityReport {
  std::vector<ConstraintViolation> violations;
  double max_violation = 0.0;
  bool passed(double tol) const { return max_violation <= tol; }
};

// Transcribes the scenario on a uniform grid of knot_count intervals.
// goal == max_data swaps the objective for (minus) the bits delivered to the
// access point and frees the buffer boundary conditions.
// Throws InfeasibleError when the boundary data is kinematically impossible.
ConvexProgram build_program(const ScenarioConfig& cfg, ProgramGoal goal = ProgramGoal::min_energy);

// F_k = drag(v_k) + m * dv/dt with second-order differences (one-sided ends).
std::vector<double> thrust_profile(const DragModel& drag, double mass_kg,
                                   std::span<const double> speeds_mps, double dt_s);

// Expands a flat decision vector into per-node trajectories with thrust.
Solution assemble_solution(const ScenarioConfig& cfg, const ConvexProgram& program,
                           std::span<const double> x, SolveStats stats);

EnergyBreakdown evaluate_energy(const ScenarioConfig& cfg, const Solution& solution);

// Evaluates every transcribed constraint at the solution, listing violations
// in scaled units (rates relative to bandwidth, buffers relative to capacity).
FeasibilityReport check_feasibility(const ScenarioConfig& cfg, const Solution& solution, double tol);
FeasibilityReport check_feasibility(const ConvexProgram& program, std::span<const double> x, double tol);

// Trapezoid integral of per-knot samples on a uniform grid.
double trapezoid(std::span<const double> values, double dt_s);

}  // namespace macflow
