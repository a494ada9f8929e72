#pragma once

#include <span>
#include <vector>

#include "macflow/model.hpp"
#include "macflow/solver.hpp"
#include "macflow/transcription.hpp"

namespace macflow {

// One link over a fixed trajectory: channel gain sampled on a uniform grid.
struct LinkProfile {
  std::vector<double> knot_times_s;
  std::vector<double> gains;
};

struct WaterFillingResult {
  std::vector<double> power_w;
  double water_level = 0.0;     // dual threshold: p = clamp(level - sigma^2/gain, 0, p_max)
  double delivered_bits = 0.0;  // trapezoid of the realized rate
  std::vector<double> rate_bps;
};

// Minimum-energy power schedule delivering `data_bits` over the profile.
// Stationarity of the power integral against the rate constraint makes the
// unclamped optimum p(t) = level - sigma^2/gain(t); the level is found by
// bisection on the delivered bits. Throws InfeasibleError (carrying the
// maximum) when data_bits is not deliverable at p_max.
WaterFillingResult water_filling(const LinkProfile& profile, double data_bits, double p_max_w,
                                 double noise_power_w, double bandwidth_hz);

// Bits deliverable at full power over the profile (trapezoid quadrature).
double max_feasible_data(const LinkProfile& profile, double p_max_w, double noise_power_w,
                         double bandwidth_hz);

// Gain profile of node_id's access-point link when it cruises at its required
// mean speed over the scenario grid.
LinkProfile fixed_speed_profile(const ScenarioConfig& cfg, int node_id);

// Antenna gain product that makes the fixed-speed single-node profile deliver
// target_bits at full power; bisection, unique by monotonicity.
double calibrate_gain(const ScenarioConfig& cfg, double target_bits);

struct OracleResult {
  double energy_j = 0.0;        // transmission + drag work + kinetic delta
  double transmission_j = 0.0;
  double propulsion_j = 0.0;
  std::vector<double> speed_mps;
  std::vector<double> power_w;
  long profiles_evaluated = 0;
  long profiles_feasible = 0;
};

// Exhaustive search over gridded speed profiles for a single node (the final
// speed is projected to meet the endpoint), with water-filling supplying the
// optimal powers per profile. Grid sizes above 50 or more than 4 intervals
// are rejected. power_grid_points first-order-checks each water-filling
// schedule against gridded perturbations.
OracleResult brute_force_oracle(const ScenarioConfig& cfg, int speed_grid_points,
                                int power_grid_points);

// Solve with speeds pinned (requires v_min == v_max per node): positions are
// determined, so only powers, rates and buffers remain free.
Solution fixed_speed_solution(const ScenarioConfig& cfg, const SolverOptions& opts = {});

}  // namespace macflow
