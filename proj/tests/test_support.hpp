#pragma once

#include "macflow/model.hpp"
#include "macflow/prng.hpp"

namespace macflow::testing {

// Single node, the reference geometry: 1 km altitude, symmetric path around
// the access point, 20-minute horizon.
inline ScenarioConfig single_node_scenario(double data_bits = 6e8, int knots = 50) {
  ScenarioConfig cfg;
  NodeParams n;
  n.mass_kg = 3.0;
  n.altitude_m = 1000.0;
  n.lateral_offset_m = 0.0;
  n.initial_data_bits = data_bits;
  n.buffer_capacity_bits = 8e9;
  n.v_min_mps = 30.0 / 3.6;
  n.v_max_mps = 100.0 / 3.6;
  n.v_init_mps = 65.0 / 3.6;
  n.q_init_m = -600.0 * 65.0 / 3.6;
  n.q_final_m = 600.0 * 65.0 / 3.6;
  n.direction = 1;
  n.p_max_w = 100.0;
  cfg.nodes.push_back(n);
  cfg.channel.antenna_gain_product = 1.0;
  cfg.channel.path_loss_exponent = 1.5;
  cfg.channel.noise_power_w = 1e-10;
  cfg.channel.bandwidth_hz = {1e5};
  cfg.drag.parasitic_coeff = 9.26e-4;
  cfg.drag.induced_coeff = 2250.0;
  cfg.horizon_s = 1200.0;
  cfg.knot_count = knots;
  return cfg;
}

inline ScenarioConfig two_node_scenario(double data_bits = 2e8, int knots = 50) {
  ScenarioConfig cfg = single_node_scenario(data_bits, knots);
  NodeParams n2 = cfg.nodes[0];
  n2.lateral_offset_m = 1000.0;
  cfg.nodes.push_back(n2);
  const double v = 65.0 / 3.6;
  for (auto& n : cfg.nodes) {
    n.v_min_mps = n.v_max_mps = n.v_init_mps = v;
    n.initial_data_bits = data_bits;
  }
  return cfg;
}

inline ScenarioConfig tiny_scenario(double data_bits = 8e7, int knots = 3) {
  ScenarioConfig cfg = single_node_scenario(data_bits, knots);
  cfg.horizon_s = 240.0;
  cfg.nodes[0].q_init_m = -120.0 * 65.0 / 3.6;
  cfg.nodes[0].q_final_m = 120.0 * 65.0 / 3.6;
  return cfg;
}

}  // namespace macflow::testing
