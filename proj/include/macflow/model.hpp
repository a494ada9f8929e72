#pragma once

#include <string>
#include <vector>

namespace macflow {

inline constexpr double kStandardGravity = 9.81;  // m/s^2

// Receiver id 0 is the stationary access point at the origin. Mobile nodes
// are numbered 1..N and appear in ScenarioConfig::nodes in id order.
inline constexpr int kAccessPointId = 0;

struct ChannelParams {
  double antenna_gain_product = 1.0;       // combined tx/rx antenna gain G
  double path_loss_exponent = 1.5;         // applied to the squared distance
  double noise_power_w = 1e-10;
  std::vector<double> bandwidth_hz;        // indexed by receiver id; size 1 broadcasts
};

struct LinkGeometry {
  double altitude_diff_m = 0.0;
  double lateral_diff_m = 0.0;
  double along_track_m = 0.0;  // signed separation along the flight axis
};

// Resistive force C1*v^2 + C2*v^-2: quadratic body drag plus lift-induced
// drag that blows up at low airspeed. Negative speed is outside the model.
struct DragModel {
  double parasitic_coeff = 0.0;  // C1 [N s^2/m^2]
  double induced_coeff = 0.0;    // C2 [N m^2/s^2]
};

struct NodeParams {
  double mass_kg = 0.0;
  double altitude_m = 0.0;
  double lateral_offset_m = 0.0;
  double initial_data_bits = 0.0;
  double buffer_capacity_bits = 0.0;
  double v_min_mps = 0.0;
  double v_max_mps = 0.0;
  double v_init_mps = 0.0;
  double q_init_m = 0.0;
  double q_final_m = 0.0;
  int direction = 0;  // +1 position grows with speed, -1 shrinks; 0 = infer
  double p_max_w = 0.0;
};

struct Link {
  int from = 0;
  int to = 0;
  friend bool operator==(const Link&, const Link&) = default;
};

struct ScenarioConfig {
  std::vector<NodeParams> nodes;
  ChannelParams channel;
  DragModel drag;
  double horizon_s = 0.0;
  int knot_count = 200;  // trapezoid intervals; the grid has knot_count + 1 knots
  std::vector<Link> topology;
  bool relaying_enabled = false;

  int node_count() const { return static_cast<int>(nodes.size()); }
  const NodeParams& node(int id) const { return nodes.at(static_cast<std::size_t>(id - 1)); }
  double bandwidth_for_receiver(int id) const;
  std::vector<Link> links_from(int node_id) const;
  std::vector<Link> links_to(int receiver_id) const;
  std::vector<int> receivers() const;  // distinct link targets, ascending
};

// Geometry of the directed link from -> to at the given along-track
// positions. `to` may be the access point (fixed at the origin).
LinkGeometry link_geometry(const ScenarioConfig& cfg, int from, int to, double q_from, double q_to);

// G / (a^2 + d^2 + q^2)^alpha. Throws std::domain_error at zero separation.
double channel_gain(const ChannelParams& ch, const LinkGeometry& geom);

// C1*v^2 + C2*v^-2. Throws std::domain_error for v < 0, and for v == 0 when
// the induced term is present.
double drag_force(const DragModel& drag, double speed_mps);

// Coefficients from the physical fixed-wing drag expression, with lift
// pinned to the craft weight for level flight.
DragModel drag_from_physical(double air_density_kgpm3, double base_drag_coeff, double wing_area_m2,
                             double oswald_efficiency, double aspect_ratio, double mass_kg,
                             double gravity_mps2 = kStandardGravity);

// v * (drag_force(v) + m * v_dot); negative while decelerating hard.
double propulsion_power(const DragModel& drag, double mass_kg, double speed_mps, double accel_mps2);

// All violated invariants of `cfg` after normalization; empty means valid.
std::vector<std::string> scenario_issues(const ScenarioConfig& cfg);

// Normalizes defaults (topology, direction, bandwidth broadcast) and either
// returns the cleaned config or throws ValidationError with every issue.
ScenarioConfig validate_scenario(const ScenarioConfig& cfg);

}  // namespace macflow
