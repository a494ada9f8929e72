#include "macflow/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "macflow/errors.hpp"

namespace macflow {

namespace {

std::string node_label(int id) { return "node " + std::to_string(id); }

ScenarioConfig normalized(ScenarioConfig cfg) {
  if (cfg.topology.empty()) {
    for (int n = 1; n <= cfg.node_count(); ++n) {
      cfg.topology.push_back({n, kAccessPointId});
    }
  }
  std::sort(cfg.topology.begin(), cfg.topology.end(),
            [](const Link& a, const Link& b) { return std::tie(a.from, a.to) < std::tie(b.from, b.to); });
  for (auto& node : cfg.nodes) {
    if (node.direction == 0) {
      node.direction = node.q_final_m >= node.q_init_m ? 1 : -1;
    }
  }
  if (cfg.channel.bandwidth_hz.size() == 1 && cfg.node_count() > 0) {
    cfg.channel.bandwidth_hz.resize(static_cast<std::size_t>(cfg.node_count()) + 1,
                                    cfg.channel.bandwidth_hz.front());
  }
  return cfg;
}

}  // namespace

double ScenarioConfig::bandwidth_for_receiver(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= channel.bandwidth_hz.size()) {
    throw std::out_of_range("no bandwidth entry for receiver " + std::to_string(id));
  }
  return channel.bandwidth_hz[static_cast<std::size_t>(id)];
}

std::vector<Link> ScenarioConfig::links_from(int node_id) const {
  std::vector<Link> out;
  for (const Link& l : topology) {
    if (l.from == node_id) out.push_back(l);
  }
  return out;
}

std::vector<Link> ScenarioConfig::links_to(int receiver_id) const {
  std::vector<Link> out;
  for (const Link& l : topology) {
    if (l.to == receiver_id) out.push_back(l);
  }
  return out;
}

std::vector<int> ScenarioConfig::receivers() const {
  std::set<int> ids;
  for (const Link& l : topology) ids.insert(l.to);
  return {ids.begin(), ids.end()};
}

LinkGeometry link_geometry(const ScenarioConfig& cfg, int from, int to, double q_from, double q_to) {
  const NodeParams& src = cfg.node(from);
  double a_to = 0.0;
  double d_to = 0.0;
  if (to != kAccessPointId) {
    const NodeParams& dst = cfg.node(to);
    a_to = dst.altitude_m;
    d_to = dst.lateral_offset_m;
  }
  return {src.altitude_m - a_to, src.lateral_offset_m - d_to, q_from - q_to};
}

double channel_gain(const ChannelParams& ch, const LinkGeometry& geom) {
  const double sq = geom.altitude_diff_m * geom.altitude_diff_m +
                    geom.lateral_diff_m * geom.lateral_diff_m +
                    geom.along_track_m * geom.along_track_m;
  if (sq <= 0.0) {
    throw std::domain_error("channel gain is singular at zero separation");
  }
  return ch.antenna_gain_product / std::pow(sq, ch.path_loss_exponent);
}

double drag_force(const DragModel& drag, double speed_mps) {
  if (speed_mps < 0.0) {
    throw std::domain_error("drag model is undefined for negative speed");
  }
  if (speed_mps == 0.0) {
    if (drag.induced_coeff > 0.0) {
      throw std::domain_error("induced drag is singular at zero speed");
    }
    return 0.0;
  }
  return drag.parasitic_coeff * speed_mps * speed_mps +
         drag.induced_coeff / (speed_mps * speed_mps);
}

DragModel drag_from_physical(double air_density_kgpm3, double base_drag_coeff, double wing_area_m2,
                             double oswald_efficiency, double aspect_ratio, double mass_kg,
                             double gravity_mps2) {
  const double inputs[] = {air_density_kgpm3, base_drag_coeff,  wing_area_m2, oswald_efficiency,
                           aspect_ratio,      mass_kg,          gravity_mps2};
  for (double v : inputs) {
    if (!(v > 0.0)) {
      throw ValidationError("drag_from_physical requires strictly positive inputs");
    }
  }
  const double weight = mass_kg * gravity_mps2;
  DragModel out;
  out.parasitic_coeff = 0.5 * air_density_kgpm3 * base_drag_coeff * wing_area_m2;
  out.induced_coeff = 2.0 * weight * weight /
                      (M_PI * oswald_efficiency * aspect_ratio * air_density_kgpm3 * wing_area_m2);
  return out;
}

double propulsion_power(const DragModel& drag, double mass_kg, double speed_mps, double accel_mps2) {
  return speed_mps * (drag_force(drag, speed_mps) + mass_kg * accel_mps2);
}

std::vector<std::string> scenario_issues(const ScenarioConfig& raw) {
  const ScenarioConfig cfg = normalized(raw);
  std::vector<std::string> issues;
  auto bad = [&issues](const std::string& msg) { issues.push_back(msg); };

  if (cfg.nodes.empty()) bad("scenario has no mobile nodes");
  if (!(cfg.horizon_s > 0.0)) bad("horizon must be positive");
  if (cfg.knot_count < 2) bad("knot_count must be at least 2");

  const ChannelParams& ch = cfg.channel;
  if (!(ch.antenna_gain_product > 0.0)) bad("antenna_gain_product must be positive");
  if (!(ch.path_loss_exponent >= 1.0)) bad("path_loss_exponent must be >= 1");
  if (!(ch.noise_power_w > 0.0)) bad("noise_power must be positive");
  if (ch.bandwidth_hz.empty()) bad("bandwidth_per_receiver must not be empty");
  for (std::size_t i = 0; i < ch.bandwidth_hz.size(); ++i) {
    if (!(ch.bandwidth_hz[i] > 0.0)) {
      bad("bandwidth_per_receiver[" + std::to_string(i) + "] must be positive");
    }
  }

  if (!(cfg.drag.parasitic_coeff > 0.0)) bad("parasitic_coefficient must be positive");
  if (cfg.drag.induced_coeff < 0.0) bad("induced_coefficient must be non-negative");

  for (int id = 1; id <= cfg.node_count(); ++id) {
    const NodeParams& n = cfg.node(id);
    const std::string who = node_label(id);
    if (!(n.mass_kg > 0.0)) bad(who + ": mass must be positive");
    if (n.initial_data_bits < 0.0) bad(who + ": initial_data must be non-negative");
    if (!(n.buffer_capacity_bits > 0.0)) bad(who + ": buffer_capacity must be positive");
    if (n.initial_data_bits > n.buffer_capacity_bits) {
      bad(who + ": initial_data exceeds buffer_capacity");
    }
    if (n.v_min_mps < 0.0) bad(who + ": v_min must be non-negative");
    if (n.v_min_mps > n.v_max_mps) bad(who + ": v_min exceeds v_max");
    if (n.v_init_mps < n.v_min_mps || n.v_init_mps > n.v_max_mps) {
      bad(who + ": v_init outside [v_min, v_max]");
    }
    if (n.direction != 1 && n.direction != -1) bad(who + ": direction must be +1 or -1");
    if (static_cast<double>(n.direction) * (n.q_final_m - n.q_init_m) < 0.0) {
      bad(who + ": direction inconsistent with q_final - q_init");
    }
    if (!(n.p_max_w > 0.0)) bad(who + ": p_max must be positive");
  }

  std::set<std::pair<int, int>> seen;
  for (const Link& l : cfg.topology) {
    const std::string who = "link " + std::to_string(l.from) + "->" + std::to_string(l.to);
    if (l.from < 1 || l.from > cfg.node_count()) {
      bad(who + ": transmitter id out of range");
      continue;
    }
    if (l.to < 0 || l.to > cfg.node_count()) {
      bad(who + ": receiver id out of range");
      continue;
    }
    if (l.from == l.to) bad(who + ": self link");
    if (!seen.insert({l.from, l.to}).second) bad(who + ": duplicate link");
    if (!cfg.relaying_enabled && l.to != kAccessPointId) {
      bad(who + ": node-to-node link requires relaying_enabled");
    }
    if (l.to != kAccessPointId && static_cast<std::size_t>(l.to) >= cfg.channel.bandwidth_hz.size()) {
      bad(who + ": no bandwidth entry for receiver");
    }
    if (l.from >= 1 && l.from <= cfg.node_count() && l.to >= 0 && l.to <= cfg.node_count() &&
        l.from != l.to) {
      const LinkGeometry g = link_geometry(cfg, l.from, l.to, 0.0, 0.0);
      if (g.altitude_diff_m * g.altitude_diff_m + g.lateral_diff_m * g.lateral_diff_m <= 0.0) {
        bad(who + ": zero altitude and lateral separation makes the gain singular");
      }
    }
  }
  for (int id = 1; id <= cfg.node_count(); ++id) {
    if (cfg.node(id).initial_data_bits > 0.0 && cfg.links_from(id).empty()) {
      bad(node_label(id) + ": carries data but has no outgoing link");
    }
  }

  // Every link target must be able to forward onward to the access point,
  // otherwise relayed bits would be stranded in its buffer.
  auto reaches_ap = [&cfg](int start) {
    std::set<int> seen{start};
    std::vector<int> stack{start};
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      if (u == kAccessPointId) return true;
      for (const Link& l : cfg.links_from(u)) {
        if (seen.insert(l.to).second) stack.push_back(l.to);
      }
    }
    return false;
  };
  for (const Link& l : cfg.topology) {
    if (l.to != kAccessPointId && l.to >= 1 && l.to <= cfg.node_count() && !reaches_ap(l.to)) {
      bad("link " + std::to_string(l.from) + "->" + std::to_string(l.to) +
          ": receiver cannot forward to the access point");
    }
  }
  return issues;
}

ScenarioConfig validate_scenario(const ScenarioConfig& cfg) {
  auto issues = scenario_issues(cfg);
  if (!issues.empty()) throw ValidationError(std::move(issues));
  return normalized(cfg);
}

}  // namespace macflow
