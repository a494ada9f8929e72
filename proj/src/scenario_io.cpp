#include "macflow/scenario_io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "macflow/errors.hpp"

namespace macflow {

namespace {

using nlohmann::json;

double require_number(const json& j, const std::string& key) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw ValidationError("missing or non-numeric field '" + key + "'");
  }
  return j[key].get<double>();
}

double number_or(const json& j, const std::string& key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ValidationError("field '" + key + "' must be numeric");
  return j[key].get<double>();
}

}  // namespace

ScenarioConfig scenario_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("scenario is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("scenario root must be an object");

  ScenarioConfig cfg;
  cfg.horizon_s = require_number(doc, "horizon");
  cfg.knot_count = static_cast<int>(number_or(doc, "knot_count", 200));
  cfg.relaying_enabled = doc.value("relaying_enabled", false);

  if (!doc.contains("channel") || !doc["channel"].is_object()) {
    throw ValidationError("missing 'channel' object");
  }
  const json& ch = doc["channel"];
  cfg.channel.antenna_gain_product = number_or(ch, "antenna_gain_product", 1.0);
  cfg.channel.path_loss_exponent = require_number(ch, "path_loss_exponent");
  cfg.channel.noise_power_w = require_number(ch, "noise_power");
  if (!ch.contains("bandwidth_per_receiver")) {
    throw ValidationError("missing 'channel.bandwidth_per_receiver'");
  }
  if (ch["bandwidth_per_receiver"].is_number()) {
    cfg.channel.bandwidth_hz = {ch["bandwidth_per_receiver"].get<double>()};
  } else if (ch["bandwidth_per_receiver"].is_array()) {
    for (const auto& b : ch["bandwidth_per_receiver"]) {
      if (!b.is_number()) throw ValidationError("bandwidth_per_receiver entries must be numeric");
      cfg.channel.bandwidth_hz.push_back(b.get<double>());
    }
  } else {
    throw ValidationError("'channel.bandwidth_per_receiver' must be a number or array");
  }

  if (!doc.contains("drag") || !doc["drag"].is_object()) {
    throw ValidationError("missing 'drag' object");
  }
  cfg.drag.parasitic_coeff = require_number(doc["drag"], "parasitic_coefficient");
  cfg.drag.induced_coeff = require_number(doc["drag"], "induced_coefficient");

  if (!doc.contains("nodes") || !doc["nodes"].is_array() || doc["nodes"].empty()) {
    throw ValidationError("missing non-empty 'nodes' array");
  }
  for (const auto& jn : doc["nodes"]) {
    NodeParams n;
    n.mass_kg = require_number(jn, "mass");
    n.altitude_m = require_number(jn, "altitude");
    n.lateral_offset_m = number_or(jn, "lateral_offset", 0.0);
    n.initial_data_bits = require_number(jn, "initial_data");
    n.buffer_capacity_bits = require_number(jn, "buffer_capacity");
    n.v_min_mps = require_number(jn, "v_min");
    n.v_max_mps = require_number(jn, "v_max");
    n.v_init_mps = require_number(jn, "v_init");
    n.q_init_m = require_number(jn, "q_init");
    n.q_final_m = require_number(jn, "q_final");
    n.direction = static_cast<int>(number_or(jn, "direction", 0));
    n.p_max_w = require_number(jn, "p_max");
    cfg.nodes.push_back(n);
  }

  if (doc.contains("topology")) {
    if (!doc["topology"].is_array()) throw ValidationError("'topology' must be an array");
    for (const auto& jl : doc["topology"]) {
      Link l;
      l.from = static_cast<int>(require_number(jl, "from"));
      l.to = static_cast<int>(require_number(jl, "to"));
      cfg.topology.push_back(l);
    }
  }
  return validate_scenario(cfg);
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return scenario_from_json_text(buf.str());
}

std::string canonical_json(const ScenarioConfig& raw) {
  const ScenarioConfig cfg = validate_scenario(raw);
  json doc;
  doc["horizon"] = cfg.horizon_s;
  doc["knot_count"] = cfg.knot_count;
  doc["relaying_enabled"] = cfg.relaying_enabled;
  doc["channel"] = {{"antenna_gain_product", cfg.channel.antenna_gain_product},
                    {"path_loss_exponent", cfg.channel.path_loss_exponent},
                    {"noise_power", cfg.channel.noise_power_w},
                    {"bandwidth_per_receiver", cfg.channel.bandwidth_hz}};
  doc["drag"] = {{"parasitic_coefficient", cfg.drag.parasitic_coeff},
                 {"induced_coefficient", cfg.drag.induced_coeff}};
  doc["nodes"] = json::array();
  for (const NodeParams& n : cfg.nodes) {
    doc["nodes"].push_back({{"mass", n.mass_kg},
                            {"altitude", n.altitude_m},
                            {"lateral_offset", n.lateral_offset_m},
                            {"initial_data", n.initial_data_bits},
                            {"buffer_capacity", n.buffer_capacity_bits},
                            {"v_min", n.v_min_mps},
                            {"v_max", n.v_max_mps},
                            {"v_init", n.v_init_mps},
                            {"q_init", n.q_init_m},
                            {"q_final", n.q_final_m},
                            {"direction", n.direction},
                            {"p_max", n.p_max_w}});
  }
  doc["topology"] = json::array();
  for (const Link& l : cfg.topology) {
    doc["topology"].push_back({{"from", l.from}, {"to", l.to}});
  }
  return doc.dump(2);  // nlohmann objects iterate in sorted key order
}

std::uint64_t config_hash(const ScenarioConfig& cfg) {
  // FNV-1a over the canonical serialization.
  const std::string text = canonical_json(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string solution_csv(const ScenarioConfig& cfg, const Solution& solution) {
  std::string out;
  out += "t_s";
  for (const NodeTrajectory& traj : solution.nodes) {
    const std::string u = "u" + std::to_string(traj.node_id);
    for (const LinkSeries& link : traj.links) {
      const std::string to = link.to == kAccessPointId ? "ap" : "u" + std::to_string(link.to);
      out += "," + u + "_p_W_to_" + to;
      out += "," + u + "_r_bps_to_" + to;
    }
    out += "," + u + "_s_bits," + u + "_q_m," + u + "_v_mps," + u + "_F_N";
  }
  out += "\n";

  char buf[40];
  auto append = [&out, &buf](double v) {
    std::snprintf(buf, sizeof(buf), ",%.12g", v);
    out += buf;
  };
  for (std::size_t k = 0; k < solution.knot_times_s.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.12g", solution.knot_times_s[k]);
    out += buf;
    for (const NodeTrajectory& traj : solution.nodes) {
      for (const LinkSeries& link : traj.links) {
        append(link.power_w[k]);
        append(link.rate_bps[k]);
      }
      append(traj.buffer_bits[k]);
      append(traj.position_m[k]);
      append(traj.speed_mps[k]);
      append(traj.thrust_n[k]);
    }
    out += "\n";
  }
  (void)cfg;
  return out;
}

std::string summary_json(const ScenarioConfig& cfg, const Solution& solution,
                         const EnergyBreakdown& energy, const PriorityTrace* trace,
                         const PolicyComparison* comparison, bool report_units) {
  json doc;
  doc["status"] = to_string(solution.stats.status);
  doc["objective_j"] = solution.objective_value;
  doc["solver"] = {{"iterations", solution.stats.iterations},
                   {"kkt_stationarity", solution.stats.kkt_stationarity},
                   {"kkt_feasibility", solution.stats.kkt_feasibility},
                   {"kkt_complementarity", solution.stats.kkt_complementarity},
                   {"message", solution.stats.message}};
  doc["energy"] = {{"total_j", energy.total_j},
                   {"transmission_j", energy.total_transmission_j},
                   {"propulsion_j", energy.total_propulsion_j}};
  doc["energy"]["nodes"] = json::array();
  for (const NodeEnergy& e : energy.nodes) {
    doc["energy"]["nodes"].push_back({{"node", e.node_id},
                                      {"transmission_j", e.transmission_j},
                                      {"propulsion_j", e.propulsion_j},
                                      {"kinetic_delta_j", e.kinetic_delta_j},
                                      {"extra_propulsion_j", e.extra_propulsion_j}});
  }
  if (report_units) {
    doc["energy"]["report"] = {{"total_kj", energy.total_j / 1e3},
                               {"transmission_kj", energy.total_transmission_j / 1e3},
                               {"propulsion_kj", energy.total_propulsion_j / 1e3}};
    json per_node = json::array();
    for (int id = 1; id <= cfg.node_count(); ++id) {
      const NodeParams& n = cfg.node(id);
      per_node.push_back({{"node", id},
                          {"initial_data_mb", n.initial_data_bits / 8e6},
                          {"v_min_kmh", n.v_min_mps * 3.6},
                          {"v_max_kmh", n.v_max_mps * 3.6}});
    }
    doc["energy"]["report"]["nodes"] = per_node;
  }
  if (trace) {
    int active = 0;
    double max_weight = 0.0;
    double max_residual = 0.0;
    for (std::size_t k = 0; k < trace->weight.size(); ++k) {
      if (!trace->active[k]) continue;
      ++active;
      max_weight = std::max(max_weight, trace->weight[k]);
      max_residual = std::max(max_residual, trace->off_segment_rel[k]);
    }
    doc["priority"] = {{"active_knots", active},
                       {"undefined_knots", static_cast<int>(trace->weight.size()) - active},
                       {"max_weight", max_weight},
                       {"max_off_segment_rel", max_residual},
                       {"flagged_knots", trace->flagged_knots}};
  }
  if (comparison) {
    doc["comparison"] = {{"joint_feasible", comparison->joint_feasible},
                         {"joint_energy_j", comparison->joint_energy_j},
                         {"fixed_feasible", comparison->fixed_feasible},
                         {"fixed_energy_j", comparison->fixed_energy_j},
                         {"variable_max_data_bits", comparison->variable_max_data_bits},
                         {"fixed_max_data_bits", comparison->fixed_max_data_bits},
                         {"uplift_ratio", comparison->uplift_ratio},
                         {"notes", comparison->notes}};
  }
  doc["delivered_bits"] = [&] {
    double bits = 0.0;
    const double dt = solution.knot_times_s.size() > 1
                          ? solution.knot_times_s[1] - solution.knot_times_s[0]
                          : 0.0;
    for (const NodeTrajectory& traj : solution.nodes) {
      for (const LinkSeries& link : traj.links) {
        if (link.to == kAccessPointId) bits += trapezoid(link.rate_bps, dt);
      }
    }
    return bits;
  }();
  return doc.dump(2);
}

std::string solver_options_json(const SolverOptions& opts) {
  json doc = {{"kkt_tolerance", opts.kkt_tolerance},
              {"max_iterations", opts.max_iterations},
              {"initial_barrier_weight", opts.initial_barrier_weight},
              {"barrier_reduction", opts.barrier_reduction},
              {"armijo_coeff", opts.armijo_coeff},
              {"backtrack_ratio", opts.backtrack_ratio},
              {"feasibility_restoration", opts.feasibility_restoration}};
  return doc.dump(2);
}

}  // namespace macflow
