#include "macflow/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "macflow/baselines.hpp"
#include "macflow/capacity.hpp"
#include "macflow/errors.hpp"

namespace macflow {

PriorityTrace priority_trace(const Solution& solution, const ScenarioConfig& raw,
                             double power_threshold_w, double segment_rel_tol) {
  const ScenarioConfig cfg = validate_scenario(raw);
  if (cfg.node_count() != 2 || cfg.relaying_enabled ||
      cfg.links_to(kAccessPointId).size() != 2) {
    throw std::invalid_argument(
        "priority trace is defined for two transmitters sharing the access point");
  }
  if (power_threshold_w < 0.0) {
    power_threshold_w = 1e-4 * std::min(cfg.node(1).p_max_w, cfg.node(2).p_max_w);
  }

  const NodeTrajectory& n1 = solution.nodes.at(0);
  const NodeTrajectory& n2 = solution.nodes.at(1);
  const LinkSeries& l1 = n1.links.at(0);
  const LinkSeries& l2 = n2.links.at(0);
  const double bandwidth = cfg.bandwidth_for_receiver(kAccessPointId);
  const double noise = cfg.channel.noise_power_w;

  PriorityTrace trace;
  trace.knot_times_s = solution.knot_times_s;
  trace.segment_tolerance = segment_rel_tol;
  const std::size_t knots = solution.knot_times_s.size();
  trace.weight.assign(knots, std::numeric_limits<double>::quiet_NaN());
  trace.active.assign(knots, false);
  trace.off_segment_rel.assign(knots, 0.0);

  for (std::size_t k = 0; k < knots; ++k) {
    const double p1 = l1.power_w[k];
    const double p2 = l2.power_w[k];
    if (p1 <= power_threshold_w || p2 <= power_threshold_w) continue;
    trace.active[k] = true;
    const double g1 = channel_gain(
        cfg.channel, link_geometry(cfg, 1, kAccessPointId, n1.position_m[k], 0.0));
    const double g2 = channel_gain(
        cfg.channel, link_geometry(cfg, 2, kAccessPointId, n2.position_m[k], 0.0));
    const auto [corner1, corner2] = two_user_corners(g1, g2, p1, p2, noise, bandwidth);
    const double rate_pair[] = {l1.rate_bps[k], l2.rate_bps[k]};
    const PriorityProjection proj = project_priority(corner1, corner2, rate_pair);
    trace.weight[k] = proj.weight;
    trace.off_segment_rel[k] = proj.off_segment_rel;
    if (proj.off_segment_rel > segment_rel_tol) ++trace.flagged_knots;
  }
  return trace;
}

PolicyComparison compare_policies(const ScenarioConfig& raw, const SolverOptions& opts) {
  const ScenarioConfig cfg = validate_scenario(raw);
  PolicyComparison out;

  const Solution joint = solve_scenario(cfg, opts);
  out.joint_feasible = joint.stats.status == TerminationStatus::optimal;
  if (out.joint_feasible) {
    const EnergyBreakdown e = evaluate_energy(cfg, joint);
    out.joint_energy_j = e.total_j;
    out.joint_transmission_j = e.total_transmission_j;
    out.joint_propulsion_j = e.total_propulsion_j;
  } else if (joint.stats.status == TerminationStatus::infeasible) {
    out.notes += "joint policy infeasible: " + joint.stats.message + "; ";
  }

  // Fixed-speed policy: cruise at the required mean speed.
  ScenarioConfig fixed = cfg;
  bool fixed_ok = true;
  for (auto& n : fixed.nodes) {
    const double mean = std::abs(n.q_final_m - n.q_init_m) / fixed.horizon_s;
    if (mean < n.v_min_mps - 1e-12 || mean > n.v_max_mps + 1e-12) {
      fixed_ok = false;
      out.notes += "fixed-speed policy needs a cruise speed outside the node's bounds; ";
      break;
    }
    n.v_min_mps = n.v_max_mps = n.v_init_mps = mean;
  }
  if (fixed_ok) {
    const Solution fixed_sol = fixed_speed_solution(fixed, opts);
    out.fixed_feasible = fixed_sol.stats.status == TerminationStatus::optimal;
    if (out.fixed_feasible) {
      const EnergyBreakdown e = evaluate_energy(fixed, fixed_sol);
      out.fixed_energy_j = e.total_j;
      out.fixed_transmission_j = e.total_transmission_j;
      out.fixed_propulsion_j = e.total_propulsion_j;
    } else if (fixed_sol.stats.status == TerminationStatus::infeasible) {
      out.notes += "fixed-speed policy infeasible: " + fixed_sol.stats.message + "; ";
    }

    double fixed_max = 0.0;
    for (int id = 1; id <= fixed.node_count(); ++id) {
      if (fixed.links_from(id).empty()) continue;
      fixed_max += max_feasible_data(fixed_speed_profile(fixed, id), fixed.node(id).p_max_w,
                                     fixed.channel.noise_power_w,
                                     fixed.bandwidth_for_receiver(kAccessPointId));
    }
    if (fixed.node_count() > 1) {
      out.notes += "fixed-speed max data sums single-user link capacities; ";
    }
    out.fixed_max_data_bits = fixed_max;
  }

  const Solution max_sol = solve(build_program(cfg, ProgramGoal::max_data), opts);
  if (max_sol.stats.status == TerminationStatus::optimal) {
    out.variable_max_data_bits = -max_sol.objective_value / kMaxDataObjectiveScale;
  } else {
    out.notes += "maximum-throughput solve did not converge; ";
  }
  if (out.fixed_max_data_bits > 0.0 && out.variable_max_data_bits > 0.0) {
    out.uplift_ratio = out.variable_max_data_bits / out.fixed_max_data_bits;
  }
  return out;
}

double energy_vs_baseline(const Solution& solution, const ScenarioConfig& raw) {
  const ScenarioConfig cfg = validate_scenario(raw);
  const EnergyBreakdown breakdown = evaluate_energy(cfg, solution);
  double extra = 0.0;
  for (const NodeEnergy& e : breakdown.nodes) extra += e.extra_propulsion_j;
  return extra;
}

}  // namespace macflow
