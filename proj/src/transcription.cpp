#include "macflow/transcription.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "macflow/capacity.hpp"
#include "macflow/errors.hpp"

namespace macflow {

std::string to_string(TerminationStatus s) {
  switch (s) {
    case TerminationStatus::optimal: return "optimal";
    case TerminationStatus::max_iterations: return "max_iterations";
    case TerminationStatus::infeasible: return "infeasible";
    case TerminationStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

double trapezoid(std::span<const double> values, double dt_s) {
  if (values.size() < 2) return 0.0;
  double sum = 0.5 * (values.front() + values.back());
  for (std::size_t k = 1; k + 1 < values.size(); ++k) sum += values[k];
  return sum * dt_s;
}

namespace {

double required_mean_speed(const NodeParams& n, double horizon_s) {
  return std::abs(n.q_final_m - n.q_init_m) / horizon_s;
}

void check_kinematics(const ScenarioConfig& cfg) {
  for (int id = 1; id <= cfg.node_count(); ++id) {
    const NodeParams& n = cfg.node(id);
    const double mean = required_mean_speed(n, cfg.horizon_s);
    const double slack = 1e-9 * (1.0 + n.v_max_mps);
    if (mean < n.v_min_mps - slack || mean > n.v_max_mps + slack) {
      throw InfeasibleError("node " + std::to_string(id) + " must average " +
                            std::to_string(mean) + " m/s to reach its endpoint, outside [" +
                            std::to_string(n.v_min_mps) + ", " + std::to_string(n.v_max_mps) + "]");
    }
  }
}

}  // namespace

ConvexProgram build_program(const ScenarioConfig& raw, ProgramGoal goal) {
  ConvexProgram prog;
  prog.scenario = validate_scenario(raw);
  prog.goal = goal;
  const ScenarioConfig& cfg = prog.scenario;
  check_kinematics(cfg);

  prog.layout = VariableLayout(cfg);
  const int K = cfg.knot_count;
  const double h = cfg.horizon_s / K;
  prog.knot_times_s.resize(static_cast<std::size_t>(K) + 1);
  for (int k = 0; k <= K; ++k) prog.knot_times_s[static_cast<std::size_t>(k)] = h * k;

  const VariableLayout& lay = prog.layout;
  auto weight = [&](int k) { return (k == 0 || k == K) ? 0.5 * h : h; };

  // Bounds.
  prog.lower_bounds.assign(lay.size(), -kInf);
  prog.upper_bounds.assign(lay.size(), kInf);
  for (std::size_t i = 0; i < lay.size(); ++i) {
    const VariableRef& ref = lay.ref(i);
    const NodeParams& n = cfg.node(ref.node);
    switch (ref.kind) {
      case Quantity::link_power:
        prog.lower_bounds[i] = 0.0;
        prog.upper_bounds[i] = n.p_max_w;
        break;
      case Quantity::link_rate:
        prog.lower_bounds[i] = 0.0;
        break;
      case Quantity::buffer:
        prog.lower_bounds[i] = 0.0;
        prog.upper_bounds[i] = n.buffer_capacity_bits;
        break;
      case Quantity::position:
        break;
      case Quantity::speed:
        prog.lower_bounds[i] = n.v_min_mps;
        prog.upper_bounds[i] = n.v_max_mps;
        break;
    }
  }

  // A node that starts empty and can receive nothing never transmits; pin its
  // buffer and outgoing rates so the barrier is not started on that boundary.
  if (goal == ProgramGoal::min_energy) {
    for (int id = 1; id <= cfg.node_count(); ++id) {
      if (cfg.node(id).initial_data_bits == 0.0 && cfg.links_to(id).empty()) {
        for (int k = 0; k <= K; ++k) {
          prog.upper_bounds[lay.index(id, Quantity::buffer, k)] = 0.0;
          for (int to : lay.links_of(id)) {
            prog.upper_bounds[lay.index(id, Quantity::link_rate, k, to)] = 0.0;
          }
        }
      }
    }
  }

  // Objective.
  if (goal == ProgramGoal::min_energy) {
    for (int id = 1; id <= cfg.node_count(); ++id) {
      const NodeParams& n = cfg.node(id);
      for (int k = 0; k <= K; ++k) {
        for (int to : lay.links_of(id)) {
          prog.objective.linear.push_back({lay.index(id, Quantity::link_power, k, to), weight(k)});
        }
        prog.objective.speed_terms.push_back(
            {lay.index(id, Quantity::speed, k), weight(k), cfg.drag});
      }
      prog.objective.quad_terms.push_back(
          {lay.index(id, Quantity::speed, K), 0.5 * n.mass_kg});
    }
  } else {
    for (const Link& l : cfg.links_to(kAccessPointId)) {
      for (int k = 0; k <= K; ++k) {
        prog.objective.linear.push_back(
            {lay.index(l.from, Quantity::link_rate, k, l.to), -weight(k) * kMaxDataObjectiveScale});
      }
    }
  }

  // Equalities: dynamics and boundary conditions.
  auto add_eq = [&prog](LinearConstraint c) { prog.equalities.push_back(std::move(c)); };
  for (int id = 1; id <= cfg.node_count(); ++id) {
    const NodeParams& n = cfg.node(id);

    if (goal == ProgramGoal::min_energy) {
      const auto inflows = cfg.links_to(id);
      for (int k = 0; k < K; ++k) {
        LinearConstraint c;
        c.label = "buffer_dynamics node=" + std::to_string(id) + " k=" + std::to_string(k);
        c.knot_lo = k;
        c.knot_hi = k + 1;
        c.terms.push_back({lay.index(id, Quantity::buffer, k + 1), 1.0});
        c.terms.push_back({lay.index(id, Quantity::buffer, k), -1.0});
        for (int kk : {k, k + 1}) {
          for (const Link& l : inflows) {
            c.terms.push_back({lay.index(l.from, Quantity::link_rate, kk, id), -0.5 * h});
          }
          for (int to : lay.links_of(id)) {
            c.terms.push_back({lay.index(id, Quantity::link_rate, kk, to), 0.5 * h});
          }
        }
        add_eq(std::move(c));
      }
      add_eq({{{lay.index(id, Quantity::buffer, 0), 1.0}}, n.initial_data_bits, 0, 0,
              "buffer_initial node=" + std::to_string(id)});
      add_eq({{{lay.index(id, Quantity::buffer, K), 1.0}}, 0.0, K, K,
              "buffer_final node=" + std::to_string(id)});
    }

    for (int k = 0; k < K; ++k) {
      LinearConstraint c;
      c.label = "position_dynamics node=" + std::to_string(id) + " k=" + std::to_string(k);
      c.knot_lo = k;
      c.knot_hi = k + 1;
      c.terms.push_back({lay.index(id, Quantity::position, k + 1), 1.0});
      c.terms.push_back({lay.index(id, Quantity::position, k), -1.0});
      c.terms.push_back({lay.index(id, Quantity::speed, k), -0.5 * h * n.direction});
      c.terms.push_back({lay.index(id, Quantity::speed, k + 1), -0.5 * h * n.direction});
      add_eq(std::move(c));
    }
    add_eq({{{lay.index(id, Quantity::position, 0), 1.0}}, n.q_init_m, 0, 0,
            "position_initial node=" + std::to_string(id)});
    add_eq({{{lay.index(id, Quantity::position, K), 1.0}}, n.q_final_m, K, K,
            "position_final node=" + std::to_string(id)});
    add_eq({{{lay.index(id, Quantity::speed, 0), 1.0}}, n.v_init_mps, 0, 0,
            "speed_initial node=" + std::to_string(id)});
  }

  // Sum transmit power per node when several links share the radio.
  for (int id = 1; id <= cfg.node_count(); ++id) {
    const auto& links = lay.links_of(id);
    if (links.size() < 2) continue;
    for (int k = 0; k <= K; ++k) {
      LinearConstraint c;
      c.label = "sum_power node=" + std::to_string(id) + " k=" + std::to_string(k);
      c.knot_lo = c.knot_hi = k;
      c.rhs = cfg.node(id).p_max_w;
      for (int to : links) c.terms.push_back({lay.index(id, Quantity::link_power, k, to), 1.0});
      prog.linear_inequalities.push_back(std::move(c));
    }
  }

  // Capacity region rows: one subset inequality per receiver, subset and knot.
  for (int receiver : cfg.receivers()) {
    const auto incoming = cfg.links_to(receiver);
    std::vector<int> tx_ids;
    for (const Link& l : incoming) tx_ids.push_back(l.from);
    std::sort(tx_ids.begin(), tx_ids.end());
    const double bandwidth = cfg.bandwidth_for_receiver(receiver);
    const auto subsets = enumerate_constraints(receiver, tx_ids, bandwidth);

    for (int k = 0; k <= K; ++k) {
      for (const auto& subset : subsets) {
        CapacityConstraint c;
        c.bandwidth_hz = bandwidth;
        c.noise_power_w = cfg.channel.noise_power_w;
        c.gain = cfg.channel.antenna_gain_product;
        c.alpha = cfg.channel.path_loss_exponent;
        c.knot = k;
        c.receiver = receiver;
        c.subset_ids = subset.subset_ids;
        c.label = "capacity receiver=" + std::to_string(receiver) + " k=" + std::to_string(k) + " S={";
        for (std::size_t i = 0; i < subset.subset_ids.size(); ++i) {
          if (i) c.label += ",";
          c.label += std::to_string(subset.subset_ids[i]);
        }
        c.label += "}";
        for (int tx : subset.subset_ids) {
          CapacityTerm term;
          term.power_index = lay.index(tx, Quantity::link_power, k, receiver);
          term.rate_index = lay.index(tx, Quantity::link_rate, k, receiver);
          term.separation_m.terms.push_back({lay.index(tx, Quantity::position, k), 1.0});
          if (receiver != kAccessPointId) {
            term.separation_m.terms.push_back({lay.index(receiver, Quantity::position, k), -1.0});
          }
          const LinkGeometry geom = link_geometry(cfg, tx, receiver, 0.0, 0.0);
          term.geom_const_m2 = geom.altitude_diff_m * geom.altitude_diff_m +
                               geom.lateral_diff_m * geom.lateral_diff_m;
          c.terms.push_back(std::move(term));
        }
        prog.capacity.push_back(std::move(c));
      }
    }
  }

  return prog;
}

std::vector<double> thrust_profile(const DragModel& drag, double mass_kg,
                                   std::span<const double> speeds_mps, double dt_s) {
  const std::size_t n = speeds_mps.size();
  std::vector<double> thrust(n, 0.0);
  if (n == 0) return thrust;
  if (n == 1) {
    thrust[0] = drag_force(drag, speeds_mps[0]);
    return thrust;
  }
  for (std::size_t k = 0; k < n; ++k) {
    double accel;
    if (k == 0) {
      accel = n >= 3 ? (-3.0 * speeds_mps[0] + 4.0 * speeds_mps[1] - speeds_mps[2]) / (2.0 * dt_s)
                     : (speeds_mps[1] - speeds_mps[0]) / dt_s;
    } else if (k == n - 1) {
      accel = n >= 3
                  ? (3.0 * speeds_mps[n - 1] - 4.0 * speeds_mps[n - 2] + speeds_mps[n - 3]) / (2.0 * dt_s)
                  : (speeds_mps[n - 1] - speeds_mps[n - 2]) / dt_s;
    } else {
      accel = (speeds_mps[k + 1] - speeds_mps[k - 1]) / (2.0 * dt_s);
    }
    thrust[k] = drag_force(drag, speeds_mps[k]) + mass_kg * accel;
  }
  return thrust;
}

Solution assemble_solution(const ScenarioConfig& cfg, const ConvexProgram& program,
                           std::span<const double> x, SolveStats stats) {
  Solution sol;
  sol.knot_times_s = program.knot_times_s;
  sol.decision_vector.assign(x.begin(), x.end());
  sol.objective_value = program.objective.value(x);
  stats.objective = sol.objective_value;
  sol.stats = std::move(stats);

  const VariableLayout& lay = program.layout;
  const int K = cfg.knot_count;
  const double h = cfg.horizon_s / K;
  for (int id = 1; id <= cfg.node_count(); ++id) {
    NodeTrajectory traj;
    traj.node_id = id;
    for (int to : lay.links_of(id)) {
      LinkSeries series;
      series.from = id;
      series.to = to;
      for (int k = 0; k <= K; ++k) {
        series.power_w.push_back(x[lay.index(id, Quantity::link_power, k, to)]);
        series.rate_bps.push_back(x[lay.index(id, Quantity::link_rate, k, to)]);
      }
      traj.links.push_back(std::move(series));
    }
    for (int k = 0; k <= K; ++k) {
      traj.buffer_bits.push_back(x[lay.index(id, Quantity::buffer, k)]);
      traj.position_m.push_back(x[lay.index(id, Quantity::position, k)]);
      traj.speed_mps.push_back(x[lay.index(id, Quantity::speed, k)]);
    }
    traj.thrust_n = thrust_profile(cfg.drag, cfg.node(id).mass_kg, traj.speed_mps, h);
    sol.nodes.push_back(std::move(traj));
  }
  return sol;
}

EnergyBreakdown evaluate_energy(const ScenarioConfig& cfg, const Solution& solution) {
  EnergyBreakdown out;
  const int K = cfg.knot_count;
  const double h = cfg.horizon_s / K;
  for (const NodeTrajectory& traj : solution.nodes) {
    const NodeParams& n = cfg.node(traj.node_id);
    NodeEnergy e;
    e.node_id = traj.node_id;

    std::vector<double> total_power(static_cast<std::size_t>(K) + 1, 0.0);
    for (const LinkSeries& link : traj.links) {
      for (std::size_t k = 0; k < total_power.size(); ++k) total_power[k] += link.power_w[k];
    }
    e.transmission_j = trapezoid(total_power, h);

    std::vector<double> prop_power(traj.speed_mps.size());
    std::vector<double> drag_work(traj.speed_mps.size());
    for (std::size_t k = 0; k < traj.speed_mps.size(); ++k) {
      prop_power[k] = traj.speed_mps[k] * traj.thrust_n[k];
      drag_work[k] = traj.speed_mps[k] * drag_force(cfg.drag, traj.speed_mps[k]);
    }
    e.propulsion_j = trapezoid(prop_power, h);
    const double v0 = traj.speed_mps.front();
    const double vT = traj.speed_mps.back();
    e.kinetic_delta_j = 0.5 * n.mass_kg * (vT * vT - v0 * v0);

    const double mean = required_mean_speed(n, cfg.horizon_s);
    const double baseline = mean > 0.0 ? cfg.horizon_s * mean * drag_force(cfg.drag, mean) : 0.0;
    e.extra_propulsion_j = trapezoid(drag_work, h) - baseline;

    out.total_transmission_j += e.transmission_j;
    out.total_propulsion_j += e.propulsion_j;
    out.nodes.push_back(e);
  }
  out.total_j = out.total_transmission_j + out.total_propulsion_j;
  return out;
}

FeasibilityReport check_feasibility(const ConvexProgram& program, std::span<const double> x,
                                    double tol) {
  FeasibilityReport report;
  auto record = [&](const std::string& label, double magnitude) {
    if (magnitude > tol) report.violations.push_back({label, magnitude});
    report.max_violation = std::max(report.max_violation, magnitude);
  };

  for (const LinearConstraint& c : program.equalities) {
    double scale = 1.0 + std::abs(c.rhs);
    for (const LinearTerm& t : c.terms) {
      scale = std::max(scale,
                       std::abs(t.coeff) * quantity_unit(program.layout.ref(t.index).kind));
    }
    record(c.label, std::abs(c.evaluate(x)) / scale);
  }
  for (const LinearConstraint& c : program.linear_inequalities) {
    record(c.label, std::max(0.0, c.evaluate(x)) / (1.0 + std::abs(c.rhs)));
  }
  for (const CapacityConstraint& c : program.capacity) {
    record(c.label, std::max(0.0, c.value(x)) / c.bandwidth_hz);
  }
  for (std::size_t i = 0; i < program.layout.size(); ++i) {
    const double lb = program.lower_bounds[i];
    const double ub = program.upper_bounds[i];
    const VariableRef& ref = program.layout.ref(i);
    auto bound_label = [&](const char* side) {
      return std::string(side) + " bound node=" + std::to_string(ref.node) +
             " kind=" + std::to_string(static_cast<int>(ref.kind)) + " k=" + std::to_string(ref.knot);
    };
    if (std::isfinite(lb) && x[i] < lb) record(bound_label("lower"), (lb - x[i]) / (1.0 + std::abs(lb)));
    if (std::isfinite(ub) && x[i] > ub) record(bound_label("upper"), (x[i] - ub) / (1.0 + std::abs(ub)));
  }
  return report;
}

FeasibilityReport check_feasibility(const ScenarioConfig& cfg, const Solution& solution, double tol) {
  const ConvexProgram program = build_program(cfg, ProgramGoal::min_energy);
  if (solution.decision_vector.size() != program.variable_count()) {
    throw std::invalid_argument("solution does not match the scenario's program layout");
  }
  return check_feasibility(program, solution.decision_vector, tol);
}

}  // namespace macflow
