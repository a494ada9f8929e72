#include "macflow.h"

#include <cmath>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "json.hpp"
#include "macflow/analysis.hpp"
#include "macflow/baselines.hpp"
#include "macflow/errors.hpp"
#include "macflow/prng.hpp"
#include "macflow/scenario_io.hpp"
#include "macflow/solver.hpp"
#include "macflow/transcription.hpp"

using nlohmann::json;

struct mf_scenario {
  macflow::ScenarioConfig cfg;
};

struct mf_solution {
  macflow::ScenarioConfig cfg;
  macflow::Solution solution;
  macflow::EnergyBreakdown energy;
  bool compare_policies = false;
  bool report_units = false;
  macflow::SolverOptions opts;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

char* dup_string(const std::string& s) {
  char* out = new (std::nothrow) char[s.size() + 1];
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

mf_status to_status(const std::exception& e) {
  set_error(e.what());
  if (dynamic_cast<const macflow::ValidationError*>(&e)) return MF_VALIDATION_FAILED;
  if (dynamic_cast<const macflow::InfeasibleError*>(&e)) return MF_INFEASIBLE;
  return MF_ERROR;
}

macflow::SolverOptions convert(const mf_solver_options* opts) {
  macflow::SolverOptions out;
  if (opts) {
    if (opts->kkt_tolerance > 0.0) out.kkt_tolerance = opts->kkt_tolerance;
    if (opts->max_iterations > 0) out.max_iterations = opts->max_iterations;
    if (opts->initial_barrier_weight > 0.0) out.initial_barrier_weight = opts->initial_barrier_weight;
    if (opts->barrier_reduction > 0.0 && opts->barrier_reduction < 1.0) {
      out.barrier_reduction = opts->barrier_reduction;
    }
  }
  return out;
}

template <typename Fn>
mf_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return to_status(e);
  } catch (...) {
    set_error("unknown failure");
    return MF_ERROR;
  }
}

}  // namespace

extern "C" {

const char* mf_version(void) { return "0.1.0"; }

const char* mf_last_error(void) { return g_last_error.c_str(); }

void mf_string_free(char* s) { delete[] s; }

void mf_solver_options_init(mf_solver_options* opts) {
  if (!opts) return;
  const macflow::SolverOptions d;
  opts->kkt_tolerance = d.kkt_tolerance;
  opts->max_iterations = d.max_iterations;
  opts->initial_barrier_weight = d.initial_barrier_weight;
  opts->barrier_reduction = d.barrier_reduction;
  opts->compare_policies = 0;
  opts->report_units = 0;
}

mf_status mf_scenario_from_file(const char* path, mf_scenario** out) {
  if (!path || !out) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  return guarded([&]() {
    try {
      auto cfg = macflow::load_scenario(path);
      *out = new mf_scenario{std::move(cfg)};
      return MF_OK;
    } catch (const macflow::ValidationError& e) {
      if (std::string(e.what()).find("cannot open") != std::string::npos) {
        set_error(e.what());
        return MF_IO_ERROR;
      }
      throw;
    }
  });
}

mf_status mf_scenario_from_json(const char* json_text, mf_scenario** out) {
  if (!json_text || !out) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  return guarded([&]() {
    *out = new mf_scenario{macflow::scenario_from_json_text(json_text)};
    return MF_OK;
  });
}

void mf_scenario_free(mf_scenario* scenario) { delete scenario; }

mf_status mf_scenario_canonical_json(const mf_scenario* scenario, char** out_json) {
  if (!scenario || !out_json) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  return guarded([&]() {
    *out_json = dup_string(macflow::canonical_json(scenario->cfg));
    return *out_json ? MF_OK : MF_ERROR;
  });
}

mf_status mf_scenario_hash(const mf_scenario* scenario, uint64_t* out_hash) {
  if (!scenario || !out_hash) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  return guarded([&]() {
    *out_hash = macflow::config_hash(scenario->cfg);
    return MF_OK;
  });
}

mf_status mf_scenario_set_gain(mf_scenario* scenario, double antenna_gain_product) {
  if (!scenario) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  if (!(antenna_gain_product > 0.0)) {
    set_error("antenna gain product must be positive");
    return MF_INVALID_ARGUMENT;
  }
  scenario->cfg.channel.antenna_gain_product = antenna_gain_product;
  return MF_OK;
}

mf_status mf_scenario_node_count(const mf_scenario* scenario, int* out_count) {
  if (!scenario || !out_count) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  *out_count = scenario->cfg.node_count();
  return MF_OK;
}

mf_status mf_solve(const mf_scenario* scenario, const mf_solver_options* opts, mf_solution** out) {
  if (!scenario || !out) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  return guarded([&]() {
    auto handle = std::make_unique<mf_solution>();
    handle->cfg = scenario->cfg;
    handle->opts = convert(opts);
    handle->compare_policies = opts && opts->compare_policies;
    handle->report_units = opts && opts->report_units;
    handle->solution = macflow::solve_scenario(handle->cfg, handle->opts);
    handle->energy = macflow::evaluate_energy(handle->cfg, handle->solution);
    *out = handle.release();
    return MF_OK;
  });
}

mf_termination mf_solution_status(const mf_solution* solution) {
  if (!solution) return MF_TERM_NUMERICAL;
  switch (solution->solution.stats.status) {
    case macflow::TerminationStatus::optimal: return MF_TERM_OPTIMAL;
    case macflow::TerminationStatus::max_iterations: return MF_TERM_MAX_ITERATIONS;
    case macflow::TerminationStatus::infeasible: return MF_TERM_INFEASIBLE;
    case macflow::TerminationStatus::numerical_failure: return MF_TERM_NUMERICAL;
  }
  return MF_TERM_NUMERICAL;
}

double mf_solution_objective(const mf_solution* solution) {
  return solution ? solution->solution.objective_value : 0.0;
}

mf_status mf_solution_message(const mf_solution* solution, char** out_message) {
  if (!solution || !out_message) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  *out_message = dup_string(solution->solution.stats.message);
  return *out_message ? MF_OK : MF_ERROR;
}

mf_status mf_solution_csv(const mf_solution* solution, char** out_csv) {
  if (!solution || !out_csv) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  return guarded([&]() {
    *out_csv = dup_string(macflow::solution_csv(solution->cfg, solution->solution));
    return *out_csv ? MF_OK : MF_ERROR;
  });
}

mf_status mf_solution_summary_json(const mf_solution* solution, char** out_json) {
  if (!solution || !out_json) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  return guarded([&]() {
    const macflow::ScenarioConfig cfg = macflow::validate_scenario(solution->cfg);
    macflow::PriorityTrace trace;
    const macflow::PriorityTrace* trace_ptr = nullptr;
    if (cfg.node_count() == 2 && !cfg.relaying_enabled &&
        cfg.links_to(macflow::kAccessPointId).size() == 2 &&
        solution->solution.stats.status == macflow::TerminationStatus::optimal) {
      trace = macflow::priority_trace(solution->solution, cfg);
      trace_ptr = &trace;
    }
    macflow::PolicyComparison comparison;
    const macflow::PolicyComparison* comparison_ptr = nullptr;
    if (solution->compare_policies) {
      comparison = macflow::compare_policies(cfg, solution->opts);
      comparison_ptr = &comparison;
    }
    *out_json = dup_string(macflow::summary_json(cfg, solution->solution, solution->energy,
                                                 trace_ptr, comparison_ptr,
                                                 solution->report_units));
    return *out_json ? MF_OK : MF_ERROR;
  });
}

void mf_solution_free(mf_solution* solution) { delete solution; }

mf_status mf_water_filling_json(const mf_scenario* scenario, char** out_json) {
  if (!scenario || !out_json) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  return guarded([&]() {
    const macflow::ScenarioConfig cfg = macflow::validate_scenario(scenario->cfg);
    const macflow::LinkProfile profile = macflow::fixed_speed_profile(cfg, 1);
    const macflow::NodeParams& n = cfg.node(1);
    const macflow::WaterFillingResult wf =
        macflow::water_filling(profile, n.initial_data_bits, n.p_max_w,
                               cfg.channel.noise_power_w,
                               cfg.bandwidth_for_receiver(macflow::kAccessPointId));
    const double dt = profile.knot_times_s[1] - profile.knot_times_s[0];
    json doc = {{"water_level", wf.water_level},
                {"delivered_bits", wf.delivered_bits},
                {"transmission_j", macflow::trapezoid(wf.power_w, dt)},
                {"knot_times_s", profile.knot_times_s},
                {"power_w", wf.power_w},
                {"rate_bps", wf.rate_bps}};
    *out_json = dup_string(doc.dump(2));
    return *out_json ? MF_OK : MF_ERROR;
  });
}

mf_status mf_max_feasible_data(const mf_scenario* scenario, double* out_bits) {
  if (!scenario || !out_bits) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  return guarded([&]() {
    const macflow::ScenarioConfig cfg = macflow::validate_scenario(scenario->cfg);
    const macflow::NodeParams& n = cfg.node(1);
    *out_bits = macflow::max_feasible_data(
        macflow::fixed_speed_profile(cfg, 1), n.p_max_w, cfg.channel.noise_power_w,
        cfg.bandwidth_for_receiver(macflow::kAccessPointId));
    return MF_OK;
  });
}

mf_status mf_oracle_json(const mf_scenario* scenario, int speed_grid_points,
                         int power_grid_points, const mf_solver_options* opts, char** out_json) {
  if (!scenario || !out_json) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  return guarded([&]() {
    const macflow::ScenarioConfig cfg = macflow::validate_scenario(scenario->cfg);
    const macflow::OracleResult oracle =
        macflow::brute_force_oracle(cfg, speed_grid_points, power_grid_points);
    const macflow::Solution sol = macflow::solve_scenario(cfg, convert(opts));
    const macflow::EnergyBreakdown energy = macflow::evaluate_energy(cfg, sol);
    const double solver_energy = energy.total_transmission_j + energy.total_propulsion_j;
    json doc = {{"oracle_energy_j", oracle.energy_j},
                {"oracle_transmission_j", oracle.transmission_j},
                {"oracle_propulsion_j", oracle.propulsion_j},
                {"profiles_evaluated", oracle.profiles_evaluated},
                {"profiles_feasible", oracle.profiles_feasible},
                {"solver_energy_j", solver_energy},
                {"solver_status", macflow::to_string(sol.stats.status)},
                {"ratio", solver_energy > 0.0 ? oracle.energy_j / solver_energy : 0.0}};
    *out_json = dup_string(doc.dump(2));
    return *out_json ? MF_OK : MF_ERROR;
  });
}

mf_status mf_calibrate_gain(const mf_scenario* scenario, double target_bits, double* out_gain) {
  if (!scenario || !out_gain) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  return guarded([&]() {
    *out_gain = macflow::calibrate_gain(scenario->cfg, target_bits);
    return MF_OK;
  });
}

mf_status mf_check_json(const mf_scenario* scenario, char** out_json) {
  if (!scenario || !out_json) {
    set_error("null argument");
    return MF_INVALID_ARGUMENT;
  }
  return guarded([&]() {
    const macflow::ScenarioConfig cfg = macflow::validate_scenario(scenario->cfg);
    const macflow::ConvexProgram prog =
        macflow::build_program(cfg, macflow::ProgramGoal::min_energy);

    // Deterministic interior points: box variables inside their bounds,
    // positions spread over the travel range.
    macflow::Prng rng(0xc0ffee11ULL);
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<double> x(prog.variable_count());
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double lb = prog.lower_bounds[i];
        const double ub = prog.upper_bounds[i];
        const macflow::VariableRef& ref = prog.layout.ref(i);
        if (std::isfinite(lb) && std::isfinite(ub)) {
          x[i] = lb + (ub - lb) * rng.uniform(0.25, 0.75);
        } else if (ref.kind == macflow::Quantity::position) {
          const macflow::NodeParams& n = cfg.node(ref.node);
          x[i] = std::min(n.q_init_m, n.q_final_m) +
                 std::abs(n.q_final_m - n.q_init_m) * rng.uniform(0.1, 0.9);
        } else if (std::isfinite(lb)) {
          x[i] = lb + (1.0 + std::abs(lb)) * rng.uniform(0.5, 1.5);
        } else {
          x[i] = rng.uniform(-1.0, 1.0);
        }
      }
      worst = std::max(worst, macflow::derivative_check(prog, x));
    }
    json doc = {{"valid", true},
                {"variables", prog.variable_count()},
                {"equalities", prog.equalities.size()},
                {"capacity_rows", prog.capacity.size()},
                {"derivative_max_rel_error", worst}};
    *out_json = dup_string(doc.dump(2));
    return *out_json ? MF_OK : MF_ERROR;
  });
}

}  // extern "C"
