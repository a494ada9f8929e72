/*
 * macflow: joint transmission-power and speed-profile optimization for
 * small mobile networks offloading data to a stationary access point.
 *
 * C interface: opaque handles plus status codes. All functions returning
 * mf_status leave outputs untouched on failure; mf_last_error() describes
 * the most recent failure on the calling thread. Strings returned through
 * char** outputs are heap-allocated and released with mf_string_free().
 */
#ifndef MACFLOW_H
#define MACFLOW_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mf_status {
  MF_OK = 0,
  MF_ERROR = 1,             /* unexpected internal failure */
  MF_INVALID_ARGUMENT = 2,  /* null handle, bad parameter */
  MF_VALIDATION_FAILED = 3, /* scenario violates its invariants */
  MF_INFEASIBLE = 4,        /* requested data or boundary conditions unreachable */
  MF_IO_ERROR = 5           /* file not readable/writable */
} mf_status;

/* Termination status of a solve, mf_solution_status(). */
typedef enum mf_termination {
  MF_TERM_OPTIMAL = 0,
  MF_TERM_MAX_ITERATIONS = 1,
  MF_TERM_INFEASIBLE = 2,
  MF_TERM_NUMERICAL = 3
} mf_termination;

typedef struct mf_scenario mf_scenario;
typedef struct mf_solution mf_solution;

typedef struct mf_solver_options {
  double kkt_tolerance;          /* scaled KKT target, default 1e-8 */
  int max_iterations;            /* Newton iteration budget, default 200 */
  double initial_barrier_weight; /* default 0.1 */
  double barrier_reduction;      /* stage shrink factor, default 0.2 */
  int compare_policies;          /* include policy comparison in the summary */
  int report_units;              /* add kJ/MB/km-h conveniences to the summary */
} mf_solver_options;

const char* mf_version(void);
const char* mf_last_error(void);
void mf_string_free(char* s);

void mf_solver_options_init(mf_solver_options* opts);

/* --- scenarios ---------------------------------------------------------- */

mf_status mf_scenario_from_file(const char* path, mf_scenario** out);
mf_status mf_scenario_from_json(const char* json_text, mf_scenario** out);
void mf_scenario_free(mf_scenario* scenario);

mf_status mf_scenario_canonical_json(const mf_scenario* scenario, char** out_json);
mf_status mf_scenario_hash(const mf_scenario* scenario, uint64_t* out_hash);
mf_status mf_scenario_set_gain(mf_scenario* scenario, double antenna_gain_product);
mf_status mf_scenario_node_count(const mf_scenario* scenario, int* out_count);

/* --- solving ------------------------------------------------------------ */

/* Runs the full joint optimization. Returns MF_OK with a solution handle for
 * every solver outcome (including infeasible); inspect mf_solution_status. */
mf_status mf_solve(const mf_scenario* scenario, const mf_solver_options* opts, mf_solution** out);

mf_termination mf_solution_status(const mf_solution* solution);
double mf_solution_objective(const mf_solution* solution);
mf_status mf_solution_message(const mf_solution* solution, char** out_message);

/* Trajectory table; byte-identical across repeated identical runs. */
mf_status mf_solution_csv(const mf_solution* solution, char** out_csv);

/* Energy breakdown, solver statistics, priority trace (two-node MAC runs),
 * and optionally the policy comparison, as a JSON document. */
mf_status mf_solution_summary_json(const mf_solution* solution, char** out_json);

void mf_solution_free(mf_solution* solution);

/* --- baselines and checks ------------------------------------------------ */

/* Water-filling power schedule for node 1 over its fixed mean-speed
 * trajectory. JSON: water level, per-knot powers/rates, delivered bits. */
mf_status mf_water_filling_json(const mf_scenario* scenario, char** out_json);

/* Bits deliverable at full power over the fixed mean-speed trajectory. */
mf_status mf_max_feasible_data(const mf_scenario* scenario, double* out_bits);

/* Exhaustive tiny-instance search (single node, at most 4 intervals) plus a
 * solver run on the same grid; JSON compares the two energies. */
mf_status mf_oracle_json(const mf_scenario* scenario, int speed_grid_points,
                         int power_grid_points, const mf_solver_options* opts, char** out_json);

/* Antenna gain product that makes the fixed-speed profile deliver target_bits. */
mf_status mf_calibrate_gain(const mf_scenario* scenario, double target_bits, double* out_gain);

/* Scenario validation plus a derivative check of the transcribed program at
 * deterministic interior points; JSON report. */
mf_status mf_check_json(const mf_scenario* scenario, char** out_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MACFLOW_H */
