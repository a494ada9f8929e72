#pragma once

#include <optional>
#include <span>
#include <vector>

#include "macflow/program.hpp"
#include "macflow/transcription.hpp"

namespace macflow {

struct SolverOptions {
  double kkt_tolerance = 1e-8;        // scaled stationarity/complementarity target
  int max_iterations = 200;           // total Newton iterations
  double initial_barrier_weight = 0.1;
  double barrier_reduction = 0.2;     // factor applied between barrier stages
  double armijo_coeff = 1e-4;
  double backtrack_ratio = 0.5;
  double min_step = 1e-14;
  bool feasibility_restoration = true;  // fall back to a max-throughput phase
                                        // when the heuristic start point fails
};

struct Multipliers {
  std::vector<double> equality;           // per program.equalities row
  std::vector<double> linear_inequality;  // per program.linear_inequalities row
  std::vector<double> capacity;           // per program.capacity row
  std::vector<double> bound_lower;        // per variable, 0 where absent
  std::vector<double> bound_upper;
};

struct KktResiduals {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;

  bool within(double tol) const {
    return stationarity <= tol && feasibility <= tol && complementarity <= tol;
  }
};

// Scaled KKT residuals at (x, multipliers): infinity norms divided by
// 1 + the largest participating term, so they are unit-free.
KktResiduals kkt_residuals(const ConvexProgram& program, std::span<const double> x,
                           const Multipliers& multipliers);

// Largest relative mismatch between analytic derivatives (objective and
// constraint gradients, Hessian-vector products) and central finite
// differences at x, which must be strictly inside the bounds.
double derivative_check(const ConvexProgram& program, std::span<const double> x,
                        double step = 1e-5);

// Deterministic strictly feasible start point, optionally along a supplied
// speed/position trajectory; nullopt when the heuristic cannot fit one.
struct TrajectoryHint {
  std::vector<std::vector<double>> speed_mps;     // per node, per knot
  std::vector<std::vector<double>> position_m;
};
std::optional<std::vector<double>> initial_point(const ConvexProgram& program,
                                                 const TrajectoryHint* hint = nullptr,
                                                 std::string* why_not = nullptr);

// Barrier interior-point solve. Deterministic: identical programs and options
// produce identical iterates. Infeasible data loads yield status infeasible
// with the computed maximum deliverable bits in the message.
Solution solve(const ConvexProgram& program, const SolverOptions& opts = {});

// build_program + solve.
Solution solve_scenario(const ScenarioConfig& cfg, const SolverOptions& opts = {});

}  // namespace macflow
