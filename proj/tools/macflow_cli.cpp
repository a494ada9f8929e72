// Command-line front end. Deliberately built against the public C interface
// only (macflow.h), the same surface other language bindings would use.

#include <chrono>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "macflow.h"

namespace {

namespace fs = std::filesystem;

struct ScenarioHandle {
  mf_scenario* ptr = nullptr;
  ~ScenarioHandle() { mf_scenario_free(ptr); }
};

struct SolutionHandle {
  mf_solution* ptr = nullptr;
  ~SolutionHandle() { mf_solution_free(ptr); }
};

struct OwnedString {
  char* ptr = nullptr;
  ~OwnedString() { mf_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

int fail(const std::string& context) {
  std::cerr << "error: " << context << ": " << mf_last_error() << "\n";
  return 1;
}

bool write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return false;
    out << content;
    if (!out) return false;
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  return !ec;
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  return out;
}

int run_solve(const std::string& scenario_path, const std::string& out_dir,
              const mf_solver_options& opts) {
  ScenarioHandle scenario;
  if (mf_scenario_from_file(scenario_path.c_str(), &scenario.ptr) != MF_OK) {
    return fail("loading scenario '" + scenario_path + "'");
  }

  SolutionHandle solution;
  const mf_status rc = mf_solve(scenario.ptr, &opts, &solution.ptr);
  if (rc == MF_INFEASIBLE) {
    // Boundary data that is impossible before any solve begins (for example
    // an endpoint no admissible speed can reach) is still an infeasibility.
    std::cout << "infeasible: " << mf_last_error() << "\n";
    return 2;
  }
  if (rc != MF_OK) {
    return fail("solving scenario");
  }
  const mf_termination status = mf_solution_status(solution.ptr);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    std::cerr << "error: cannot create output directory '" << out_dir << "'\n";
    return 1;
  }

  OwnedString csv;
  if (mf_solution_csv(solution.ptr, &csv.ptr) != MF_OK) return fail("rendering solution.csv");
  OwnedString summary;
  if (mf_solution_summary_json(solution.ptr, &summary.ptr) != MF_OK) {
    return fail("rendering summary.json");
  }
  OwnedString message;
  mf_solution_message(solution.ptr, &message.ptr);
  uint64_t hash = 0;
  mf_scenario_hash(scenario.ptr, &hash);

  const char* status_name = status == MF_TERM_OPTIMAL        ? "optimal"
                            : status == MF_TERM_INFEASIBLE   ? "infeasible"
                            : status == MF_TERM_MAX_ITERATIONS ? "max_iterations"
                                                               : "numerical_failure";
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016" PRIx64, hash);
  std::ostringstream manifest;
  manifest << "{\n"
           << "  \"scenario_path\": \"" << json_escape(scenario_path) << "\",\n"
           << "  \"config_hash\": \"" << hash_hex << "\",\n"
           << "  \"output_directory\": \"" << json_escape(out_dir) << "\",\n"
           << "  \"kkt_tolerance\": " << opts.kkt_tolerance << ",\n"
           << "  \"max_iterations\": " << opts.max_iterations << ",\n"
           << "  \"timestamp_utc\": \"" << timestamp_utc() << "\",\n"
           << "  \"termination\": \"" << status_name << "\"\n"
           << "}\n";

  const fs::path dir(out_dir);
  if (!write_file_atomic(dir / "solution.csv", csv.str()) ||
      !write_file_atomic(dir / "summary.json", summary.str()) ||
      !write_file_atomic(dir / "manifest.json", manifest.str())) {
    std::cerr << "error: cannot write outputs under '" << out_dir << "'\n";
    return 1;
  }

  if (status == MF_TERM_OPTIMAL) {
    std::cout << "optimal: objective " << mf_solution_objective(solution.ptr) << " J, outputs in "
              << out_dir << "\n";
    return 0;
  }
  if (status == MF_TERM_INFEASIBLE) {
    std::cout << "infeasible: " << message.str() << "\n";
    return 2;
  }
  std::cerr << "solver did not reach optimality (" << status_name << "): " << message.str() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint transmission and motion energy optimizer"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir = "out";
  mf_solver_options opts;
  mf_solver_options_init(&opts);

  auto add_solver_flags = [&opts](CLI::App* cmd) {
    cmd->add_option("--kkt-tol", opts.kkt_tolerance, "scaled KKT tolerance");
    cmd->add_option("--max-iter", opts.max_iterations, "Newton iteration budget");
  };

  CLI::App* solve = app.add_subcommand("solve", "solve a scenario and write solution artifacts");
  solve->add_option("scenario", scenario_path, "scenario JSON path")->required();
  solve->add_option("-o,--out", out_dir, "output directory");
  bool compare = false;
  solve->add_flag("--compare-policies", compare, "include the fixed-vs-variable-speed comparison");
  std::string units = "si";
  solve->add_option("--units", units, "si: SI only; report: add kJ/MB/km-h conveniences")
      ->check(CLI::IsMember({"si", "report"}));
  add_solver_flags(solve);

  CLI::App* baseline = app.add_subcommand("baseline", "water-filling powers on the fixed trajectory");
  baseline->add_option("scenario", scenario_path, "scenario JSON path")->required();

  CLI::App* oracle = app.add_subcommand("oracle", "brute-force a tiny instance and compare");
  oracle->add_option("scenario", scenario_path, "scenario JSON path")->required();
  int speed_grid = 20;
  int power_grid = 20;
  oracle->add_option("--speed-grid", speed_grid, "speed grid points per free knot");
  oracle->add_option("--power-grid", power_grid, "perturbation grid for the power check");
  add_solver_flags(oracle);

  CLI::App* calibrate = app.add_subcommand("calibrate", "fit the antenna gain product");
  calibrate->add_option("scenario", scenario_path, "scenario JSON path")->required();
  double target_mb = 56.0;
  calibrate->add_option("--target-mb", target_mb, "fixed-speed maximum data target [MB]");

  CLI::App* check = app.add_subcommand("check", "validate a scenario and check derivatives");
  check->add_option("scenario", scenario_path, "scenario JSON path")->required();

  CLI11_PARSE(app, argc, argv);

  if (solve->parsed()) {
    opts.compare_policies = compare ? 1 : 0;
    opts.report_units = units == "report" ? 1 : 0;
    return run_solve(scenario_path, out_dir, opts);
  }

  ScenarioHandle scenario;
  if (mf_scenario_from_file(scenario_path.c_str(), &scenario.ptr) != MF_OK) {
    return fail("loading scenario '" + scenario_path + "'");
  }

  if (baseline->parsed()) {
    OwnedString out;
    const mf_status rc = mf_water_filling_json(scenario.ptr, &out.ptr);
    if (rc == MF_INFEASIBLE) {
      std::cout << "infeasible: " << mf_last_error() << "\n";
      return 2;
    }
    if (rc != MF_OK) return fail("water filling");
    std::cout << out.str() << "\n";
    return 0;
  }
  if (oracle->parsed()) {
    OwnedString out;
    if (mf_oracle_json(scenario.ptr, speed_grid, power_grid, &opts, &out.ptr) != MF_OK) {
      return fail("oracle");
    }
    std::cout << out.str() << "\n";
    return 0;
  }
  if (calibrate->parsed()) {
    double gain = 0.0;
    if (mf_calibrate_gain(scenario.ptr, target_mb * 8e6, &gain) != MF_OK) {
      return fail("calibration");
    }
    std::printf("antenna_gain_product: %.12g\n", gain);
    return 0;
  }
  if (check->parsed()) {
    OwnedString out;
    if (mf_check_json(scenario.ptr, &out.ptr) != MF_OK) return fail("check");
    std::cout << out.str() << "\n";
    return 0;
  }
  return 1;
}
