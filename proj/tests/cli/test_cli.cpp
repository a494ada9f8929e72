// End-to-end checks of the command-line tool: spawns the real binary and
// inspects exit codes and artifacts.

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void expect(bool ok, const std::string& what) {
  std::cout << (ok ? "ok   " : "FAIL ") << what << "\n";
  if (!ok) ++failures;
}

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run(const std::string& command) {
  RunResult result;
  FILE* pipe = popen((command + " 2>&1").c_str(), "r");
  if (!pipe) return result;
  std::array<char, 4096> buf;
  while (fgets(buf.data(), buf.size(), pipe)) result.output += buf.data();
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  const std::string cli = MACFLOW_CLI_PATH;
  const std::string scenarios = MACFLOW_SCENARIO_DIR;
  const fs::path work = fs::temp_directory_path() / "macflow_cli_test";
  fs::remove_all(work);
  fs::create_directories(work);

  {
    const auto r = run(cli + " solve " + scenarios + "/tiny_oracle.json -o " + (work / "a").string());
    expect(r.exit_code == 0, "solve exits 0 on an optimal run");
    expect(fs::exists(work / "a" / "solution.csv"), "solution.csv written");
    expect(fs::exists(work / "a" / "summary.json"), "summary.json written");
    expect(fs::exists(work / "a" / "manifest.json"), "manifest.json written");

    const std::string csv = slurp(work / "a" / "solution.csv");
    std::size_t rows = 0;
    for (char c : csv) rows += c == '\n';
    expect(rows == 5, "CSV has a header plus one row per knot");

    const std::string manifest = slurp(work / "a" / "manifest.json");
    expect(manifest.find("\"termination\": \"optimal\"") != std::string::npos,
           "manifest records the termination status");
    expect(manifest.find("\"config_hash\"") != std::string::npos,
           "manifest records the config hash");
  }

  {
    const auto again = run(cli + " solve " + scenarios + "/tiny_oracle.json -o " + (work / "b").string());
    expect(again.exit_code == 0, "repeat solve exits 0");
    expect(slurp(work / "a" / "solution.csv") == slurp(work / "b" / "solution.csv"),
           "repeated runs produce byte-identical solution.csv");
  }

  {
    // An undeliverable load: the tiny fixture tops out near 1.9e8 bits.
    const fs::path bad = work / "too_much.json";
    std::string text = slurp(scenarios + "/tiny_oracle.json");
    const auto pos = text.find("\"initial_data\": 8.0e7");
    text.replace(pos, std::string("\"initial_data\": 8.0e7").size(), "\"initial_data\": 9.9e8");
    std::ofstream(bad) << text;
    const auto r = run(cli + " solve " + bad.string() + " -o " + (work / "c").string());
    expect(r.exit_code == 2, "solve exits 2 on an infeasible load");
    expect(r.output.find("infeasible") != std::string::npos, "infeasibility is reported");
  }

  {
    // Endpoint unreachable at any admissible speed: infeasible before solving.
    const fs::path bad = work / "too_fast.json";
    std::string text = slurp(scenarios + "/tiny_oracle.json");
    const auto pos = text.find("\"v_max\": 27.77777777777778");
    text.replace(pos, std::string("\"v_max\": 27.77777777777778").size(), "\"v_max\": 12.0");
    const auto pos2 = text.find("\"v_init\": 18.055555555555557");
    text.replace(pos2, std::string("\"v_init\": 18.055555555555557").size(), "\"v_init\": 12.0");
    std::ofstream(bad) << text;
    const auto r = run(cli + " solve " + bad.string() + " -o " + (work / "d").string());
    expect(r.exit_code == 2, "solve exits 2 when the endpoint is kinematically unreachable");
  }

  {
    const auto r = run(cli + " solve " + (work / "missing.json").string());
    expect(r.exit_code == 1, "solve exits 1 on a missing scenario");
  }

  {
    const fs::path bad = work / "invalid.json";
    std::ofstream(bad) << "{\"horizon\": -5}";
    const auto r = run(cli + " solve " + bad.string());
    expect(r.exit_code == 1, "solve exits 1 on a scenario that fails validation");
  }

  {
    const auto r = run(cli + " baseline " + scenarios + "/two_node_fixed.json");
    expect(r.exit_code == 0, "baseline exits 0");
    expect(r.output.find("water_level") != std::string::npos, "baseline prints the water level");
  }

  {
    const auto r = run(cli + " oracle " + scenarios + "/tiny_oracle.json");
    expect(r.exit_code == 0, "oracle exits 0");
    expect(r.output.find("oracle_energy_j") != std::string::npos &&
               r.output.find("solver_energy_j") != std::string::npos &&
               r.output.find("ratio") != std::string::npos,
           "oracle prints both energies and their ratio");
  }

  {
    const auto r = run(cli + " calibrate " + scenarios + "/single_node.json --target-mb 56");
    expect(r.exit_code == 0, "calibrate exits 0");
    expect(r.output.find("antenna_gain_product:") != std::string::npos,
           "calibrate prints the fitted gain");
  }

  {
    const auto r = run(cli + " check " + scenarios + "/single_node.json");
    expect(r.exit_code == 0, "check exits 0");
    expect(r.output.find("derivative_max_rel_error") != std::string::npos,
           "check reports the derivative comparison");
  }

  std::cout << (failures == 0 ? "all command-line checks passed\n"
                              : "command-line checks FAILED\n");
  return failures == 0 ? 0 : 1;
}
