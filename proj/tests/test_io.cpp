#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "macflow/errors.hpp"
#include "macflow/scenario_io.hpp"
#include "macflow/solver.hpp"
#include "test_support.hpp"

using namespace macflow;

TEST_SUITE_BEGIN("io");

namespace {

const char* kMinimalScenario = R"({
  "horizon": 1200.0,
  "knot_count": 20,
  "channel": {
    "path_loss_exponent": 1.5,
    "noise_power": 1e-10,
    "bandwidth_per_receiver": 1e5
  },
  "drag": {"parasitic_coefficient": 9.26e-4, "induced_coefficient": 2250.0},
  "nodes": [{
    "mass": 3.0, "altitude": 1000.0, "initial_data": 2e8, "buffer_capacity": 8e9,
    "v_min": 8.3333, "v_max": 27.7778, "v_init": 18.0556,
    "q_init": -10833.3, "q_final": 10833.3, "p_max": 100.0
  }]
})";

}  // namespace

TEST_CASE("scenario JSON round trip") {
  const ScenarioConfig cfg = scenario_from_json_text(kMinimalScenario);
  CHECK(cfg.node_count() == 1);
  CHECK(cfg.channel.antenna_gain_product == 1.0);  // default
  CHECK(cfg.topology.size() == 1);                 // default direct link
  CHECK(cfg.nodes[0].direction == 1);              // inferred

  const std::string canonical = canonical_json(cfg);
  const ScenarioConfig again = scenario_from_json_text(canonical);
  CHECK(canonical_json(again) == canonical);
  CHECK(config_hash(again) == config_hash(cfg));
}

TEST_CASE("hash is sensitive to every field") {
  const ScenarioConfig base = scenario_from_json_text(kMinimalScenario);
  ScenarioConfig tweaked = base;
  tweaked.nodes[0].initial_data_bits += 1.0;
  CHECK(config_hash(base) != config_hash(tweaked));
  tweaked = base;
  tweaked.channel.antenna_gain_product = 1.5;
  CHECK(config_hash(base) != config_hash(tweaked));
}

TEST_CASE("malformed scenarios raise validation errors") {
  CHECK_THROWS_AS(scenario_from_json_text("not json"), ValidationError);
  CHECK_THROWS_AS(scenario_from_json_text("{}"), ValidationError);
  CHECK_THROWS_AS(scenario_from_json_text(R"({"horizon": "late"})"), ValidationError);

  std::string bad = kMinimalScenario;
  const auto pos = bad.find("\"v_min\": 8.3333");
  bad.replace(pos, 15, "\"v_min\": 30.0");
  CHECK_THROWS_AS(scenario_from_json_text(bad), ValidationError);
}

TEST_CASE("solution CSV layout") {
  ScenarioConfig cfg = testing::single_node_scenario(2e8, 10);
  const Solution sol = solve_scenario(cfg);
  REQUIRE(sol.stats.status == TerminationStatus::optimal);
  const std::string csv = solution_csv(cfg, sol);

  // Header plus one row per knot.
  std::size_t rows = 0;
  for (char c : csv) rows += c == '\n';
  CHECK(rows == static_cast<std::size_t>(cfg.knot_count) + 2);
  CHECK(csv.rfind("t_s,u1_p_W_to_ap,u1_r_bps_to_ap,u1_s_bits,u1_q_m,u1_v_mps,u1_F_N\n", 0) == 0);
  CHECK(csv.find("nan") == std::string::npos);
  CHECK(csv.find("inf") == std::string::npos);

  SUBCASE("deterministic bytes across repeated solves") {
    const Solution again = solve_scenario(cfg);
    CHECK(solution_csv(cfg, again) == csv);
  }
}

TEST_CASE("shipped fixture scenarios load, validate and stay consistent") {
  const std::string dir = MACFLOW_SCENARIO_DIR;
  const ScenarioConfig single = load_scenario(dir + "/single_node.json");
  CHECK(single.node_count() == 1);
  CHECK(single.knot_count == 200);
  CHECK(single.nodes[0].initial_data_bits == doctest::Approx(6e8));

  const ScenarioConfig two = load_scenario(dir + "/two_node_fixed.json");
  CHECK(two.node_count() == 2);
  CHECK(two.nodes[0].v_min_mps == two.nodes[0].v_max_mps);
  CHECK(two.nodes[1].lateral_offset_m == doctest::Approx(1000.0));
  CHECK(two.channel.antenna_gain_product ==
        doctest::Approx(single.channel.antenna_gain_product));

  const ScenarioConfig tiny = load_scenario(dir + "/tiny_oracle.json");
  CHECK(tiny.knot_count <= 4);

  // The recorded calibration matches the gain baked into the fixtures.
  std::ifstream calib(dir + "/calibration.json");
  REQUIRE(calib.good());
  std::ostringstream ss;
  ss << calib.rdbuf();
  const std::string text = ss.str();
  CHECK(text.find("1.00172827695") != std::string::npos);
  CHECK(single.channel.antenna_gain_product == doctest::Approx(1.00172827695).epsilon(1e-12));
}

TEST_CASE("summary JSON carries energies, stats and delivered bits") {
  ScenarioConfig cfg = testing::single_node_scenario(2e8, 20);
  const Solution sol = solve_scenario(cfg);
  REQUIRE(sol.stats.status == TerminationStatus::optimal);
  const EnergyBreakdown energy = evaluate_energy(cfg, sol);
  const std::string text = summary_json(cfg, sol, energy, nullptr, nullptr, true);
  CHECK(text.find("\"status\": \"optimal\"") != std::string::npos);
  CHECK(text.find("\"transmission_j\"") != std::string::npos);
  CHECK(text.find("\"delivered_bits\"") != std::string::npos);
  CHECK(text.find("\"report\"") != std::string::npos);  // unit conveniences requested
}

TEST_SUITE_END();
