#include <cmath>

#include "doctest.h"
#include "macflow/baselines.hpp"
#include "macflow/capacity.hpp"
#include "macflow/errors.hpp"
#include "macflow/prng.hpp"
#include "test_support.hpp"

using namespace macflow;

TEST_SUITE_BEGIN("baselines");

namespace {

LinkProfile constant_profile(double gain, double horizon_s, int knots) {
  LinkProfile p;
  for (int k = 0; k <= knots; ++k) {
    p.knot_times_s.push_back(horizon_s * k / knots);
    p.gains.push_back(gain);
  }
  return p;
}

}  // namespace

TEST_CASE("water filling on a constant channel inverts the rate formula") {
  const double g = 1e-9, noise = 1e-10, B = 1e5, T = 1200.0;
  const LinkProfile profile = constant_profile(g, T, 100);
  const double D = 2e8;
  const auto wf = water_filling(profile, D, 100.0, noise, B);
  // Constant gain: constant power p = (2^(D/(B T)) - 1) sigma^2 / g.
  const double expected = (std::exp2(D / (B * T)) - 1.0) * noise / g;
  for (double p : wf.power_w) CHECK(p == doctest::Approx(expected).epsilon(1e-9));
  CHECK(wf.delivered_bits == doctest::Approx(D).epsilon(1e-6));
}

TEST_CASE("water filling with no data shuts off") {
  const LinkProfile profile = constant_profile(5e-10, 600.0, 40);
  const auto wf = water_filling(profile, 0.0, 100.0, 1e-10, 1e5);
  for (double p : wf.power_w) CHECK(p == 0.0);
  CHECK(wf.water_level <= 1e-10 / 5e-10 + 1e-12);
}

TEST_CASE("water filling drops the weak knot when data is scarce") {
  LinkProfile profile;
  profile.knot_times_s = {0.0, 100.0, 200.0};
  profile.gains = {1e-9, 1e-12, 1e-9};  // deep fade in the middle
  const auto wf = water_filling(profile, 1e6, 100.0, 1e-10, 1e5);
  CHECK(wf.power_w[0] > 0.0);
  CHECK(wf.power_w[1] == 0.0);
  CHECK(wf.delivered_bits == doctest::Approx(1e6).epsilon(1e-6));
}

TEST_CASE("water filling rejects undeliverable loads with the maximum") {
  const LinkProfile profile = constant_profile(1e-9, 1200.0, 50);
  const double max_bits = max_feasible_data(profile, 100.0, 1e-10, 1e5);
  try {
    water_filling(profile, 1.5 * max_bits, 100.0, 1e-10, 1e5);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    REQUIRE(e.max_deliverable_bits().has_value());
    CHECK(*e.max_deliverable_bits() == doctest::Approx(max_bits));
  }
}

TEST_CASE("water-filling schedules resist data-preserving perturbations") {
  // First-order optimality: moving rate between knots at fixed delivered bits
  // cannot reduce the energy.
  ScenarioConfig cfg = testing::single_node_scenario(2e8, 60);
  const double v = 65.0 / 3.6;
  cfg.nodes[0].v_min_mps = cfg.nodes[0].v_max_mps = cfg.nodes[0].v_init_mps = v;
  const LinkProfile profile = fixed_speed_profile(cfg, 1);
  const double noise = cfg.channel.noise_power_w, B = 1e5;
  const auto wf = water_filling(profile, 2e8, 100.0, noise, B);
  const double h = profile.knot_times_s[1] - profile.knot_times_s[0];
  const double energy = trapezoid(wf.power_w, h);

  Prng rng(91);
  const std::size_t K = profile.gains.size() - 1;
  int tested = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t a = rng.next_u64() % (K + 1);
    const std::size_t b = rng.next_u64() % (K + 1);
    if (a == b) continue;
    const double wa = (a == 0 || a == K) ? 0.5 * h : h;
    const double wb = (b == 0 || b == K) ? 0.5 * h : h;
    const double delta = rng.uniform(1.0, 1e-3 * B);
    const double ra = wf.rate_bps[a] + delta;
    const double rb = wf.rate_bps[b] - delta * wa / wb;
    if (rb < 0.0) continue;
    auto power_for = [&](std::size_t k, double rate) {
      return (std::exp2(rate / B) - 1.0) * noise / profile.gains[k];
    };
    const double pa = power_for(a, ra);
    const double pb = power_for(b, rb);
    if (pa > 100.0) continue;
    ++tested;
    const double perturbed =
        energy + wa * (pa - wf.power_w[a]) + wb * (pb - wf.power_w[b]);
    CHECK(perturbed >= energy - 1e-7 * (1.0 + energy));
  }
  CHECK(tested > 50);
}

TEST_CASE("maximum deliverable data closed form at SNR 1000") {
  const LinkProfile profile = constant_profile(1e-9, 1200.0, 80);
  const double bits = max_feasible_data(profile, 100.0, 1e-10, 1e5);
  CHECK(bits == doctest::Approx(1e5 * std::log2(1001.0) * 1200.0).epsilon(1e-12));
  CHECK(bits == doctest::Approx(1.19607e9).epsilon(1e-4));
}

TEST_CASE("maximum deliverable data is monotone in the channel quality") {
  ScenarioConfig cfg = testing::single_node_scenario(0.0, 50);
  const double v = 65.0 / 3.6;
  cfg.nodes[0].v_min_mps = cfg.nodes[0].v_max_mps = cfg.nodes[0].v_init_mps = v;
  auto bits_for = [&](double gain, double p_max, double noise, double bandwidth) {
    ScenarioConfig c = cfg;
    c.channel.antenna_gain_product = gain;
    c.channel.noise_power_w = noise;
    c.channel.bandwidth_hz = {bandwidth};
    return max_feasible_data(fixed_speed_profile(c, 1), p_max, noise, bandwidth);
  };
  const double base = bits_for(1.0, 100.0, 1e-10, 1e5);
  CHECK(bits_for(2.0, 100.0, 1e-10, 1e5) > base);
  CHECK(bits_for(1.0, 150.0, 1e-10, 1e5) > base);
  CHECK(bits_for(1.0, 100.0, 1e-10, 2e5) > base);
  CHECK(bits_for(1.0, 100.0, 2e-10, 1e5) < base);
}

TEST_CASE("gain calibration") {
  ScenarioConfig cfg = testing::single_node_scenario(6e8, 100);

  SUBCASE("the current maximum is a fixed point") {
    const double now = max_feasible_data(fixed_speed_profile(cfg, 1), 100.0,
                                         cfg.channel.noise_power_w, 1e5);
    CHECK(calibrate_gain(cfg, now) == doctest::Approx(1.0).epsilon(1e-3));
  }

  SUBCASE("doubling a low-SNR target slightly more than doubles the gain") {
    ScenarioConfig low = cfg;
    low.channel.antenna_gain_product = 1e-3;  // push links into the linear regime
    const double base_bits = max_feasible_data(fixed_speed_profile(low, 1), 100.0,
                                               low.channel.noise_power_w, 1e5);
    const double g1 = calibrate_gain(low, base_bits);
    const double g2 = calibrate_gain(low, 2.0 * base_bits);
    CHECK(g2 > 2.0 * g1 * 0.999);
    CHECK(g2 < 2.5 * g1);
  }

  SUBCASE("the 56 MB reference lands near unit gain") {
    const double g = calibrate_gain(cfg, 56.0 * 8e6);
    CHECK(g == doctest::Approx(1.0).epsilon(0.05));
  }

  CHECK_THROWS(calibrate_gain(cfg, 0.0));
}

TEST_CASE("oracle with no data reduces to the propulsion grid minimum") {
  ScenarioConfig cfg = testing::tiny_scenario(0.0, 3);
  const OracleResult oracle = brute_force_oracle(cfg, 15, 0);
  CHECK(oracle.transmission_j == doctest::Approx(0.0));
  // Exhaustive independent recomputation over the same grid.
  const NodeParams& n = cfg.nodes[0];
  const int K = cfg.knot_count;
  const double h = cfg.horizon_s / K;
  double best = kInf;
  for (int i1 = 0; i1 < 15; ++i1) {
    for (int i2 = 0; i2 < 15; ++i2) {
      std::vector<double> v = {n.v_init_mps,
                               n.v_min_mps + (n.v_max_mps - n.v_min_mps) * i1 / 14.0,
                               n.v_min_mps + (n.v_max_mps - n.v_min_mps) * i2 / 14.0, 0.0};
      const double dist = std::abs(n.q_final_m - n.q_init_m);
      v[3] = 2.0 * (dist / h - 0.5 * v[0] - v[1] - v[2]);
      if (v[3] < n.v_min_mps || v[3] > n.v_max_mps) continue;
      std::vector<double> work(v.size());
      for (std::size_t k = 0; k < v.size(); ++k) work[k] = v[k] * drag_force(cfg.drag, v[k]);
      const double e = trapezoid(work, h) +
                       0.5 * n.mass_kg * (v.back() * v.back() - v.front() * v.front());
      best = std::min(best, e);
    }
  }
  CHECK(oracle.energy_j == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("oracle with a pinned speed reduces to water filling plus cruise") {
  ScenarioConfig cfg = testing::tiny_scenario(4e7, 3);
  const double v = 65.0 / 3.6;
  cfg.nodes[0].v_min_mps = cfg.nodes[0].v_max_mps = cfg.nodes[0].v_init_mps = v;
  const OracleResult oracle = brute_force_oracle(cfg, 1, 0);
  const LinkProfile profile = fixed_speed_profile(cfg, 1);
  const auto wf = water_filling(profile, 4e7, 100.0, cfg.channel.noise_power_w, 1e5);
  const double h = cfg.horizon_s / cfg.knot_count;
  CHECK(oracle.transmission_j == doctest::Approx(trapezoid(wf.power_w, h)).epsilon(1e-9));
  CHECK(oracle.propulsion_j ==
        doctest::Approx(cfg.horizon_s * v * drag_force(cfg.drag, v)).epsilon(1e-9));
}

TEST_CASE("oracle rejects oversized instances") {
  ScenarioConfig big = testing::single_node_scenario(1e8, 10);
  CHECK_THROWS_AS(brute_force_oracle(big, 10, 10), std::invalid_argument);
  ScenarioConfig tiny = testing::tiny_scenario(1e8, 3);
  CHECK_THROWS_AS(brute_force_oracle(tiny, 60, 10), std::invalid_argument);
}

TEST_CASE("oracle brackets the solver on the tiny fixture") {
  ScenarioConfig cfg = testing::tiny_scenario(8e7, 3);
  const OracleResult oracle = brute_force_oracle(cfg, 20, 20);
  const Solution sol = solve_scenario(cfg);
  REQUIRE(sol.stats.status == TerminationStatus::optimal);
  const EnergyBreakdown e = evaluate_energy(cfg, sol);
  const double solver_energy = e.total_j;
  CHECK(solver_energy <= oracle.energy_j + 1e-6 * oracle.energy_j);
  CHECK(oracle.energy_j <= 1.02 * solver_energy);
}

TEST_CASE("fixed-speed solve requires pinned speeds") {
  ScenarioConfig cfg = testing::single_node_scenario(2e8, 20);
  CHECK_THROWS_AS(fixed_speed_solution(cfg), std::invalid_argument);
}

TEST_SUITE_END();
