#include <cmath>

#include "doctest.h"
#include "macflow/errors.hpp"
#include "macflow/model.hpp"
#include "macflow/prng.hpp"
#include "test_support.hpp"

using namespace macflow;

TEST_SUITE_BEGIN("model");

TEST_CASE("channel gain matches hand evaluations") {
  ChannelParams ch;
  ch.antenna_gain_product = 1.0;
  ch.path_loss_exponent = 1.5;

  CHECK(channel_gain(ch, {1.0, 0.0, 0.0}) == doctest::Approx(1.0));
  CHECK(channel_gain(ch, {1000.0, 0.0, 0.0}) == doctest::Approx(1e-9).epsilon(1e-12));
  CHECK(channel_gain(ch, {1000.0, 1000.0, 0.0}) == doctest::Approx(3.5355339e-10).epsilon(1e-7));

  ch.path_loss_exponent = 2.7;
  CHECK(channel_gain(ch, {1.0, 0.0, 0.0}) == doctest::Approx(1.0));
}

TEST_CASE("channel gain is singular at zero separation") {
  ChannelParams ch;
  CHECK_THROWS_AS(channel_gain(ch, {0.0, 0.0, 0.0}), std::domain_error);
}

TEST_CASE("channel gain monotone in each coordinate and scales by 2^(-2a)") {
  ChannelParams ch;
  ch.antenna_gain_product = 3.0;
  ch.path_loss_exponent = 1.5;
  Prng rng(7);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(1.0, 5000.0);
    const double d = rng.uniform(0.0, 5000.0);
    const double q = rng.uniform(-20000.0, 20000.0);
    const double base = channel_gain(ch, {a, d, q});
    CHECK(channel_gain(ch, {a * 1.5, d, q}) <= base);
    CHECK(channel_gain(ch, {a, d + 10.0, q}) <= base);
    CHECK(channel_gain(ch, {a, d, q * 1.5}) <= base + 1e-300);
    const double doubled = channel_gain(ch, {2.0 * a, 2.0 * d, 2.0 * q});
    CHECK(doubled == doctest::Approx(base * std::pow(2.0, -2.0 * ch.path_loss_exponent)).epsilon(1e-12));
  }
}

TEST_CASE("drag force values") {
  DragModel paper{9.26e-4, 2250.0};
  // Minimum-drag speed (C2/C1)^(1/4) and the 65 km/h cruise point.
  const double v_min_drag = std::pow(2250.0 / 9.26e-4, 0.25);
  CHECK(v_min_drag == doctest::Approx(39.48).epsilon(1e-3));
  CHECK(drag_force(paper, v_min_drag) == doctest::Approx(2.8869).epsilon(1e-4));
  CHECK(drag_force(paper, 65.0 / 3.6) == doctest::Approx(7.20365).epsilon(1e-5));
  CHECK(drag_force({1.0, 0.0}, 2.0) == doctest::Approx(4.0));
}

TEST_CASE("drag force domain errors") {
  DragModel d{1e-3, 100.0};
  CHECK_THROWS_AS(drag_force(d, -1.0), std::domain_error);
  CHECK_THROWS_AS(drag_force(d, 0.0), std::domain_error);
  CHECK(drag_force({1e-3, 0.0}, 0.0) == 0.0);
}

TEST_CASE("speed times drag is midpoint convex") {
  DragModel paper{9.26e-4, 2250.0};
  Prng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const double v1 = rng.uniform(1e-3, 200.0);
    const double v2 = rng.uniform(1e-3, 200.0);
    const double mid = 0.5 * (v1 + v2);
    const double lhs = mid * drag_force(paper, mid);
    const double rhs = 0.5 * (v1 * drag_force(paper, v1) + v2 * drag_force(paper, v2));
    CHECK(lhs <= rhs + 1e-9 * (1.0 + std::abs(rhs)));
  }
}

TEST_CASE("drag coefficients from physical parameters") {
  const DragModel d1 = drag_from_physical(1.225, 0.1, 1.0, 1.0, 10.0, 5.0);
  CHECK(d1.parasitic_coeff == doctest::Approx(0.061250).epsilon(1e-9));

  const DragModel d2 = drag_from_physical(1.225, 0.05, 2.0, 1.0, 10.0, 5.0);
  CHECK(d2.parasitic_coeff == doctest::Approx(d1.parasitic_coeff).epsilon(1e-12));

  const DragModel d3 = drag_from_physical(1.225, 0.1, 0.5, 0.9, 6.0, 3.0);
  CHECK(d3.induced_coeff == doctest::Approx(166.71).epsilon(1e-3));

  CHECK_THROWS_AS(drag_from_physical(0.0, 0.1, 1.0, 1.0, 10.0, 5.0), ValidationError);
}

TEST_CASE("physical drag round-trips against the two-term force expression") {
  Prng rng(13);
  for (int i = 0; i < 200; ++i) {
    const double rho = rng.uniform(0.5, 2.0);
    const double cd0 = rng.uniform(0.01, 0.3);
    const double S = rng.uniform(0.2, 4.0);
    const double e0 = rng.uniform(0.6, 1.0);
    const double ar = rng.uniform(4.0, 20.0);
    const double m = rng.uniform(0.5, 30.0);
    const double v = rng.uniform(5.0, 80.0);
    const DragModel d = drag_from_physical(rho, cd0, S, e0, ar, m);
    const double lift = m * kStandardGravity;
    const double direct = 0.5 * rho * cd0 * S * v * v +
                          2.0 * lift * lift / (M_PI * e0 * ar * rho * S * v * v);
    CHECK(drag_force(d, v) == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("propulsion power values") {
  DragModel paper{9.26e-4, 2250.0};
  CHECK(propulsion_power(paper, 3.0, 65.0 / 3.6, 0.0) == doctest::Approx(130.066).epsilon(1e-4));
  const double v = 22.0;
  CHECK(propulsion_power(paper, 5.0, v, -drag_force(paper, v) / 5.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(propulsion_power({0.0, 0.0}, 2.0, 3.0, 1.0) == doctest::Approx(6.0));
}

TEST_CASE("level-flight power has its minimum at (C2/3C1)^(1/4)") {
  DragModel paper{9.26e-4, 2250.0};
  const double expected = std::pow(2250.0 / (3.0 * 9.26e-4), 0.25);

  // Golden-section search over [1, 200] as the independent oracle.
  double a = 1.0, b = 200.0;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  auto power = [&](double v) { return propulsion_power(paper, 3.0, v, 0.0); };
  for (int i = 0; i < 200; ++i) {
    if (power(c) < power(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - phi * (b - a);
    d = a + phi * (b - a);
  }
  CHECK(0.5 * (a + b) == doctest::Approx(expected).epsilon(1e-6));
  CHECK(expected == doctest::Approx(29.9994).epsilon(1e-4));
}

TEST_CASE("scenario validation accepts the reference configs") {
  CHECK_NOTHROW(validate_scenario(testing::single_node_scenario()));
  CHECK_NOTHROW(validate_scenario(testing::two_node_scenario()));

  const ScenarioConfig cfg = validate_scenario(testing::single_node_scenario());
  CHECK(cfg.topology.size() == 1);  // default direct link added
  CHECK(cfg.topology[0] == Link{1, 0});
  CHECK(cfg.bandwidth_for_receiver(0) == doctest::Approx(1e5));
}

TEST_CASE("scenario validation reports every violation") {
  ScenarioConfig cfg = testing::single_node_scenario();
  cfg.nodes[0].v_min_mps = 20.0;
  cfg.nodes[0].v_max_mps = 10.0;
  cfg.nodes[0].initial_data_bits = 9e9;  // above the 8e9 buffer
  const auto issues = scenario_issues(cfg);
  CHECK(issues.size() >= 3);  // v range, v_init containment, buffer overflow
  CHECK_THROWS_AS(validate_scenario(cfg), ValidationError);
}

TEST_CASE("node-to-node links require relaying") {
  ScenarioConfig cfg = testing::two_node_scenario();
  cfg.topology = {{1, 0}, {2, 0}, {1, 2}};
  cfg.relaying_enabled = false;
  CHECK_THROWS_AS(validate_scenario(cfg), ValidationError);
  cfg.relaying_enabled = true;
  CHECK_NOTHROW(validate_scenario(cfg));
}

TEST_SUITE_END();
