#include "macflow/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "macflow/capacity.hpp"
#include "macflow/errors.hpp"

namespace macflow {

namespace {

double profile_dt(const LinkProfile& profile) {
  if (profile.knot_times_s.size() < 2) return 0.0;
  return profile.knot_times_s[1] - profile.knot_times_s[0];
}

std::vector<double> rates_for_level(const LinkProfile& profile, double level, double p_max_w,
                                    double noise_power_w, double bandwidth_hz,
                                    std::vector<double>* powers = nullptr) {
  std::vector<double> rates(profile.gains.size());
  if (powers) powers->resize(profile.gains.size());
  for (std::size_t k = 0; k < profile.gains.size(); ++k) {
    const double g = profile.gains[k];
    const double p = std::clamp(level - noise_power_w / g, 0.0, p_max_w);
    if (powers) (*powers)[k] = p;
    rates[k] = shannon_rate_bps(bandwidth_hz, g * p / noise_power_w);
  }
  return rates;
}

}  // namespace

double max_feasible_data(const LinkProfile& profile, double p_max_w, double noise_power_w,
                         double bandwidth_hz) {
  std::vector<double> rates(profile.gains.size());
  for (std::size_t k = 0; k < profile.gains.size(); ++k) {
    rates[k] = shannon_rate_bps(bandwidth_hz, profile.gains[k] * p_max_w / noise_power_w);
  }
  return trapezoid(rates, profile_dt(profile));
}

WaterFillingResult water_filling(const LinkProfile& profile, double data_bits, double p_max_w,
                                 double noise_power_w, double bandwidth_hz) {
  if (profile.gains.size() < 2) throw std::invalid_argument("profile needs at least two knots");
  for (std::size_t k = 1; k < profile.knot_times_s.size(); ++k) {
    if (!(profile.knot_times_s[k] > profile.knot_times_s[k - 1])) {
      throw std::invalid_argument("profile times must be strictly increasing");
    }
  }
  for (double g : profile.gains) {
    if (!(g > 0.0)) throw std::invalid_argument("profile gains must be positive");
  }
  const double dt = profile_dt(profile);
  const double max_bits = max_feasible_data(profile, p_max_w, noise_power_w, bandwidth_hz);
  if (data_bits > max_bits) {
    throw InfeasibleError("requested " + std::to_string(data_bits) +
                              " bits exceed the profile's maximum of " + std::to_string(max_bits),
                          max_bits);
  }

  WaterFillingResult out;
  if (data_bits <= 0.0) {
    out.power_w.assign(profile.gains.size(), 0.0);
    out.rate_bps.assign(profile.gains.size(), 0.0);
    out.water_level = noise_power_w / *std::max_element(profile.gains.begin(), profile.gains.end());
    out.delivered_bits = 0.0;
    return out;
  }

  double lo = 0.0;
  double hi = 0.0;
  for (double g : profile.gains) hi = std::max(hi, noise_power_w / g);
  hi += p_max_w;  // saturates every knot
  for (int it = 0; it < 200 && (hi - lo) > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double bits =
        trapezoid(rates_for_level(profile, mid, p_max_w, noise_power_w, bandwidth_hz), dt);
    (bits < data_bits ? lo : hi) = mid;
  }
  out.water_level = hi;
  out.rate_bps = rates_for_level(profile, hi, p_max_w, noise_power_w, bandwidth_hz, &out.power_w);
  out.delivered_bits = trapezoid(out.rate_bps, dt);
  return out;
}

LinkProfile fixed_speed_profile(const ScenarioConfig& raw, int node_id) {
  const ScenarioConfig cfg = validate_scenario(raw);
  const NodeParams& n = cfg.node(node_id);
  const int K = cfg.knot_count;
  const double h = cfg.horizon_s / K;
  const double mean = std::abs(n.q_final_m - n.q_init_m) / cfg.horizon_s;
  LinkProfile profile;
  profile.knot_times_s.resize(static_cast<std::size_t>(K) + 1);
  profile.gains.resize(static_cast<std::size_t>(K) + 1);
  for (int k = 0; k <= K; ++k) {
    const double t = h * k;
    const double q = n.q_init_m + n.direction * mean * t;
    profile.knot_times_s[static_cast<std::size_t>(k)] = t;
    profile.gains[static_cast<std::size_t>(k)] =
        channel_gain(cfg.channel, link_geometry(cfg, node_id, kAccessPointId, q, 0.0));
  }
  return profile;
}

double calibrate_gain(const ScenarioConfig& raw, double target_bits) {
  if (!(target_bits > 0.0)) throw std::invalid_argument("calibration target must be positive");
  ScenarioConfig cfg = validate_scenario(raw);
  const NodeParams& n = cfg.node(1);

  auto bits_for = [&](double gain) {
    cfg.channel.antenna_gain_product = gain;
    const LinkProfile profile = fixed_speed_profile(cfg, 1);
    return max_feasible_data(profile, n.p_max_w, cfg.channel.noise_power_w,
                             cfg.bandwidth_for_receiver(kAccessPointId));
  };

  double lo = 1.0;
  double hi = 1.0;
  for (int it = 0; it < 80 && bits_for(lo) > target_bits; ++it) lo *= 0.25;
  for (int it = 0; it < 80 && bits_for(hi) < target_bits; ++it) hi *= 4.0;
  if (bits_for(lo) > target_bits || bits_for(hi) < target_bits) {
    throw InfeasibleError("calibration target is not bracketable in gain");
  }
  for (int it = 0; it < 200 && (hi - lo) > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (bits_for(mid) < target_bits ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

OracleResult brute_force_oracle(const ScenarioConfig& raw, int speed_grid_points,
                                int power_grid_points) {
  const ScenarioConfig cfg = validate_scenario(raw);
  if (cfg.node_count() != 1) throw std::invalid_argument("oracle handles a single node");
  if (cfg.knot_count > 4) throw std::invalid_argument("oracle is limited to 4 intervals");
  if (speed_grid_points < 1 || speed_grid_points > 50 || power_grid_points < 0 ||
      power_grid_points > 50) {
    throw std::invalid_argument("oracle grids are limited to 50 points");
  }
  const NodeParams& n = cfg.node(1);
  const int K = cfg.knot_count;
  const double h = cfg.horizon_s / K;
  const double bandwidth = cfg.bandwidth_for_receiver(kAccessPointId);

  std::vector<double> grid(static_cast<std::size_t>(speed_grid_points));
  if (speed_grid_points == 1) {
    grid[0] = 0.5 * (n.v_min_mps + n.v_max_mps);
  } else {
    for (int i = 0; i < speed_grid_points; ++i) {
      grid[static_cast<std::size_t>(i)] =
          n.v_min_mps + (n.v_max_mps - n.v_min_mps) * i / (speed_grid_points - 1);
    }
  }

  const double dist = std::abs(n.q_final_m - n.q_init_m);
  OracleResult best;
  best.energy_j = kInf;

  std::vector<double> v(static_cast<std::size_t>(K) + 1);
  v[0] = n.v_init_mps;
  // Indices run over the interior knots 1..K-1; the final speed is whatever
  // closes the distance constraint, kept only if it lies within bounds.
  std::vector<int> idx(static_cast<std::size_t>(std::max(K - 1, 0)), 0);
  bool done = K <= 1;
  while (!done) {
    for (int k = 1; k < K; ++k) v[static_cast<std::size_t>(k)] = grid[static_cast<std::size_t>(idx[static_cast<std::size_t>(k - 1)])];
    double partial = 0.5 * v[0];
    for (int k = 1; k < K; ++k) partial += v[static_cast<std::size_t>(k)];
    const double v_last = 2.0 * (dist / h - partial);
    ++best.profiles_evaluated;
    const double v_slack = 1e-9 * (1.0 + n.v_max_mps);
    if (v_last >= n.v_min_mps - v_slack && v_last <= n.v_max_mps + v_slack) {
      v[static_cast<std::size_t>(K)] = std::clamp(v_last, n.v_min_mps, n.v_max_mps);

      LinkProfile profile;
      profile.knot_times_s.resize(v.size());
      profile.gains.resize(v.size());
      double q = n.q_init_m;
      for (int k = 0; k <= K; ++k) {
        profile.knot_times_s[static_cast<std::size_t>(k)] = h * k;
        if (k > 0) {
          q += 0.5 * h * n.direction * (v[static_cast<std::size_t>(k - 1)] + v[static_cast<std::size_t>(k)]);
        }
        profile.gains[static_cast<std::size_t>(k)] =
            channel_gain(cfg.channel, link_geometry(cfg, 1, kAccessPointId, q, 0.0));
      }

      bool feasible = true;
      WaterFillingResult wf;
      try {
        wf = water_filling(profile, n.initial_data_bits, n.p_max_w, cfg.channel.noise_power_w,
                           bandwidth);
      } catch (const InfeasibleError&) {
        feasible = false;
      }
      if (feasible) {
        ++best.profiles_feasible;
        std::vector<double> drag_work(v.size());
        for (std::size_t k = 0; k < v.size(); ++k) drag_work[k] = v[k] * drag_force(cfg.drag, v[k]);
        const double propulsion = trapezoid(drag_work, h) +
                                  0.5 * n.mass_kg * (v.back() * v.back() - v.front() * v.front());
        const double transmission = trapezoid(wf.power_w, h);
        const double total = transmission + propulsion;
        if (total < best.energy_j) {
          best.energy_j = total;
          best.transmission_j = transmission;
          best.propulsion_j = propulsion;
          best.speed_mps = v;
          best.power_w = wf.power_w;
        }
      }
    }
    // Advance the mixed-radix profile counter.
    done = true;
    for (std::size_t d = 0; d < idx.size(); ++d) {
      if (++idx[d] < speed_grid_points) {
        done = false;
        break;
      }
      idx[d] = 0;
    }
  }

  if (!std::isfinite(best.energy_j)) {
    throw InfeasibleError("no gridded speed profile meets the endpoint and data constraints");
  }

  // First-order sanity sweep of the winning schedule: moving power between a
  // gridded pair of knots (delivered bits held fixed) must not reduce energy.
  if (power_grid_points > 1 && n.initial_data_bits > 0.0) {
    LinkProfile profile;
    profile.knot_times_s.resize(best.speed_mps.size());
    profile.gains.resize(best.speed_mps.size());
    double q = n.q_init_m;
    for (int k = 0; k <= K; ++k) {
      profile.knot_times_s[static_cast<std::size_t>(k)] = h * k;
      if (k > 0) {
        q += 0.5 * h * n.direction *
             (best.speed_mps[static_cast<std::size_t>(k - 1)] + best.speed_mps[static_cast<std::size_t>(k)]);
      }
      profile.gains[static_cast<std::size_t>(k)] =
          channel_gain(cfg.channel, link_geometry(cfg, 1, kAccessPointId, q, 0.0));
    }
    const WaterFillingResult wf = water_filling(profile, n.initial_data_bits, n.p_max_w,
                                                cfg.channel.noise_power_w, bandwidth);
    for (int a = 0; a < power_grid_points; ++a) {
      for (int b = 0; b < power_grid_points; ++b) {
        const std::size_t ka = static_cast<std::size_t>(a) * K / power_grid_points;
        const std::size_t kb = static_cast<std::size_t>(b) * K / power_grid_points;
        if (ka == kb) continue;
        // Trade rate between knots ka and kb holding delivered bits fixed
        // (the compensation is weighted by the trapezoid weights).
        const double delta_rate = 1e-4 * bandwidth;
        auto power_for = [&](std::size_t k, double rate) {
          return (std::exp2(rate / bandwidth) - 1.0) * cfg.channel.noise_power_w / profile.gains[k];
        };
        const double w_a = (ka == 0 || ka == static_cast<std::size_t>(K)) ? 0.5 * h : h;
        const double w_b = (kb == 0 || kb == static_cast<std::size_t>(K)) ? 0.5 * h : h;
        const double ra = wf.rate_bps[ka] + delta_rate;
        const double rb = wf.rate_bps[kb] - delta_rate * w_a / w_b;
        if (rb < 0.0) continue;
        const double pa = power_for(ka, ra);
        const double pb = power_for(kb, rb);
        if (pa > n.p_max_w) continue;
        const double change = w_a * (pa - wf.power_w[ka]) + w_b * (pb - wf.power_w[kb]);
        if (change < -1e-6 * (1.0 + best.transmission_j)) {
          throw std::runtime_error("water-filling schedule failed its perturbation check");
        }
      }
    }
  }
  return best;
}

Solution fixed_speed_solution(const ScenarioConfig& raw, const SolverOptions& opts) {
  const ScenarioConfig cfg = validate_scenario(raw);
  for (int id = 1; id <= cfg.node_count(); ++id) {
    if (cfg.node(id).v_min_mps != cfg.node(id).v_max_mps) {
      throw std::invalid_argument("fixed-speed solve requires v_min == v_max for every node");
    }
  }
  return solve_scenario(cfg, opts);
}

}  // namespace macflow
