#include "macflow/capacity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "macflow/errors.hpp"

namespace macflow {

namespace {

void check_nonnegative(std::span<const double> powers, std::span<const double> rates) {
  for (double p : powers) {
    if (p < 0.0) throw std::domain_error("transmit power must be non-negative");
  }
  for (double r : rates) {
    if (r < 0.0) throw std::domain_error("rate must be non-negative");
  }
}

}  // namespace

double constraint_residual(const CapacitySubsetConstraint& c, std::span<const double> gains,
                           std::span<const double> powers, std::span<const double> rates,
                           double noise_power_w) {
  check_nonnegative(powers, rates);
  double rate_sum = 0.0;
  double snr_sum = 0.0;
  for (std::size_t idx : c.subset_idx) {
    rate_sum += rates[idx];
    snr_sum += gains[idx] * powers[idx] / noise_power_w;
  }
  return rate_sum - shannon_rate_bps(c.bandwidth_hz, snr_sum);
}

std::vector<CapacitySubsetConstraint> enumerate_constraints(int receiver,
                                                            std::span<const int> transmitter_ids,
                                                            double bandwidth_hz,
                                                            std::size_t max_transmitters) {
  const std::size_t n = transmitter_ids.size();
  if (n == 0) throw std::invalid_argument("transmitter set must not be empty");
  if (n > max_transmitters) {
    throw std::length_error("MAC with " + std::to_string(n) +
                            " transmitters exceeds the subset-constraint cap of " +
                            std::to_string(max_transmitters));
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return transmitter_ids[a] < transmitter_ids[b]; });

  std::vector<std::vector<std::size_t>> subsets;
  subsets.reserve((std::size_t{1} << n) - 1);
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    std::vector<std::size_t> members;
    for (std::size_t bit = 0; bit < n; ++bit) {
      if (mask & (std::size_t{1} << bit)) members.push_back(order[bit]);
    }
    subsets.push_back(std::move(members));
  }
  std::sort(subsets.begin(), subsets.end(), [&](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (transmitter_ids[a[i]] != transmitter_ids[b[i]]) {
        return transmitter_ids[a[i]] < transmitter_ids[b[i]];
      }
    }
    return false;
  });

  std::vector<CapacitySubsetConstraint> out;
  out.reserve(subsets.size());
  for (auto& members : subsets) {
    CapacitySubsetConstraint c;
    c.receiver = receiver;
    c.bandwidth_hz = bandwidth_hz;
    c.subset_idx = std::move(members);
    for (std::size_t idx : c.subset_idx) c.subset_ids.push_back(transmitter_ids[idx]);
    out.push_back(std::move(c));
  }
  return out;
}

bool region_contains(std::span<const double> gains, std::span<const double> powers,
                     std::span<const double> rates, double noise_power_w, double bandwidth_hz,
                     double rel_tol) {
  std::vector<int> ids(gains.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i + 1);
  const double tol = rel_tol * bandwidth_hz;
  for (const auto& c : enumerate_constraints(0, ids, bandwidth_hz)) {
    if (constraint_residual(c, gains, powers, rates, noise_power_w) > tol) return false;
  }
  return true;
}

RateCorner corner_rates(std::span<const std::size_t> decoding_order, std::span<const double> gains,
                        std::span<const double> powers, double noise_power_w, double bandwidth_hz) {
  const std::size_t n = gains.size();
  if (decoding_order.size() != n) {
    throw std::invalid_argument("decoding order size must match transmitter count");
  }
  RateCorner corner;
  corner.rates_bps.assign(n, 0.0);
  corner.decoding_order.assign(decoding_order.begin(), decoding_order.end());

  // Walking the order backwards accumulates the interference still undecoded
  // when each transmitter is processed.
  double interference_w = 0.0;
  std::vector<double> rates(n, 0.0);
  for (std::size_t pos = n; pos-- > 0;) {
    const std::size_t idx = decoding_order[pos];
    const double received = gains[idx] * powers[idx];
    rates[idx] = shannon_rate_bps(bandwidth_hz, received / (noise_power_w + interference_w));
    interference_w += received;
  }
  corner.rates_bps = std::move(rates);
  return corner;
}

std::pair<RateCorner, RateCorner> two_user_corners(double gain1, double gain2, double p1, double p2,
                                                   double noise_power_w, double bandwidth_hz) {
  check_nonnegative(std::array{p1, p2}, {});
  const double gains[] = {gain1, gain2};
  const double powers[] = {p1, p2};
  const std::size_t user2_first[] = {1, 0};  // user 1 decoded last
  const std::size_t user1_first[] = {0, 1};  // user 2 decoded last
  return {corner_rates(user2_first, gains, powers, noise_power_w, bandwidth_hz),
          corner_rates(user1_first, gains, powers, noise_power_w, bandwidth_hz)};
}

PriorityProjection project_priority(const RateCorner& corner1, const RateCorner& corner2,
                                    std::span<const double> rate_pair) {
  if (corner1.rates_bps.size() != 2 || corner2.rates_bps.size() != 2 || rate_pair.size() != 2) {
    throw std::invalid_argument("priority projection is defined for two-user corners");
  }
  const double dx = corner1.rates_bps[0] - corner2.rates_bps[0];
  const double dy = corner1.rates_bps[1] - corner2.rates_bps[1];
  const double len_sq = dx * dx + dy * dy;
  const double scale = std::max({std::abs(corner1.rates_bps[0]), std::abs(corner1.rates_bps[1]),
                                 std::abs(corner2.rates_bps[0]), std::abs(corner2.rates_bps[1]), 1.0});

  PriorityProjection out;
  const double ex = rate_pair[0] - corner2.rates_bps[0];
  const double ey = rate_pair[1] - corner2.rates_bps[1];
  if (len_sq <= scale * scale * 1e-28) {
    // Degenerate segment (both corners coincide, e.g. one power is zero).
    out.weight = 0.0;
    out.off_segment_rel = std::hypot(ex, ey) / scale;
    return out;
  }
  const double t = (ex * dx + ey * dy) / len_sq;
  const double clamped = std::clamp(t, 0.0, 1.0);
  const double px = corner2.rates_bps[0] + clamped * dx;
  const double py = corner2.rates_bps[1] + clamped * dy;
  out.weight = clamped;
  out.off_segment_rel = std::hypot(rate_pair[0] - px, rate_pair[1] - py) / std::sqrt(len_sq);
  return out;
}

double decoding_priority(const RateCorner& corner1, const RateCorner& corner2,
                         std::span<const double> rate_pair, double rel_tol) {
  const PriorityProjection proj = project_priority(corner1, corner2, rate_pair);
  if (proj.off_segment_rel > rel_tol) {
    throw OffBoundaryError("rate pair lies off the sum-rate segment (relative distance " +
                               std::to_string(proj.off_segment_rel) + ")",
                           proj.off_segment_rel);
  }
  return proj.weight;
}

}  // namespace macflow
