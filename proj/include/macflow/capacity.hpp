#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace macflow {

inline constexpr std::size_t kMaxMacTransmitters = 10;

// log2(1 + x) without cancellation at small x.
inline double log2_1p(double x) { return std::log1p(x) / std::log(2.0); }

inline double shannon_rate_bps(double bandwidth_hz, double snr) {
  return bandwidth_hz * log2_1p(snr);
}

// One subset inequality of a Gaussian multiple-access region: the rate sum
// over `subset` may not exceed the Shannon bound on the summed received SNR.
struct CapacitySubsetConstraint {
  int receiver = 0;
  std::vector<int> subset_ids;           // transmitter node ids, ascending
  std::vector<std::size_t> subset_idx;   // positions in the receiver's transmitter list
  double bandwidth_hz = 0.0;
};

// sum_{n in S} r_n - B*log2(1 + sum_{n in S} g_n p_n / sigma^2); <= 0 iff satisfied.
// gains/powers/rates are aligned with the receiver's transmitter list.
double constraint_residual(const CapacitySubsetConstraint& c, std::span<const double> gains,
                           std::span<const double> powers, std::span<const double> rates,
                           double noise_power_w);

// All 2^n - 1 subset constraints, ordered by subset size then lexicographically.
// Throws std::length_error past kMaxMacTransmitters (constraint count explodes).
std::vector<CapacitySubsetConstraint> enumerate_constraints(int receiver,
                                                            std::span<const int> transmitter_ids,
                                                            double bandwidth_hz,
                                                            std::size_t max_transmitters = kMaxMacTransmitters);

// True iff every subset residual is within rel_tol * bandwidth of the boundary.
bool region_contains(std::span<const double> gains, std::span<const double> powers,
                     std::span<const double> rates, double noise_power_w, double bandwidth_hz,
                     double rel_tol = 1e-9);

// A vertex of the region reached by successive decoding. decoding_order lists
// positions in the transmitter list, first decoded first; the last decoded
// transmitter sees no interference.
struct RateCorner {
  std::vector<double> rates_bps;
  std::vector<std::size_t> decoding_order;
};

RateCorner corner_rates(std::span<const std::size_t> decoding_order, std::span<const double> gains,
                        std::span<const double> powers, double noise_power_w, double bandwidth_hz);

// The two corners of a two-user region. first: user 1 decoded last (clean);
// second: user 2 decoded last.
std::pair<RateCorner, RateCorner> two_user_corners(double gain1, double gain2, double p1, double p2,
                                                   double noise_power_w, double bandwidth_hz);

struct PriorityProjection {
  double weight = 0.0;           // 1 -> first corner, 0 -> second corner
  double off_segment_rel = 0.0;  // distance from the segment over its length
};

// Least-squares projection of a rate pair onto the segment between the two
// corners, before any tolerance check.
PriorityProjection project_priority(const RateCorner& corner1, const RateCorner& corner2,
                                    std::span<const double> rate_pair);

// Interpolation weight of rate_pair on the sum-rate segment. Throws
// OffBoundaryError when the pair is farther than rel_tol from the segment.
double decoding_priority(const RateCorner& corner1, const RateCorner& corner2,
                         std::span<const double> rate_pair, double rel_tol = 1e-4);

}  // namespace macflow
