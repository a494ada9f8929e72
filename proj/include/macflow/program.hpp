#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "macflow/model.hpp"

namespace macflow {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Decision quantities per node and knot. Link quantities exist once per
// outgoing link; the rest once per node.
enum class Quantity : int { link_power = 0, link_rate = 1, buffer = 2, position = 3, speed = 4 };

struct VariableRef {
  int node = 0;          // owning node id (1-based)
  Quantity kind = Quantity::buffer;
  int link_to = -1;      // receiver id for link quantities, -1 otherwise
  int knot = 0;
};

// Flat index layout: grouped by node, then quantity block (powers per link,
// rates per link, buffer, position, speed), then knot.
class VariableLayout {
 public:
  VariableLayout() = default;
  VariableLayout(const ScenarioConfig& cfg);

  std::size_t size() const { return refs_.size(); }
  std::size_t knots() const { return knots_; }

  std::size_t index(int node, Quantity kind, int knot, int link_to = -1) const;
  const VariableRef& ref(std::size_t index) const { return refs_[index]; }
  int knot_of(std::size_t index) const { return refs_[index].knot; }

  // Outgoing link receivers of a node, ascending.
  const std::vector<int>& links_of(int node) const { return links_[static_cast<std::size_t>(node - 1)]; }

 private:
  std::size_t knots_ = 0;
  std::vector<std::vector<int>> links_;
  std::vector<std::size_t> node_base_;
  std::vector<VariableRef> refs_;
};

struct LinearTerm {
  std::size_t index = 0;
  double coeff = 0.0;
};

// a . x (= or <=) rhs
struct LinearConstraint {
  std::vector<LinearTerm> terms;
  double rhs = 0.0;
  int knot_lo = 0;
  int knot_hi = 0;
  std::string label;

  double evaluate(std::span<const double> x) const {
    double v = -rhs;
    for (const LinearTerm& t : terms) v += t.coeff * x[t.index];
    return v;  // residual; equality wants 0, inequality wants <= 0
  }
};

// Affine expression over decision variables (used for signed separations).
struct AffineExpr {
  std::vector<LinearTerm> terms;
  double constant = 0.0;

  double evaluate(std::span<const double> x) const {
    double v = constant;
    for (const LinearTerm& t : terms) v += t.coeff * x[t.index];
    return v;
  }
};

struct CapacityTerm {
  std::size_t power_index = 0;
  std::size_t rate_index = 0;
  AffineExpr separation_m;     // along-track separation between tx and rx
  double geom_const_m2 = 0.0;  // altitude^2 + lateral^2 for the link
};

// One transcribed subset inequality at one knot. Smooth, with analytic
// gradient and Hessian; value <= 0 iff the rate tuple is achievable.
struct CapacityConstraint {
  std::vector<CapacityTerm> terms;
  double bandwidth_hz = 0.0;
  double noise_power_w = 0.0;
  double gain = 1.0;
  double alpha = 1.0;
  int knot = 0;
  int receiver = 0;
  std::vector<int> subset_ids;
  std::string label;

  double value(std::span<const double> x) const;

  // Accumulates weight * gradient as sparse (index, coeff) pairs.
  void append_gradient(std::span<const double> x, double weight,
                       std::vector<LinearTerm>& out) const;

  // Accumulates hess_weight * H + outer_weight * grad gradT entries through
  // sink(i, j, v); emits each unordered pair once with i <= j. With
  // convexify set, the indefinite per-transmitter (power, separation)
  // curvature block is replaced by its nearest positive semidefinite part
  // (the rate bound is not jointly convex in the positions, and barrier
  // steps need a positive definite model).
  template <typename Sink>
  void accumulate_hessian(std::span<const double> x, double hess_weight, double outer_weight,
                          Sink&& sink, bool convexify = false) const;
};

// Sum over nodes and knots of trapezoid-weighted transmit power and drag
// work plus a terminal kinetic term per node; separable, so the Hessian is
// diagonal in the speed coordinates.
struct ObjectiveSpec {
  struct SpeedTerm {      // weight * v * (C1 v^2 + C2 / v^2)
    std::size_t index = 0;
    double weight = 0.0;
    DragModel drag;
  };
  struct QuadTerm {       // coeff * v^2
    std::size_t index = 0;
    double coeff = 0.0;
  };

  std::vector<LinearTerm> linear;
  std::vector<SpeedTerm> speed_terms;
  std::vector<QuadTerm> quad_terms;
  double constant = 0.0;

  double value(std::span<const double> x) const;
  void add_gradient(std::span<const double> x, std::span<double> grad) const;
  void add_hessian_diag(std::span<const double> x, std::span<double> diag) const;
};

enum class ProgramGoal { min_energy, max_data };

// The max_data objective is -(delivered bits) expressed in megabits so its
// gradient magnitudes match the energy objective's.
inline constexpr double kMaxDataObjectiveScale = 1e-6;

// Magnitude scale of one unit of each quantity, used to measure residuals of
// rows that mix bits, meters and Watts on a common footing.
inline double quantity_unit(Quantity q) {
  switch (q) {
    case Quantity::link_rate: return 1e6;   // bits/s
    case Quantity::buffer: return 1e6;      // bits
    case Quantity::position: return 1e3;    // meters
    default: return 1.0;
  }
}

// The transcribed problem: minimize objective subject to affine equalities,
// box bounds, linear inequalities (<= 0 form via evaluate) and capacity rows.
struct ConvexProgram {
  ScenarioConfig scenario;
  ProgramGoal goal = ProgramGoal::min_energy;
  VariableLayout layout;
  std::vector<double> knot_times_s;
  ObjectiveSpec objective;
  std::vector<double> lower_bounds;
  std::vector<double> upper_bounds;
  std::vector<LinearConstraint> equalities;
  std::vector<LinearConstraint> linear_inequalities;
  std::vector<CapacityConstraint> capacity;

  std::size_t variable_count() const { return layout.size(); }
};

// --- inline evaluation -----------------------------------------------------

namespace detail {

struct CapacityPoint {
  double snr_sum = 0.0;  // sum g_n p_n / sigma^2
  double rate_sum = 0.0;
};

inline CapacityPoint capacity_point(const CapacityConstraint& c, std::span<const double> x) {
  CapacityPoint pt;
  for (const CapacityTerm& t : c.terms) {
    const double d = t.separation_m.evaluate(x);
    const double sq = t.geom_const_m2 + d * d;
    const double eta = c.gain / std::pow(sq, c.alpha);
    pt.snr_sum += eta * x[t.power_index] / c.noise_power_w;
    pt.rate_sum += x[t.rate_index];
  }
  return pt;
}

}  // namespace detail

inline double CapacityConstraint::value(std::span<const double> x) const {
  const auto pt = detail::capacity_point(*this, x);
  return pt.rate_sum - bandwidth_hz * std::log1p(pt.snr_sum) / std::log(2.0);
}

inline void CapacityConstraint::append_gradient(std::span<const double> x, double weight,
                                                std::vector<LinearTerm>& out) const {
  const auto pt = detail::capacity_point(*this, x);
  const double dlog = -bandwidth_hz / (std::log(2.0) * (1.0 + pt.snr_sum));  // d/du of -B log2(1+u)
  for (const CapacityTerm& t : terms) {
    out.push_back({t.rate_index, weight});
    const double d = t.separation_m.evaluate(x);
    const double sq = t.geom_const_m2 + d * d;
    const double eta = gain / std::pow(sq, alpha);
    const double deta = -2.0 * alpha * d * eta / sq;
    out.push_back({t.power_index, weight * dlog * eta / noise_power_w});
    const double dg_dd = dlog * x[t.power_index] * deta / noise_power_w;
    for (const LinearTerm& lt : t.separation_m.terms) {
      out.push_back({lt.index, weight * dg_dd * lt.coeff});
    }
  }
}

namespace detail {

// Clips the symmetric n x n matrix (row-major, both triangles filled) to its
// nearest positive semidefinite part via cyclic Jacobi. Returns the absolute
// eigenvalue mass removed.
inline void psd_clip(std::vector<double>& h, std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(h[i * n + i]));
  for (int sweep = 0; sweep < 50; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::abs(h[p * n + q]));
    }
    if (off <= 1e-14 * (scale + 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = h[p * n + q];
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (h[q * n + q] - h[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double hkp = h[k * n + p];
          const double hkq = h[k * n + q];
          h[k * n + p] = c * hkp - s * hkq;
          h[k * n + q] = s * hkp + c * hkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double hpk = h[p * n + k];
          const double hqk = h[q * n + k];
          h[p * n + k] = c * hpk - s * hqk;
          h[q * n + k] = s * hpk + c * hqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p];
          const double vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) {
    eig[i] = std::max(h[i * n + i], 0.0);
  }
  std::fill(h.begin(), h.end(), 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    if (eig[e] == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double vi = v[i * n + e] * eig[e];
      if (vi == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) h[i * n + j] += vi * v[j * n + e];
    }
  }
}

}  // namespace detail

template <typename Sink>
void CapacityConstraint::accumulate_hessian(std::span<const double> x, double hess_weight,
                                            double outer_weight, Sink&& sink,
                                            bool convexify) const {
  const auto pt = detail::capacity_point(*this, x);
  const double ln2 = std::log(2.0);
  const double u = pt.snr_sum;
  const double dlog = -bandwidth_hz / (ln2 * (1.0 + u));
  const double d2log = bandwidth_hz / (ln2 * (1.0 + u) * (1.0 + u));

  // Local coordinates: (p_i, d_i) per transmitter, d_i the signed separation.
  const std::size_t nt = terms.size();
  const std::size_t L = 2 * nt;
  std::vector<double> h(L * L, 0.0);
  std::vector<double> du(L, 0.0);
  for (std::size_t i = 0; i < nt; ++i) {
    const CapacityTerm& t = terms[i];
    const double p = x[t.power_index];
    const double d = t.separation_m.evaluate(x);
    const double sq = t.geom_const_m2 + d * d;
    const double eta = gain / std::pow(sq, alpha);
    const double deta = -2.0 * alpha * d * eta / sq;
    const double d2eta =
        -2.0 * alpha * eta * (t.geom_const_m2 - (2.0 * alpha + 1.0) * d * d) / (sq * sq);
    du[2 * i] = eta / noise_power_w;
    du[2 * i + 1] = p * deta / noise_power_w;
    const double w = hess_weight * dlog / noise_power_w;
    h[(2 * i) * L + (2 * i + 1)] += w * deta;
    h[(2 * i + 1) * L + (2 * i)] += w * deta;
    h[(2 * i + 1) * L + (2 * i + 1)] += w * p * d2eta;
  }
  const double wdd = hess_weight * d2log;
  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t b = 0; b < L; ++b) h[a * L + b] += wdd * du[a] * du[b];
  }
  if (convexify) detail::psd_clip(h, L);

  // Support: rates (gradient outer part only), then powers, then the distinct
  // position indices each local d chains through.
  std::vector<std::size_t> support;
  support.reserve(3 * nt + 1);
  for (const CapacityTerm& t : terms) support.push_back(t.rate_index);
  for (const CapacityTerm& t : terms) support.push_back(t.power_index);
  for (const CapacityTerm& t : terms) {
    for (const LinearTerm& lt : t.separation_m.terms) support.push_back(lt.index);
  }
  std::sort(support.begin() + static_cast<std::ptrdiff_t>(nt), support.end());
  support.erase(std::unique(support.begin() + static_cast<std::ptrdiff_t>(nt), support.end()),
                support.end());
  const std::size_t m = support.size();
  auto col_of = [&](std::size_t global) {
    for (std::size_t c = nt; c < m; ++c) {
      if (support[c] == global) return c;
    }
    return m;  // unreachable for valid programs
  };

  // F = C^T h C over the support, where C chains local (p, d) coordinates to
  // the power and position columns; rates occupy the first nt columns.
  std::vector<double> f(m * m, 0.0);
  auto chain = [&](std::size_t local, auto&& fn) {
    if (local % 2 == 0) {
      fn(col_of(terms[local / 2].power_index), 1.0);
    } else {
      for (const LinearTerm& lt : terms[local / 2].separation_m.terms) {
        fn(col_of(lt.index), lt.coeff);
      }
    }
  };
  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t b = 0; b < L; ++b) {
      const double hab = h[a * L + b];
      if (hab == 0.0) continue;
      chain(a, [&](std::size_t ca, double wa) {
        chain(b, [&](std::size_t cb, double wb) { f[ca * m + cb] += hab * wa * wb; });
      });
    }
  }

  // outer_weight * grad gradT with grad = sum_i e_{rate_i} + dlog * du chained.
  if (outer_weight != 0.0) {
    std::vector<double> g(m, 0.0);
    for (std::size_t i = 0; i < nt; ++i) g[i] = 1.0;
    for (std::size_t a = 0; a < L; ++a) {
      chain(a, [&](std::size_t ca, double wa) { g[ca] += dlog * du[a] * wa; });
    }
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b) f[a * m + b] += outer_weight * g[a] * g[b];
    }
  }

  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a; b < m; ++b) {
      const double v = f[a * m + b];
      if (v == 0.0) continue;
      const std::size_t ia = support[a];
      const std::size_t ib = support[b];
      if (ia <= ib) {
        sink(ia, ib, v);
      } else {
        sink(ib, ia, v);
      }
    }
  }
}

inline double ObjectiveSpec::value(std::span<const double> x) const {
  double v = constant;
  for (const LinearTerm& t : linear) v += t.coeff * x[t.index];
  for (const SpeedTerm& t : speed_terms) {
    const double s = x[t.index];
    v += t.weight * t.drag.parasitic_coeff * s * s * s;
    if (t.drag.induced_coeff != 0.0) v += t.weight * t.drag.induced_coeff / s;
  }
  for (const QuadTerm& t : quad_terms) v += t.coeff * x[t.index] * x[t.index];
  return v;
}

inline void ObjectiveSpec::add_gradient(std::span<const double> x, std::span<double> grad) const {
  for (const LinearTerm& t : linear) grad[t.index] += t.coeff;
  for (const SpeedTerm& t : speed_terms) {
    const double s = x[t.index];
    grad[t.index] += 3.0 * t.weight * t.drag.parasitic_coeff * s * s;
    if (t.drag.induced_coeff != 0.0) grad[t.index] -= t.weight * t.drag.induced_coeff / (s * s);
  }
  for (const QuadTerm& t : quad_terms) grad[t.index] += 2.0 * t.coeff * x[t.index];
}

inline void ObjectiveSpec::add_hessian_diag(std::span<const double> x, std::span<double> diag) const {
  for (const SpeedTerm& t : speed_terms) {
    const double s = x[t.index];
    diag[t.index] += 6.0 * t.weight * t.drag.parasitic_coeff * s;
    if (t.drag.induced_coeff != 0.0) diag[t.index] += 2.0 * t.weight * t.drag.induced_coeff / (s * s * s);
  }
  for (const QuadTerm& t : quad_terms) diag[t.index] += 2.0 * t.coeff;
}

}  // namespace macflow
