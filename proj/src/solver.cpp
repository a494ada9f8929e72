#include "macflow/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <map>
#include <queue>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "linalg.hpp"
#include "macflow/capacity.hpp"
#include "macflow/errors.hpp"
#include "macflow/prng.hpp"

namespace macflow {

namespace {

struct ReducedRow {
  std::vector<LinearTerm> terms;  // indices into the reduced vector, internal units
  double rhs = 0.0;
  int block = 0;
  const LinearConstraint* source = nullptr;
  double scale = 1.0;  // applied to the physical row
};

struct ConsumedRow {
  const LinearConstraint* src = nullptr;
  std::size_t fixed_index = 0;  // variable this row pinned
  double coeff = 0.0;           // its coefficient in the row
};

struct Presolved {
  std::vector<double> x_full;     // physical values; fixed entries baked in
  std::vector<char> fixed;
  std::vector<ConsumedRow> consumed;  // fixing rows, in consumption order
  std::vector<std::size_t> free_ids;
  std::vector<std::ptrdiff_t> pos;  // global -> reduced or -1
  std::vector<double> unit;         // per reduced variable
  std::vector<double> lb_int, ub_int;
  std::vector<ReducedRow> eq;
  std::vector<std::size_t> cap_rows;  // capacity rows with a free variable
  std::vector<std::size_t> lin_rows;
  std::string infeasibility;
};

double consistency_scale(const LinearConstraint& c, std::span<const double> x) {
  double s = 1.0 + std::abs(c.rhs);
  for (const LinearTerm& t : c.terms) s = std::max(s, std::abs(t.coeff * x[t.index]));
  return s;
}

Presolved presolve(const ConvexProgram& prog) {
  Presolved out;
  const std::size_t n = prog.variable_count();
  out.x_full.assign(n, 0.0);
  out.fixed.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (prog.lower_bounds[i] == prog.upper_bounds[i]) {
      out.fixed[i] = 1;
      out.x_full[i] = prog.lower_bounds[i];
    }
  }

  // Constraint propagation over the affine rows: fully determined rows become
  // consistency checks, single-free-variable rows pin that variable.
  struct WorkRow {
    const LinearConstraint* src;
    bool done = false;
  };
  std::vector<WorkRow> rows;
  rows.reserve(prog.equalities.size());
  for (const auto& c : prog.equalities) rows.push_back({&c});

  bool changed = true;
  while (changed) {
    changed = false;
    for (WorkRow& row : rows) {
      if (row.done) continue;
      const LinearConstraint& c = *row.src;
      double rhs = c.rhs;
      const LinearTerm* free_term = nullptr;
      int free_count = 0;
      for (const LinearTerm& t : c.terms) {
        if (out.fixed[t.index]) {
          rhs -= t.coeff * out.x_full[t.index];
        } else {
          ++free_count;
          free_term = &t;
        }
      }
      if (free_count == 0) {
        const double tol = 1e-7 * consistency_scale(c, out.x_full);
        if (std::abs(rhs) > tol) {
          out.infeasibility = "constraint '" + c.label + "' is violated by " + std::to_string(rhs) +
                              " once fixed variables are substituted";
          return out;
        }
        row.done = true;
        changed = true;
      } else if (free_count == 1) {
        double value = rhs / free_term->coeff;
        const double lb = prog.lower_bounds[free_term->index];
        const double ub = prog.upper_bounds[free_term->index];
        const double tol = 1e-9 * (1.0 + std::abs(value));
        if (value < lb - tol || value > ub + tol) {
          out.infeasibility = "constraint '" + c.label + "' forces a variable to " +
                              std::to_string(value) + ", outside its bounds";
          return out;
        }
        value = std::clamp(value, lb, ub);
        out.fixed[free_term->index] = 1;
        out.x_full[free_term->index] = value;
        out.consumed.push_back({&c, free_term->index, free_term->coeff});
        row.done = true;
        changed = true;
      }
    }
  }

  out.pos.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.fixed[i]) {
      out.pos[i] = static_cast<std::ptrdiff_t>(out.free_ids.size());
      out.free_ids.push_back(i);
    }
  }
  out.unit.resize(out.free_ids.size());
  out.lb_int.resize(out.free_ids.size());
  out.ub_int.resize(out.free_ids.size());
  for (std::size_t r = 0; r < out.free_ids.size(); ++r) {
    const std::size_t g = out.free_ids[r];
    out.unit[r] = quantity_unit(prog.layout.ref(g).kind);
    out.lb_int[r] = prog.lower_bounds[g] / out.unit[r];
    out.ub_int[r] = prog.upper_bounds[g] / out.unit[r];
  }

  const int last_block = std::max(0, prog.scenario.knot_count - 1);
  for (const WorkRow& row : rows) {
    if (row.done) continue;
    const LinearConstraint& c = *row.src;
    ReducedRow red;
    red.source = &c;
    red.block = std::min(c.knot_lo, last_block);
    red.rhs = c.rhs;
    double max_coeff = 0.0;
    for (const LinearTerm& t : c.terms) {
      if (out.fixed[t.index]) {
        red.rhs -= t.coeff * out.x_full[t.index];
      } else {
        const std::size_t r = static_cast<std::size_t>(out.pos[t.index]);
        const double coeff = t.coeff * out.unit[r];
        red.terms.push_back({r, coeff});
        max_coeff = std::max(max_coeff, std::abs(coeff));
      }
    }
    red.scale = max_coeff > 0.0 ? 1.0 / max_coeff : 1.0;
    for (auto& t : red.terms) t.coeff *= red.scale;
    red.rhs *= red.scale;
    out.eq.push_back(std::move(red));
  }
  std::stable_sort(out.eq.begin(), out.eq.end(),
                   [](const ReducedRow& a, const ReducedRow& b) { return a.block < b.block; });

  for (std::size_t i = 0; i < prog.capacity.size(); ++i) {
    const CapacityConstraint& c = prog.capacity[i];
    bool has_free = false;
    for (const CapacityTerm& t : c.terms) {
      if (!out.fixed[t.power_index] || !out.fixed[t.rate_index]) has_free = true;
      for (const LinearTerm& lt : t.separation_m.terms) {
        if (!out.fixed[lt.index]) has_free = true;
      }
    }
    if (has_free) {
      out.cap_rows.push_back(i);
    } else if (c.value(out.x_full) > 1e-9 * c.bandwidth_hz) {
      out.infeasibility = "constraint '" + c.label + "' is violated by the fixed variables";
      return out;
    }
  }
  for (std::size_t i = 0; i < prog.linear_inequalities.size(); ++i) {
    const LinearConstraint& c = prog.linear_inequalities[i];
    bool has_free = false;
    for (const LinearTerm& t : c.terms) {
      if (!out.fixed[t.index]) has_free = true;
    }
    if (has_free) {
      out.lin_rows.push_back(i);
    } else if (c.evaluate(out.x_full) > 1e-9 * (1.0 + std::abs(c.rhs))) {
      out.infeasibility = "constraint '" + c.label + "' is violated by the fixed variables";
      return out;
    }
  }
  return out;
}

// --- initial point -----------------------------------------------------------

struct FlowPlan {
  // Constant bit rate routed over each link (bits/s), topology order.
  std::map<std::pair<int, int>, double> rate;
};

std::vector<int> path_to_ap(const ScenarioConfig& cfg, int start) {
  // BFS over directed links; returns the node sequence start..0, empty if none.
  std::map<int, int> parent;
  std::queue<int> q;
  q.push(start);
  parent[start] = start;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    if (u == kAccessPointId) {
      std::vector<int> path{u};
      int v = u;
      while (v != start) {
        v = parent[v];
        path.push_back(v);
      }
      std::reverse(path.begin(), path.end());
      return path;
    }
    for (const Link& l : cfg.links_from(u)) {
      if (!parent.count(l.to)) {
        parent[l.to] = u;
        q.push(l.to);
      }
    }
  }
  return {};
}

bool plan_flows(const ScenarioConfig& cfg, FlowPlan& plan, std::string* why_not) {
  for (const Link& l : cfg.topology) plan.rate[{l.from, l.to}] = 0.0;
  for (int id = 1; id <= cfg.node_count(); ++id) {
    const double demand = cfg.node(id).initial_data_bits / cfg.horizon_s;
    if (demand <= 0.0) continue;
    const auto path = path_to_ap(cfg, id);
    if (path.empty()) {
      if (why_not) *why_not = "node " + std::to_string(id) + " has no route to the access point";
      return false;
    }
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      plan.rate[{path[i], path[i + 1]}] += demand;
    }
  }
  // Give idle relay links a small share of traffic so that every free rate
  // variable starts strictly positive.
  for (const Link& l : cfg.topology) {
    if (plan.rate[{l.from, l.to}] > 0.0) continue;
    if (cfg.node(l.from).initial_data_bits == 0.0 && cfg.links_to(l.from).empty()) {
      continue;  // structurally pinned to zero by the transcription
    }
    double available = 0.0;
    std::pair<int, int> donor{};
    for (const Link& out : cfg.links_from(l.from)) {
      const double f = plan.rate[{out.from, out.to}];
      if (f > available) {
        available = f;
        donor = {out.from, out.to};
      }
    }
    const auto onward = path_to_ap(cfg, l.to);
    if (available <= 0.0 || onward.empty()) {
      if (why_not) {
        *why_not = "link " + std::to_string(l.from) + "->" + std::to_string(l.to) +
                   " cannot be given a strictly positive starting rate";
      }
      return false;
    }
    const double eps = 1e-3 * available;
    plan.rate[donor] -= eps;
    plan.rate[{l.from, l.to}] += eps;
    for (std::size_t i = 0; i + 1 < onward.size(); ++i) {
      plan.rate[{onward[i], onward[i + 1]}] += eps;
    }
  }
  return true;
}

double link_gain_at(const ScenarioConfig& cfg, int from, int to, double q_from, double q_to) {
  return channel_gain(cfg.channel, link_geometry(cfg, from, to, q_from, q_to));
}

}  // namespace

std::optional<std::vector<double>> initial_point(const ConvexProgram& prog,
                                                 const TrajectoryHint* hint, std::string* why_not) {
  const ScenarioConfig& cfg = prog.scenario;
  const VariableLayout& lay = prog.layout;
  const int K = cfg.knot_count;
  const double h = cfg.horizon_s / K;
  std::vector<double> x(lay.size(), 0.0);

  auto fail = [&](const std::string& msg) {
    if (why_not) *why_not = msg;
    return std::nullopt;
  };

  // Speeds and positions.
  for (int id = 1; id <= cfg.node_count(); ++id) {
    const NodeParams& n = cfg.node(id);
    std::vector<double> v(static_cast<std::size_t>(K) + 1);
    if (hint) {
      v = hint->speed_mps[static_cast<std::size_t>(id - 1)];
    } else if (n.v_min_mps == n.v_max_mps) {
      std::fill(v.begin(), v.end(), n.v_min_mps);
    } else {
      const double dist = std::abs(n.q_final_m - n.q_init_m);
      const double c = (dist / h - 0.5 * n.v_init_mps) / (K - 0.5);
      const double margin = 1e-3 * (n.v_max_mps - n.v_min_mps);
      if (c < n.v_min_mps + margin || c > n.v_max_mps - margin) {
        return fail("cruise speed " + std::to_string(c) + " m/s is too close to the speed bounds");
      }
      v[0] = n.v_init_mps;
      std::fill(v.begin() + 1, v.end(), c);
    }
    std::vector<double> q(static_cast<std::size_t>(K) + 1);
    if (hint) {
      q = hint->position_m[static_cast<std::size_t>(id - 1)];
    } else {
      q[0] = n.q_init_m;
      for (int k = 0; k < K; ++k) {
        q[static_cast<std::size_t>(k) + 1] =
            q[static_cast<std::size_t>(k)] +
            0.5 * h * n.direction * (v[static_cast<std::size_t>(k)] + v[static_cast<std::size_t>(k) + 1]);
      }
    }
    for (int k = 0; k <= K; ++k) {
      x[lay.index(id, Quantity::speed, k)] = v[static_cast<std::size_t>(k)];
      x[lay.index(id, Quantity::position, k)] = q[static_cast<std::size_t>(k)];
    }
  }

  auto gain_at = [&](int from, int to, int k) {
    const double q_from = x[lay.index(from, Quantity::position, k)];
    const double q_to = to == kAccessPointId ? 0.0 : x[lay.index(to, Quantity::position, k)];
    return link_gain_at(cfg, from, to, q_from, q_to);
  };

  if (prog.goal == ProgramGoal::max_data) {
    // Mid-box powers and conservatively small rates are always interior.
    for (int id = 1; id <= cfg.node_count(); ++id) {
      const NodeParams& n = cfg.node(id);
      const auto& links = lay.links_of(id);
      for (int k = 0; k <= K; ++k) {
        x[lay.index(id, Quantity::buffer, k)] = 0.5 * n.buffer_capacity_bits;
        for (int to : links) {
          const double p = 0.5 * n.p_max_w / static_cast<double>(links.size());
          x[lay.index(id, Quantity::link_power, k, to)] = p;
          const double cap = shannon_rate_bps(cfg.bandwidth_for_receiver(to),
                                              gain_at(id, to, k) * 0.25 * p / cfg.channel.noise_power_w);
          x[lay.index(id, Quantity::link_rate, k, to)] =
              std::max(1e-12, 1e-3 * cap / static_cast<double>(cfg.links_to(to).size()));
        }
      }
    }
    return x;
  }

  FlowPlan plan;
  if (!plan_flows(cfg, plan, why_not)) return std::nullopt;

  // Per-link rate profiles: constant for relay links; for access-point links
  // a level bisection capped by a share of the local Shannon capacity, so the
  // trapezoid of the profile delivers the routed bits exactly.
  // Prefer generous capacity margins (well-centered starts); tight shares are
  // a last resort for loads close to the deliverable maximum.
  const std::size_t knots = static_cast<std::size_t>(K) + 1;
  std::map<std::pair<int, int>, std::vector<double>> rate_profile;
  for (double cap_share : {0.5, 0.7, 0.9, 0.99, 0.3, 0.2, 0.1, 0.05}) {
    rate_profile.clear();
    bool ok = true;
    for (const Link& l : cfg.topology) {
      const double target_bits = plan.rate[{l.from, l.to}] * cfg.horizon_s;
      std::vector<double> profile(knots, 0.0);
      if (target_bits <= 0.0) {
        rate_profile[{l.from, l.to}] = std::move(profile);
        continue;
      }
      const NodeParams& n = cfg.node(l.from);
      const double budget = n.p_max_w / static_cast<double>(lay.links_of(l.from).size());
      std::vector<double> cap(knots);
      for (int k = 0; k <= K; ++k) {
        cap[static_cast<std::size_t>(k)] =
            cap_share * shannon_rate_bps(cfg.bandwidth_for_receiver(l.to),
                                         gain_at(l.from, l.to, k) * budget / cfg.channel.noise_power_w);
      }
      auto delivered = [&](double level) {
        std::vector<double> r(knots);
        for (std::size_t k = 0; k < knots; ++k) r[k] = std::min(level, cap[k]);
        return trapezoid(r, h);
      };
      double hi = *std::max_element(cap.begin(), cap.end());
      if (delivered(hi) < target_bits) {
        ok = false;
        break;
      }
      double lo = 0.0;
      for (int it = 0; it < 200 && (hi - lo) > 1e-13 * (1.0 + hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (delivered(mid) < target_bits ? lo : hi) = mid;
      }
      for (std::size_t k = 0; k < knots; ++k) profile[k] = std::min(hi, cap[k]);
      rate_profile[{l.from, l.to}] = std::move(profile);
    }
    if (!ok) continue;

    // Powers from the summed rate at each receiver: a single SNR level split
    // in proportion to the rates keeps every subset inequality strictly slack.
    bool fits = true;
    std::map<std::pair<int, int>, std::vector<double>> power_profile;
    for (const Link& l : cfg.topology) power_profile[{l.from, l.to}].assign(knots, 0.0);
    for (int receiver : cfg.receivers()) {
      const double bandwidth = cfg.bandwidth_for_receiver(receiver);
      const auto incoming = cfg.links_to(receiver);
      for (int k = 0; k <= K && fits; ++k) {
        double rate_sum = 0.0;
        for (const Link& l : incoming) rate_sum += rate_profile[{l.from, l.to}][static_cast<std::size_t>(k)];
        if (rate_sum <= 0.0) continue;
        const double snr_needed = std::exp2(1.005 * rate_sum / bandwidth) - 1.0;
        for (const Link& l : incoming) {
          const double r = rate_profile[{l.from, l.to}][static_cast<std::size_t>(k)];
          const double g = gain_at(l.from, l.to, k);
          power_profile[{l.from, l.to}][static_cast<std::size_t>(k)] =
              cfg.channel.noise_power_w * snr_needed * (r / rate_sum) / g;
        }
      }
    }
    for (int id = 1; id <= cfg.node_count() && fits; ++id) {
      for (int k = 0; k <= K && fits; ++k) {
        double total = 0.0;
        for (int to : lay.links_of(id)) total += power_profile[{id, to}][static_cast<std::size_t>(k)];
        if (total > 0.995 * cfg.node(id).p_max_w) fits = false;
      }
    }
    if (!fits) continue;

    // Commit rates/powers; give zero-rate links a whisper of rate and power so
    // they start interior. Buffers integrate the final flows exactly.
    for (const Link& l : cfg.topology) {
      const bool pinned = prog.upper_bounds[lay.index(l.from, Quantity::link_rate, 0, l.to)] == 0.0;
      for (int k = 0; k <= K; ++k) {
        double r = rate_profile[{l.from, l.to}][static_cast<std::size_t>(k)];
        double p = power_profile[{l.from, l.to}][static_cast<std::size_t>(k)];
        if (!pinned && r <= 0.0) r = 1e-9 * cfg.bandwidth_for_receiver(l.to);
        if (p <= 0.0) p = 1e-6 * cfg.node(l.from).p_max_w;
        x[lay.index(l.from, Quantity::link_rate, k, l.to)] = pinned ? 0.0 : r;
        x[lay.index(l.from, Quantity::link_power, k, l.to)] = p;
      }
    }
    for (int id = 1; id <= cfg.node_count(); ++id) {
      const NodeParams& n = cfg.node(id);
      const bool pinned = prog.upper_bounds[lay.index(id, Quantity::buffer, 0)] == 0.0;
      std::vector<double> net(knots, 0.0);
      for (const Link& l : cfg.links_to(id)) {
        for (std::size_t k = 0; k < knots; ++k) {
          net[k] += x[lay.index(l.from, Quantity::link_rate, static_cast<int>(k), id)];
        }
      }
      for (int to : lay.links_of(id)) {
        for (std::size_t k = 0; k < knots; ++k) {
          net[k] -= x[lay.index(id, Quantity::link_rate, static_cast<int>(k), to)];
        }
      }
      double s = n.initial_data_bits;
      x[lay.index(id, Quantity::buffer, 0)] = s;
      bool interior = true;
      for (int k = 0; k < K; ++k) {
        s += 0.5 * h * (net[static_cast<std::size_t>(k)] + net[static_cast<std::size_t>(k) + 1]);
        if (k + 1 < K && !pinned && (s <= 0.0 || s >= n.buffer_capacity_bits)) interior = false;
        x[lay.index(id, Quantity::buffer, k + 1)] = std::clamp(s, 0.0, n.buffer_capacity_bits);
      }
      if (!interior) return fail("starting buffer trajectory leaves (0, capacity)");
    }

    // Final strictness check on every capacity row.
    for (const CapacityConstraint& c : prog.capacity) {
      if (c.value(x) >= -1e-9 * c.bandwidth_hz) {
        return fail("constructed start point is not strictly inside '" + c.label + "'");
      }
    }
    return x;
  }
  return fail("no starting rate profile fits within the transmit power budget");
}

// --- KKT residuals ------------------------------------------------------------

KktResiduals kkt_residuals(const ConvexProgram& prog, std::span<const double> x,
                           const Multipliers& mult) {
  // Componentwise relative stationarity: each residual entry is compared with
  // the largest single term feeding it, which makes the measure indifferent
  // to the mixed physical units of the decision quantities.
  const std::size_t n = prog.variable_count();
  std::vector<double> r(n, 0.0);
  prog.objective.add_gradient(x, r);
  std::vector<double> term_scale(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) term_scale[i] = std::abs(r[i]);
  auto accumulate = [&](std::size_t index, double value) {
    r[index] += value;
    term_scale[index] = std::max(term_scale[index], std::abs(value));
  };

  double mult_norm = 0.0;
  auto note = [&mult_norm](double v) { mult_norm = std::max(mult_norm, std::abs(v)); };

  std::vector<LinearTerm> scratch;
  double complementarity = 0.0;
  double feasibility = 0.0;

  for (std::size_t i = 0; i < prog.capacity.size(); ++i) {
    const double z = i < mult.capacity.size() ? mult.capacity[i] : 0.0;
    note(z);
    const double g = prog.capacity[i].value(x);
    feasibility = std::max(feasibility, std::max(0.0, g) / prog.capacity[i].bandwidth_hz);
    complementarity = std::max(complementarity, std::abs(z * g));
    if (z != 0.0) {
      scratch.clear();
      prog.capacity[i].append_gradient(x, z, scratch);
      for (const LinearTerm& t : scratch) accumulate(t.index, t.coeff);
    }
  }
  for (std::size_t i = 0; i < prog.linear_inequalities.size(); ++i) {
    const double z = i < mult.linear_inequality.size() ? mult.linear_inequality[i] : 0.0;
    note(z);
    const LinearConstraint& c = prog.linear_inequalities[i];
    const double g = c.evaluate(x);
    feasibility = std::max(feasibility, std::max(0.0, g) / (1.0 + std::abs(c.rhs)));
    complementarity = std::max(complementarity, std::abs(z * g));
    for (const LinearTerm& t : c.terms) accumulate(t.index, z * t.coeff);
  }
  for (std::size_t i = 0; i < prog.equalities.size(); ++i) {
    const double y = i < mult.equality.size() ? mult.equality[i] : 0.0;
    note(y);
    const LinearConstraint& c = prog.equalities[i];
    double row_scale = 1.0 + std::abs(c.rhs);
    for (const LinearTerm& t : c.terms) {
      row_scale = std::max(row_scale,
                           std::abs(t.coeff) * quantity_unit(prog.layout.ref(t.index).kind));
    }
    feasibility = std::max(feasibility, std::abs(c.evaluate(x)) / row_scale);
    for (const LinearTerm& t : c.terms) accumulate(t.index, y * t.coeff);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double zl = i < mult.bound_lower.size() ? mult.bound_lower[i] : 0.0;
    const double zu = i < mult.bound_upper.size() ? mult.bound_upper[i] : 0.0;
    note(zl);
    note(zu);
    if (zl != 0.0) accumulate(i, -zl);
    if (zu != 0.0) accumulate(i, zu);
    const double lb = prog.lower_bounds[i];
    const double ub = prog.upper_bounds[i];
    if (std::isfinite(lb)) {
      feasibility = std::max(feasibility, (lb - x[i]) / (1.0 + std::abs(lb)));
      complementarity = std::max(complementarity, std::abs(zl * (x[i] - lb)));
    }
    if (std::isfinite(ub)) {
      feasibility = std::max(feasibility, (x[i] - ub) / (1.0 + std::abs(ub)));
      complementarity = std::max(complementarity, std::abs(zu * (ub - x[i])));
    }
  }

  KktResiduals out;
  double stationarity = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (prog.lower_bounds[i] == prog.upper_bounds[i]) continue;  // pinned variable
    stationarity = std::max(stationarity, std::abs(r[i]) / (1.0 + term_scale[i]));
  }
  out.stationarity = stationarity;
  out.feasibility = std::max(feasibility, 0.0);
  out.complementarity = complementarity / (1.0 + mult_norm);
  return out;
}

// --- derivative check ---------------------------------------------------------

double derivative_check(const ConvexProgram& prog, std::span<const double> x, double step) {
  const std::size_t n = prog.variable_count();
  std::vector<double> point(x.begin(), x.end());
  double worst = 0.0;
  auto update = [&worst](double analytic, double fd) {
    worst = std::max(worst, std::abs(analytic - fd) / (1.0 + std::abs(analytic) + std::abs(fd)));
  };
  // Coordinates at (or pinned to) a bound get no finite-difference step;
  // central differences there would step outside the domain.
  auto step_for = [&](std::size_t i) {
    double s = step * (1.0 + std::abs(point[i]));
    const double lb = prog.lower_bounds[i];
    const double ub = prog.upper_bounds[i];
    if (std::isfinite(lb)) s = std::min(s, 0.25 * (point[i] - lb));
    if (std::isfinite(ub)) s = std::min(s, 0.25 * (ub - point[i]));
    if (!(s > 1e-12 * (1.0 + std::abs(point[i])))) return 0.0;
    return s;
  };

  // Objective gradient.
  std::vector<double> grad(n, 0.0);
  prog.objective.add_gradient(point, grad);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = step_for(i);
    if (s <= 0.0) continue;
    const double saved = point[i];
    point[i] = saved + s;
    const double fp = prog.objective.value(point);
    point[i] = saved - s;
    const double fm = prog.objective.value(point);
    point[i] = saved;
    update(grad[i], (fp - fm) / (2.0 * s));
  }

  // Objective Hessian-vector products along deterministic directions.
  Prng rng(0x5eedf00dULL);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> dir(n);
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dir[i] = rng.uniform(-1.0, 1.0);
      norm += dir[i] * dir[i];
    }
    norm = std::sqrt(norm);
    double hstep = kInf;
    for (std::size_t i = 0; i < n; ++i) {
      dir[i] /= norm;
      if (step_for(i) == 0.0) {
        dir[i] = 0.0;
      } else if (dir[i] != 0.0) {
        hstep = std::min(hstep, step_for(i) / std::abs(dir[i]));
      }
    }
    if (!std::isfinite(hstep)) continue;
    std::vector<double> diag(n, 0.0);
    prog.objective.add_hessian_diag(point, diag);
    std::vector<double> gp(n, 0.0), gm(n, 0.0), moved(point.begin(), point.end());
    for (std::size_t i = 0; i < n; ++i) moved[i] = point[i] + hstep * dir[i];
    prog.objective.add_gradient(moved, gp);
    for (std::size_t i = 0; i < n; ++i) moved[i] = point[i] - hstep * dir[i];
    prog.objective.add_gradient(moved, gm);
    for (std::size_t i = 0; i < n; ++i) {
      update(diag[i] * dir[i], (gp[i] - gm[i]) / (2.0 * hstep));
    }
  }

  // Capacity rows: gradient and Hessian-vector products on their support.
  std::vector<LinearTerm> sparse;
  for (const CapacityConstraint& c : prog.capacity) {
    std::vector<std::size_t> support;
    for (const CapacityTerm& t : c.terms) {
      support.push_back(t.power_index);
      support.push_back(t.rate_index);
      for (const LinearTerm& lt : t.separation_m.terms) support.push_back(lt.index);
    }
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());

    sparse.clear();
    c.append_gradient(point, 1.0, sparse);
    std::vector<double> dense(n, 0.0);
    for (const LinearTerm& t : sparse) dense[t.index] += t.coeff;
    for (std::size_t i : support) {
      const double s = step_for(i);
      if (s == 0.0) continue;
      const double saved = point[i];
      point[i] = saved + s;
      const double fp = c.value(point);
      point[i] = saved - s;
      const double fm = c.value(point);
      point[i] = saved;
      update(dense[i], (fp - fm) / (2.0 * s));
    }

    std::vector<double> dir(n, 0.0);
    double hstep = kInf;
    for (std::size_t i : support) {
      dir[i] = rng.uniform(-1.0, 1.0);
      if (step_for(i) == 0.0) {
        dir[i] = 0.0;
      } else {
        hstep = std::min(hstep, step_for(i) / std::abs(dir[i]));
      }
    }
    if (!std::isfinite(hstep)) continue;
    std::map<std::pair<std::size_t, std::size_t>, double> hess;
    c.accumulate_hessian(point, 1.0, 0.0, [&hess](std::size_t i, std::size_t j, double v) {
      hess[{i, j}] += v;
    });
    std::vector<double> hv(n, 0.0);
    for (const auto& [key, v] : hess) {
      hv[key.first] += v * dir[key.second];
      if (key.first != key.second) hv[key.second] += v * dir[key.first];
    }
    std::vector<double> moved(point.begin(), point.end());
    for (std::size_t i : support) moved[i] = point[i] + hstep * dir[i];
    std::vector<double> gp(n, 0.0), gm(n, 0.0);
    sparse.clear();
    c.append_gradient(moved, 1.0, sparse);
    for (const LinearTerm& t : sparse) gp[t.index] += t.coeff;
    for (std::size_t i : support) moved[i] = point[i] - hstep * dir[i];
    sparse.clear();
    c.append_gradient(moved, 1.0, sparse);
    for (const LinearTerm& t : sparse) gm[t.index] += t.coeff;
    for (std::size_t i : support) {
      update(hv[i], (gp[i] - gm[i]) / (2.0 * hstep));
    }
  }

  // Affine rows are exact by construction; still compare against differences.
  for (const LinearConstraint& c : prog.equalities) {
    for (const LinearTerm& t : c.terms) {
      const double s = step_for(t.index);
      if (s == 0.0) continue;
      const double saved = point[t.index];
      point[t.index] = saved + s;
      const double fp = c.evaluate(point);
      point[t.index] = saved - s;
      const double fm = c.evaluate(point);
      point[t.index] = saved;
      update(t.coeff, (fp - fm) / (2.0 * s));
    }
  }
  return worst;
}

// --- barrier solve --------------------------------------------------------

namespace {

struct Blocks {
  // Free variables grouped by knot, with local positions.
  std::vector<std::vector<std::size_t>> members;  // reduced indices per knot
  std::vector<std::size_t> local;                 // reduced index -> position within its block
  std::vector<int> knot;                          // reduced index -> knot
};

Blocks build_blocks(const ConvexProgram& prog, const Presolved& pre) {
  Blocks b;
  b.members.resize(prog.layout.knots());
  b.local.resize(pre.free_ids.size());
  b.knot.resize(pre.free_ids.size());
  for (std::size_t r = 0; r < pre.free_ids.size(); ++r) {
    const int k = prog.layout.knot_of(pre.free_ids[r]);
    b.knot[r] = k;
    b.local[r] = b.members[static_cast<std::size_t>(k)].size();
    b.members[static_cast<std::size_t>(k)].push_back(r);
  }
  return b;
}

struct Iterate {
  std::vector<double> x_int;   // reduced internal coordinates
  std::vector<double> x_full;  // physical, fixed baked in
};

class BarrierSolver {
 public:
  BarrierSolver(const ConvexProgram& prog, const Presolved& pre, const SolverOptions& opts)
      : prog_(prog), pre_(pre), opts_(opts), blocks_(build_blocks(prog, pre)) {
    n_ = pre_.free_ids.size();
    m_eq_ = pre_.eq.size();
    for (std::size_t r = 0; r < n_; ++r) {
      if (prog_.layout.ref(pre_.free_ids[r]).kind == Quantity::position) {
        free_positions_ = true;
        break;
      }
    }
    band_structure();
  }

  // Runs the barrier loop from a strictly feasible physical start point.
  SolveStats run(std::vector<double>& x_full_io) {
    SolveStats stats;
    Iterate it;
    it.x_full = x_full_io;
    it.x_int.resize(n_);
    for (std::size_t r = 0; r < n_; ++r) it.x_int[r] = it.x_full[pre_.free_ids[r]] / pre_.unit[r];
    sync_full(it);

    double mu = initial_mu(it);
    last_mult_norm_ = 0.0;
    init_duals(it, mu);
    best_score_ = kInf;
    last_score_ = kInf;
    int iterations = 0;
    bool converged = false;
    std::string message;

    std::vector<double> y(m_eq_, 0.0);
    while (iterations < opts_.max_iterations) {
      // Inner Newton loop at fixed barrier weight. A stage ends when the
      // decrement is small or further merit progress would be below the
      // merit's own evaluation noise; full convergence is checked after
      // every accepted step.
      double stage_best_score = kInf;
      int stage_stalls = 0;
      int polish_steps = 0;
      for (int inner = 0; inner < 40 && iterations < opts_.max_iterations; ++inner) {
        StepResult step = newton_step(it, mu, y);
        if (std::getenv("MACFLOW_TRACE")) {
          const KktResiduals r = residuals_at(it, mu, y);
          std::fprintf(stderr, "it=%d mu=%.3e dec2=%.3e alpha=%.3e phi=%.10e stat=%.2e feas=%.2e comp=%.2e\n",
                       iterations, mu, step.decrement_sq, step.alpha, barrier_value(it, mu),
                       r.stationarity, r.feasibility, r.complementarity);
        }
        if (!step.ok) {
          stats.status = TerminationStatus::numerical_failure;
          stats.message = step.message;
          finish(stats, it, mu, y, iterations);
          x_full_io = it.x_full;
          return stats;
        }
        ++iterations;
        const KktResiduals step_res = residuals_at(it, mu, y);
        const double score =
            std::max({step_res.stationarity, step_res.feasibility, step_res.complementarity});
        last_score_ = score;
        if (score < best_score_) {
          best_score_ = score;
          best_it_ = it;
          best_y_ = y;
          best_z_cap_ = z_cap_;
          best_z_lin_ = z_lin_;
          best_z_lb_ = z_lb_;
          best_z_ub_ = z_ub_;
          best_mu_ = mu;
        }
        if (step_res.within(opts_.kkt_tolerance)) {
          converged = true;
          break;
        }
        if (score < 0.99 * stage_best_score) {
          stage_best_score = score;
          stage_stalls = 0;
        } else {
          ++stage_stalls;
        }
        // Do not descend in mu while stationarity lags the complementarity
        // level; polish at fixed mu instead, but only for a bounded number of
        // steps (the polish rate can turn linear where the curvature model is
        // clipped).
        if (step.decrement_sq <= 0.5 * mu) {
          const bool centered =
              step_res.stationarity <=
              std::max(0.9 * opts_.kkt_tolerance, 2.0 * step_res.complementarity);
          // Deep in the endgame the clipped-model polish converges linearly;
          // the extra steps are cheap and each one still earns a few digits.
          const int polish_cap = score <= 1e-6 ? 25 : 8;
          if (centered || ++polish_steps >= polish_cap) break;
        }
        if (step.alpha < opts_.min_step || stage_stalls >= 3) {
          break;
        }
      }
      if (converged) break;
      last_mult_norm_ = mult_norm(it, mu, y);
      // Tighter barrier weights than the tolerance requires only push the
      // KKT systems past double precision.
      const double floor = 0.005 * opts_.kkt_tolerance * (1.0 + last_mult_norm_);
      if (mu <= floor * 1.0001) {
        message = "barrier weight at the tolerance floor without meeting the KKT target";
        break;
      }
      mu = std::max(mu * opts_.barrier_reduction, floor);
      recenter_duals(it, mu);
    }

    if (!converged && best_score_ < kInf) {
      // Report the best iterate seen rather than wherever the loop stopped.
      it = best_it_;
      y = best_y_;
      z_cap_ = best_z_cap_;
      z_lin_ = best_z_lin_;
      z_lb_ = best_z_lb_;
      z_ub_ = best_z_ub_;
      mu = best_mu_;
      converged = residuals_at(it, mu, y).within(opts_.kkt_tolerance);
    }
    if (!converged && best_score_ < 1e-5) {
      // Final primal polish: a few exact-Hessian Newton steps (with inertia
      // control) can close the last digits the clipped model cannot; the
      // result is kept only when the residuals actually improve.
      Iterate keep_it = it;
      auto keep_y = y;
      auto keep_zc = z_cap_;
      auto keep_zl = z_lin_;
      auto keep_lb = z_lb_;
      auto keep_ub = z_ub_;
      const KktResiduals before = residuals_at(it, mu, y);
      double best_polish =
          std::max({before.stationarity, before.feasibility, before.complementarity});
      force_exact_ = true;
      for (int polish = 0; polish < 3; ++polish) {
        StepResult step = newton_step(it, mu, y);
        if (!step.ok || step.alpha == 0.0) break;
        const KktResiduals res = residuals_at(it, mu, y);
        const double score = std::max({res.stationarity, res.feasibility, res.complementarity});
        if (score >= best_polish) break;
        best_polish = score;
        keep_it = it;
        keep_y = y;
        keep_zc = z_cap_;
        keep_zl = z_lin_;
        keep_lb = z_lb_;
        keep_ub = z_ub_;
        if (res.within(opts_.kkt_tolerance)) {
          converged = true;
          break;
        }
      }
      force_exact_ = false;
      it = keep_it;
      y = keep_y;
      z_cap_ = keep_zc;
      z_lin_ = keep_zl;
      z_lb_ = keep_lb;
      z_ub_ = keep_ub;
    }
    if (!converged) {
      // Final certificate polish: pull stale complementarity products down to
      // the tolerance level, then recompute the least-squares equality
      // multipliers; keep whatever improves the residual triple.
      const KktResiduals before = residuals_at(it, mu, y);
      const double sb =
          std::max({before.stationarity, before.feasibility, before.complementarity});
      const auto saved_z_cap = z_cap_;
      const auto saved_z_lin = z_lin_;
      const auto saved_z_lb = z_lb_;
      const auto saved_z_ub = z_ub_;
      const double mu_target = 0.2 * opts_.kkt_tolerance * (1.0 + mult_norm(it, mu, y));
      auto cap_product = [mu_target](double z, double slack) {
        return std::min(z, mu_target / slack);
      };
      for (std::size_t j = 0; j < pre_.cap_rows.size(); ++j) {
        z_cap_[j] = cap_product(z_cap_[j], -prog_.capacity[pre_.cap_rows[j]].value(it.x_full));
      }
      for (std::size_t j = 0; j < pre_.lin_rows.size(); ++j) {
        z_lin_[j] = cap_product(z_lin_[j],
                                -prog_.linear_inequalities[pre_.lin_rows[j]].evaluate(it.x_full));
      }
      for (std::size_t r = 0; r < n_; ++r) {
        if (std::isfinite(pre_.lb_int[r])) {
          z_lb_[r] = cap_product(z_lb_[r], it.x_int[r] - pre_.lb_int[r]);
        }
        if (std::isfinite(pre_.ub_int[r])) {
          z_ub_[r] = cap_product(z_ub_[r], pre_.ub_int[r] - it.x_int[r]);
        }
      }
      std::vector<double> y_ls = y;
      polish_duals(it, y_ls);

      // Bound duals are also free certificates: absorb what is left of each
      // bounded variable's stationarity residual whenever the complementarity
      // cost of doing so is negligible.
      {
        const Multipliers mm = multipliers_at(it, mu, y_ls);
        std::vector<double> resid(prog_.variable_count(), 0.0);
        prog_.objective.add_gradient(it.x_full, resid);
        std::vector<LinearTerm> sc;
        for (std::size_t i = 0; i < prog_.capacity.size(); ++i) {
          if (mm.capacity[i] == 0.0) continue;
          sc.clear();
          prog_.capacity[i].append_gradient(it.x_full, mm.capacity[i], sc);
          for (const LinearTerm& t : sc) resid[t.index] += t.coeff;
        }
        for (std::size_t i = 0; i < prog_.linear_inequalities.size(); ++i) {
          if (mm.linear_inequality[i] == 0.0) continue;
          for (const LinearTerm& t : prog_.linear_inequalities[i].terms) {
            resid[t.index] += mm.linear_inequality[i] * t.coeff;
          }
        }
        for (std::size_t i = 0; i < prog_.equalities.size(); ++i) {
          if (mm.equality[i] == 0.0) continue;
          for (const LinearTerm& t : prog_.equalities[i].terms) {
            resid[t.index] += mm.equality[i] * t.coeff;
          }
        }
        for (std::size_t i = 0; i < prog_.variable_count(); ++i) {
          resid[i] += mm.bound_upper[i] - mm.bound_lower[i];
        }
        const double comp_budget = 0.05 * opts_.kkt_tolerance * (1.0 + mult_norm(it, mu, y_ls));
        for (std::size_t r = 0; r < n_; ++r) {
          const std::size_t g = pre_.free_ids[r];
          const double want = resid[g];  // want z adjustments to cancel this
          if (want == 0.0) continue;
          if (std::isfinite(pre_.lb_int[r])) {
            const double slack_phys = (it.x_int[r] - pre_.lb_int[r]) * pre_.unit[r];
            const double dz = want * pre_.unit[r];  // internal-scale dual shift
            if (z_lb_[r] + dz >= 0.0 && std::abs(want) * slack_phys <= comp_budget) {
              z_lb_[r] += dz;
              continue;
            }
          }
          if (std::isfinite(pre_.ub_int[r])) {
            const double slack_phys = (pre_.ub_int[r] - it.x_int[r]) * pre_.unit[r];
            const double dz = -want * pre_.unit[r];
            if (z_ub_[r] + dz >= 0.0 && std::abs(want) * slack_phys <= comp_budget) {
              z_ub_[r] += dz;
            }
          }
        }
        polish_duals(it, y_ls);
      }

      const KktResiduals after = residuals_at(it, mu, y_ls);
      const double sa = std::max({after.stationarity, after.feasibility, after.complementarity});
      if (sa < sb) {
        y = y_ls;
        converged = after.within(opts_.kkt_tolerance);
      } else {
        z_cap_ = saved_z_cap;
        z_lin_ = saved_z_lin;
        z_lb_ = saved_z_lb;
        z_ub_ = saved_z_ub;
      }
    }
    stats.status = converged ? TerminationStatus::optimal
                             : (iterations >= opts_.max_iterations ? TerminationStatus::max_iterations
                                                                   : TerminationStatus::numerical_failure);
    if (!converged && stats.status == TerminationStatus::numerical_failure) stats.message = message;
    finish(stats, it, mu, y, iterations);
    x_full_io = it.x_full;
    return stats;
  }

 private:
  struct StepResult {
    bool ok = false;
    double alpha = 0.0;
    double decrement_sq = 0.0;
    double merit_drop = 0.0;
    std::string message;
  };

  void sync_full(Iterate& it) const {
    for (std::size_t r = 0; r < n_; ++r) it.x_full[pre_.free_ids[r]] = it.x_int[r] * pre_.unit[r];
  }

  void band_structure() {
    // Augmented ordering: the variables of knot k, then the equality rows
    // whose latest variable lives at knot k. Dynamics rows then sit right
    // after the two knots they couple, keeping the KKT matrix banded.
    const std::size_t knots = prog_.layout.knots();
    aug_of_var_.assign(n_, 0);
    aug_of_row_.assign(m_eq_, 0);
    std::vector<std::vector<std::size_t>> rows_at(knots);
    for (std::size_t e = 0; e < m_eq_; ++e) {
      int hi = 0;
      for (const LinearTerm& t : pre_.eq[e].terms) hi = std::max(hi, blocks_.knot[t.index]);
      rows_at[static_cast<std::size_t>(hi)].push_back(e);
    }
    aug_sign_.clear();
    std::size_t pos = 0;
    for (std::size_t k = 0; k < knots; ++k) {
      for (std::size_t r : blocks_.members[k]) {
        aug_of_var_[r] = pos++;
        aug_sign_.push_back(1);
      }
      for (std::size_t e : rows_at[k]) {
        aug_of_row_[e] = pos++;
        aug_sign_.push_back(-1);
      }
    }
    na_ = pos;

    aug_bw_ = 0;
    for (std::size_t k = 0; k < knots; ++k) {
      const auto& mem = blocks_.members[k];
      if (!mem.empty()) {
        aug_bw_ = std::max(aug_bw_, aug_of_var_[mem.back()] - aug_of_var_[mem.front()]);
      }
    }
    for (std::size_t e = 0; e < m_eq_; ++e) {
      for (const LinearTerm& t : pre_.eq[e].terms) {
        const std::size_t pv = aug_of_var_[t.index];
        const std::size_t pr = aug_of_row_[e];
        aug_bw_ = std::max(aug_bw_, pr > pv ? pr - pv : pv - pr);
      }
    }
  }

  void init_duals(const Iterate& it, double mu) {
    z_cap_.assign(pre_.cap_rows.size(), 0.0);
    for (std::size_t j = 0; j < pre_.cap_rows.size(); ++j) {
      z_cap_[j] = mu / -prog_.capacity[pre_.cap_rows[j]].value(it.x_full);
    }
    z_lin_.assign(pre_.lin_rows.size(), 0.0);
    for (std::size_t j = 0; j < pre_.lin_rows.size(); ++j) {
      z_lin_[j] = mu / -prog_.linear_inequalities[pre_.lin_rows[j]].evaluate(it.x_full);
    }
    z_lb_.assign(n_, 0.0);
    z_ub_.assign(n_, 0.0);
    for (std::size_t r = 0; r < n_; ++r) {
      if (std::isfinite(pre_.lb_int[r])) z_lb_[r] = mu / (it.x_int[r] - pre_.lb_int[r]);
      if (std::isfinite(pre_.ub_int[r])) z_ub_[r] = mu / (pre_.ub_int[r] - it.x_int[r]);
    }
  }

  // Pulls stale duals into a window around mu/slack after a barrier cut;
  // pairs that track the central path are left alone.
  void recenter_duals(const Iterate& it, double mu) {
    const double kappa = std::max(2.0, 1.0 / opts_.barrier_reduction);
    auto window = [kappa, mu](double z, double slack) {
      const double center = mu / slack;
      return std::clamp(z, center / kappa, center * kappa);
    };
    for (std::size_t j = 0; j < pre_.cap_rows.size(); ++j) {
      z_cap_[j] = window(z_cap_[j], -prog_.capacity[pre_.cap_rows[j]].value(it.x_full));
    }
    for (std::size_t j = 0; j < pre_.lin_rows.size(); ++j) {
      z_lin_[j] =
          window(z_lin_[j], -prog_.linear_inequalities[pre_.lin_rows[j]].evaluate(it.x_full));
    }
    for (std::size_t r = 0; r < n_; ++r) {
      if (std::isfinite(pre_.lb_int[r])) z_lb_[r] = window(z_lb_[r], it.x_int[r] - pre_.lb_int[r]);
      if (std::isfinite(pre_.ub_int[r])) z_ub_[r] = window(z_ub_[r], pre_.ub_int[r] - it.x_int[r]);
    }
  }

  // Least-squares equality multipliers at the current point: solve
  // [I A^T; A 0](u, y) = (-r0, 0), so y minimizes |r0 + A^T y|.
  bool polish_duals(const Iterate& it, std::vector<double>& y_out) {
    grad_full_.assign(prog_.variable_count(), 0.0);
    prog_.objective.add_gradient(it.x_full, grad_full_);
    scratch_.clear();
    for (std::size_t j = 0; j < pre_.cap_rows.size(); ++j) {
      prog_.capacity[pre_.cap_rows[j]].append_gradient(it.x_full, z_cap_[j], scratch_);
    }
    for (const LinearTerm& t : scratch_) grad_full_[t.index] += t.coeff;
    for (std::size_t j = 0; j < pre_.lin_rows.size(); ++j) {
      const LinearConstraint& c = prog_.linear_inequalities[pre_.lin_rows[j]];
      for (const LinearTerm& t : c.terms) grad_full_[t.index] += z_lin_[j] * t.coeff;
    }
    std::vector<double> r0(n_);
    for (std::size_t r = 0; r < n_; ++r) {
      double v = grad_full_[pre_.free_ids[r]] * pre_.unit[r];
      if (std::isfinite(pre_.lb_int[r])) v -= z_lb_[r];
      if (std::isfinite(pre_.ub_int[r])) v += z_ub_[r];
      r0[r] = v;
    }
    linalg::BandLdlt aug(na_, aug_bw_);
    for (std::size_t r = 0; r < n_; ++r) aug.add(aug_of_var_[r], aug_of_var_[r], 1.0);
    for (std::size_t e = 0; e < m_eq_; ++e) {
      const std::size_t p = aug_of_row_[e];
      aug.add(p, p, -1e-12);
      for (const LinearTerm& t : pre_.eq[e].terms) aug.add(p, aug_of_var_[t.index], t.coeff);
    }
    if (aug.factor(aug_sign_) != 0) return false;
    aug_rhs_.assign(na_, 0.0);
    for (std::size_t r = 0; r < n_; ++r) aug_rhs_[aug_of_var_[r]] = -r0[r];
    aug.solve(aug_rhs_);
    y_out.resize(m_eq_);
    for (std::size_t e = 0; e < m_eq_; ++e) y_out[e] = aug_rhs_[aug_of_row_[e]];
    return true;
  }

  double barrier_value(const Iterate& it, double mu) const {
    double phi = prog_.objective.value(it.x_full);
    for (std::size_t r = 0; r < n_; ++r) {
      if (std::isfinite(pre_.lb_int[r])) {
        const double s = it.x_int[r] - pre_.lb_int[r];
        if (s <= 0.0) return kInf;
        phi -= mu * std::log(s);
      }
      if (std::isfinite(pre_.ub_int[r])) {
        const double s = pre_.ub_int[r] - it.x_int[r];
        if (s <= 0.0) return kInf;
        phi -= mu * std::log(s);
      }
    }
    for (std::size_t i : pre_.cap_rows) {
      const double s = -prog_.capacity[i].value(it.x_full);
      if (s <= 0.0) return kInf;
      phi -= mu * std::log(s);
    }
    for (std::size_t i : pre_.lin_rows) {
      const double s = -prog_.linear_inequalities[i].evaluate(it.x_full);
      if (s <= 0.0) return kInf;
      phi -= mu * std::log(s);
    }
    return phi;
  }

  // Internal-scale gradient of the barrier function.
  void barrier_gradient(const Iterate& it, double mu, std::vector<double>& grad_int) const {
    grad_full_.assign(prog_.variable_count(), 0.0);
    prog_.objective.add_gradient(it.x_full, grad_full_);
    scratch_.clear();
    for (std::size_t i : pre_.cap_rows) {
      const double s = -prog_.capacity[i].value(it.x_full);
      prog_.capacity[i].append_gradient(it.x_full, mu / s, scratch_);
    }
    for (const LinearTerm& t : scratch_) grad_full_[t.index] += t.coeff;
    for (std::size_t i : pre_.lin_rows) {
      const LinearConstraint& c = prog_.linear_inequalities[i];
      const double s = -c.evaluate(it.x_full);
      for (const LinearTerm& t : c.terms) grad_full_[t.index] += mu / s * t.coeff;
    }
    grad_int.assign(n_, 0.0);
    for (std::size_t r = 0; r < n_; ++r) {
      grad_int[r] = grad_full_[pre_.free_ids[r]] * pre_.unit[r];
      if (std::isfinite(pre_.lb_int[r])) grad_int[r] -= mu / (it.x_int[r] - pre_.lb_int[r]);
      if (std::isfinite(pre_.ub_int[r])) grad_int[r] += mu / (pre_.ub_int[r] - it.x_int[r]);
    }
  }

  StepResult newton_step(Iterate& it, double mu, std::vector<double>& y) {
    StepResult out;

    std::vector<double> grad_int;
    barrier_gradient(it, mu, grad_int);

    // Assemble the augmented KKT matrix [W A^T; A 0] banded in the
    // knot-interleaved order; the true matrix is kept for refinement and the
    // factored copy carries the regularization.
    aug_true_ = linalg::BandLdlt(na_, aug_bw_);
    hess_diag_full_.assign(prog_.variable_count(), 0.0);
    prog_.objective.add_hessian_diag(it.x_full, hess_diag_full_);
    for (std::size_t r = 0; r < n_; ++r) {
      const std::size_t g = pre_.free_ids[r];
      double d = hess_diag_full_[g] * pre_.unit[r] * pre_.unit[r];
      if (std::isfinite(pre_.lb_int[r])) d += z_lb_[r] / (it.x_int[r] - pre_.lb_int[r]);
      if (std::isfinite(pre_.ub_int[r])) d += z_ub_[r] / (pre_.ub_int[r] - it.x_int[r]);
      aug_true_.add(aug_of_var_[r], aug_of_var_[r], d);
    }
    auto add_w = [&](std::size_t gi, std::size_t gj, double v_phys) {
      if (pre_.fixed[gi] || pre_.fixed[gj]) return;
      const std::size_t ri = static_cast<std::size_t>(pre_.pos[gi]);
      const std::size_t rj = static_cast<std::size_t>(pre_.pos[gj]);
      aug_true_.add(aug_of_var_[ri], aug_of_var_[rj], v_phys * pre_.unit[ri] * pre_.unit[rj]);
    };
    // With the trajectory fixed the program is genuinely convex and the
    // exact Hessian gives quadratic endgame convergence. With free positions
    // the rate rows are not jointly convex, and the positive semidefinite
    // part of each row's curvature is the model that keeps steps productive.
    const bool convexify = free_positions_ && !force_exact_;
    for (std::size_t j = 0; j < pre_.cap_rows.size(); ++j) {
      const CapacityConstraint& c = prog_.capacity[pre_.cap_rows[j]];
      const double s = -c.value(it.x_full);
      c.accumulate_hessian(it.x_full, z_cap_[j], z_cap_[j] / s, add_w, convexify);
    }
    for (std::size_t j = 0; j < pre_.lin_rows.size(); ++j) {
      const LinearConstraint& c = prog_.linear_inequalities[pre_.lin_rows[j]];
      const double s = -c.evaluate(it.x_full);
      for (const LinearTerm& ta : c.terms) {
        for (const LinearTerm& tb : c.terms) {
          if (tb.index < ta.index) continue;
          add_w(ta.index, tb.index, z_lin_[j] / s * ta.coeff * tb.coeff);
        }
      }
    }
    for (std::size_t e = 0; e < m_eq_; ++e) {
      for (const LinearTerm& t : pre_.eq[e].terms) {
        aug_true_.add(aug_of_row_[e], aug_of_var_[t.index], t.coeff);
      }
    }

    // Inertia-controlled factorization: the exact Hessian is kept whenever
    // the reduced problem is convex there (rate rows are not globally convex
    // in the positions); otherwise a Levenberg shift on the primal block is
    // escalated until the inertia is (n, m).
    double reg_primal = 0.0;
    double reg_dual = 1e-12;
    bool factored = false;
    for (int attempt = 0; attempt < 30 && !factored; ++attempt) {
      aug_fact_ = aug_true_;
      for (std::size_t r = 0; r < n_; ++r) {
        const std::size_t p = aug_of_var_[r];
        aug_fact_.add(p, p, reg_primal * (1.0 + std::abs(aug_true_.at(p, p))) + 1e-13);
      }
      for (std::size_t e = 0; e < m_eq_; ++e) {
        const std::size_t p = aug_of_row_[e];
        aug_fact_.add(p, p, -reg_dual);
      }
      factored = aug_fact_.factor(aug_sign_) == 0;
      if (!factored) {
        reg_primal = reg_primal == 0.0 ? 1e-10 : reg_primal * 33.0;
        reg_dual *= 3.0;
        if (reg_primal > 1e10) break;
      }
    }
    if (!factored) {
      out.message = "augmented KKT system could not be factored with acceptable inertia";
      return out;
    }

    std::vector<double> rp(m_eq_);
    for (std::size_t r = 0; r < m_eq_; ++r) {
      double v = -pre_.eq[r].rhs;
      for (const LinearTerm& t : pre_.eq[r].terms) v += t.coeff * it.x_int[t.index];
      rp[r] = v;  // A x - b
    }

    auto kkt_solve = [&](const std::vector<double>& bx, const std::vector<double>& bp,
                         std::vector<double>& dx_out, std::vector<double>& y_out) {
      aug_rhs_.assign(na_, 0.0);
      for (std::size_t r = 0; r < n_; ++r) aug_rhs_[aug_of_var_[r]] = bx[r];
      for (std::size_t e = 0; e < m_eq_; ++e) aug_rhs_[aug_of_row_[e]] = bp[e];
      aug_fact_.solve(aug_rhs_);
      dx_out.resize(n_);
      y_out.resize(m_eq_);
      for (std::size_t r = 0; r < n_; ++r) dx_out[r] = aug_rhs_[aug_of_var_[r]];
      for (std::size_t e = 0; e < m_eq_; ++e) y_out[e] = aug_rhs_[aug_of_row_[e]];
    };
    auto kkt_residual = [&](const std::vector<double>& bx, const std::vector<double>& bp,
                            const std::vector<double>& dx_in, const std::vector<double>& y_in,
                            std::vector<double>& res_x, std::vector<double>& res_p) {
      aug_rhs_.assign(na_, 0.0);
      for (std::size_t r = 0; r < n_; ++r) aug_rhs_[aug_of_var_[r]] = dx_in[r];
      for (std::size_t e = 0; e < m_eq_; ++e) aug_rhs_[aug_of_row_[e]] = y_in[e];
      aug_out_.assign(na_, 0.0);
      aug_true_.multiply(aug_rhs_, aug_out_);
      res_x.resize(n_);
      res_p.resize(m_eq_);
      for (std::size_t r = 0; r < n_; ++r) res_x[r] = bx[r] - aug_out_[aug_of_var_[r]];
      for (std::size_t e = 0; e < m_eq_; ++e) res_p[e] = bp[e] - aug_out_[aug_of_row_[e]];
    };

    std::vector<double> bx(n_);
    for (std::size_t r = 0; r < n_; ++r) bx[r] = -grad_int[r];
    std::vector<double> bp(m_eq_);
    for (std::size_t r = 0; r < m_eq_; ++r) bp[r] = -rp[r];

    std::vector<double> dx, ynew;
    kkt_solve(bx, bp, dx, ynew);
    // Iterative refinement against the unregularized matrix, until the
    // equality part of the step is satisfied essentially exactly.
    std::vector<double> res_x, res_p, cx, cy;
    for (int refine = 0; refine < 6; ++refine) {
      kkt_residual(bx, bp, dx, ynew, res_x, res_p);
      double rnorm = 0.0;
      for (double v : res_x) rnorm = std::max(rnorm, std::abs(v));
      for (double v : res_p) rnorm = std::max(rnorm, std::abs(v));
      double bnorm = 1.0;
      for (double v : bx) bnorm = std::max(bnorm, std::abs(v));
      for (double v : bp) bnorm = std::max(bnorm, std::abs(v));
      if (rnorm <= 1e-13 * bnorm && refine >= 2) break;
      kkt_solve(res_x, res_p, cx, cy);
      for (std::size_t r = 0; r < n_; ++r) dx[r] += cx[r];
      for (std::size_t r = 0; r < m_eq_; ++r) ynew[r] += cy[r];
    }

    double dec = 0.0;
    for (std::size_t r = 0; r < n_; ++r) dec += -grad_int[r] * dx[r];
    for (std::size_t r = 0; r < m_eq_; ++r) {
      double adx = 0.0;
      for (const LinearTerm& t : pre_.eq[r].terms) adx += t.coeff * dx[t.index];
      dec -= ynew[r] * adx;
    }
    out.decrement_sq = std::max(dec, 0.0);

    // Dual steps from the linearized perturbed complementarity z s = mu.
    std::vector<double> dz_cap(z_cap_.size()), dz_lin(z_lin_.size());
    std::vector<double> dz_lb(n_, 0.0), dz_ub(n_, 0.0);
    std::vector<LinearTerm> grow;
    for (std::size_t j = 0; j < pre_.cap_rows.size(); ++j) {
      const CapacityConstraint& c = prog_.capacity[pre_.cap_rows[j]];
      const double s = -c.value(it.x_full);
      grow.clear();
      c.append_gradient(it.x_full, 1.0, grow);
      double gdx = 0.0;
      for (const LinearTerm& t : grow) {
        if (pre_.fixed[t.index]) continue;
        const std::size_t r = static_cast<std::size_t>(pre_.pos[t.index]);
        gdx += t.coeff * pre_.unit[r] * dx[r];
      }
      dz_cap[j] = (mu - z_cap_[j] * s) / s + z_cap_[j] / s * gdx;
    }
    for (std::size_t j = 0; j < pre_.lin_rows.size(); ++j) {
      const LinearConstraint& c = prog_.linear_inequalities[pre_.lin_rows[j]];
      const double s = -c.evaluate(it.x_full);
      double gdx = 0.0;
      for (const LinearTerm& t : c.terms) {
        if (pre_.fixed[t.index]) continue;
        const std::size_t r = static_cast<std::size_t>(pre_.pos[t.index]);
        gdx += t.coeff * pre_.unit[r] * dx[r];
      }
      dz_lin[j] = (mu - z_lin_[j] * s) / s + z_lin_[j] / s * gdx;
    }
    for (std::size_t r = 0; r < n_; ++r) {
      if (std::isfinite(pre_.lb_int[r])) {
        const double s = it.x_int[r] - pre_.lb_int[r];
        dz_lb[r] = (mu - z_lb_[r] * s) / s - z_lb_[r] / s * dx[r];
      }
      if (std::isfinite(pre_.ub_int[r])) {
        const double s = pre_.ub_int[r] - it.x_int[r];
        dz_ub[r] = (mu - z_ub_[r] * s) / s + z_ub_[r] / s * dx[r];
      }
    }
    double alpha_dual = 1.0;
    auto cap_alpha = [&alpha_dual](double z, double dz) {
      if (dz < 0.0) alpha_dual = std::min(alpha_dual, 0.995 * z / -dz);
    };
    for (std::size_t j = 0; j < z_cap_.size(); ++j) cap_alpha(z_cap_[j], dz_cap[j]);
    for (std::size_t j = 0; j < z_lin_.size(); ++j) cap_alpha(z_lin_[j], dz_lin[j]);
    for (std::size_t r = 0; r < n_; ++r) {
      if (std::isfinite(pre_.lb_int[r])) cap_alpha(z_lb_[r], dz_lb[r]);
      if (std::isfinite(pre_.ub_int[r])) cap_alpha(z_ub_[r], dz_ub[r]);
    }

    // Fraction-to-boundary on the box and on the linearized inequality
    // slacks, then backtracking on feasibility of the nonlinear rows and
    // Armijo decrease of the barrier merit.
    double alpha = 1.0;
    for (std::size_t r = 0; r < n_; ++r) {
      if (dx[r] < 0.0 && std::isfinite(pre_.lb_int[r])) {
        alpha = std::min(alpha, 0.995 * (it.x_int[r] - pre_.lb_int[r]) / -dx[r]);
      } else if (dx[r] > 0.0 && std::isfinite(pre_.ub_int[r])) {
        alpha = std::min(alpha, 0.995 * (pre_.ub_int[r] - it.x_int[r]) / dx[r]);
      }
    }
    std::vector<double> cap_slack(pre_.cap_rows.size());
    for (std::size_t j = 0; j < pre_.cap_rows.size(); ++j) {
      const CapacityConstraint& c = prog_.capacity[pre_.cap_rows[j]];
      const double s = -c.value(it.x_full);
      cap_slack[j] = s;
      grow.clear();
      c.append_gradient(it.x_full, 1.0, grow);
      double ds = 0.0;
      for (const LinearTerm& t : grow) {
        if (pre_.fixed[t.index]) continue;
        const std::size_t r = static_cast<std::size_t>(pre_.pos[t.index]);
        ds -= t.coeff * pre_.unit[r] * dx[r];
      }
      if (ds < 0.0) alpha = std::min(alpha, 0.995 * s / -ds);
    }
    std::vector<double> lin_slack(pre_.lin_rows.size());
    for (std::size_t j = 0; j < pre_.lin_rows.size(); ++j) {
      const LinearConstraint& c = prog_.linear_inequalities[pre_.lin_rows[j]];
      const double s = -c.evaluate(it.x_full);
      lin_slack[j] = s;
      double ds = 0.0;
      for (const LinearTerm& t : c.terms) {
        if (pre_.fixed[t.index]) continue;
        const std::size_t r = static_cast<std::size_t>(pre_.pos[t.index]);
        ds -= t.coeff * pre_.unit[r] * dx[r];
      }
      if (ds < 0.0) alpha = std::min(alpha, 0.995 * s / -ds);
    }
    const double phi0 = barrier_value(it, mu);
    double dphi = 0.0;
    for (std::size_t r = 0; r < n_; ++r) dphi += grad_int[r] * dx[r];

    // Once the predicted merit change sinks below the merit's own floating
    // point noise, Armijo certification is meaningless; any strictly
    // feasible step is accepted and progress is judged by the KKT residuals.
    const double merit_noise = 5e-15 * (1.0 + std::abs(phi0));
    const bool certify = std::abs(dphi) * alpha > merit_noise;

    Iterate trial = it;
    while (alpha >= opts_.min_step) {
      for (std::size_t r = 0; r < n_; ++r) trial.x_int[r] = it.x_int[r] + alpha * dx[r];
      sync_full(trial);
      // The nonlinear rows must keep a sliver of their current slack, not
      // merely stay positive; otherwise the next direction is born blocked.
      bool interior = true;
      for (std::size_t j = 0; j < pre_.cap_rows.size() && interior; ++j) {
        const double s_new = -prog_.capacity[pre_.cap_rows[j]].value(trial.x_full);
        if (s_new < 0.005 * cap_slack[j]) interior = false;
      }
      for (std::size_t j = 0; j < pre_.lin_rows.size() && interior; ++j) {
        const double s_new = -prog_.linear_inequalities[pre_.lin_rows[j]].evaluate(trial.x_full);
        if (s_new < 0.005 * lin_slack[j]) interior = false;
      }
      if (interior) {
        const double phi = barrier_value(trial, mu);
        if (std::isfinite(phi) &&
            (!certify || phi <= phi0 + opts_.armijo_coeff * alpha * std::min(dphi, 0.0))) {
          break;
        }
      }
      alpha *= opts_.backtrack_ratio;
    }
    if (alpha < std::max(opts_.min_step, 1e-8)) {
      // No progress possible along this direction; report the stage as done
      // rather than failing, the outer loop will tighten or stop.
      out.ok = true;
      out.alpha = 0.0;
      out.decrement_sq = 0.0;
      return out;
    }
    out.merit_drop = phi0 - barrier_value(trial, mu);
    it = trial;
    y = ynew;
    // A degenerate primal step must not be paired with a full dual move.
    if (alpha < 1e-2) alpha_dual = std::min(alpha_dual, alpha);
    for (std::size_t j = 0; j < z_cap_.size(); ++j) z_cap_[j] += alpha_dual * dz_cap[j];
    for (std::size_t j = 0; j < z_lin_.size(); ++j) z_lin_[j] += alpha_dual * dz_lin[j];
    for (std::size_t r = 0; r < n_; ++r) {
      if (std::isfinite(pre_.lb_int[r])) z_lb_[r] += alpha_dual * dz_lb[r];
      if (std::isfinite(pre_.ub_int[r])) z_ub_[r] += alpha_dual * dz_ub[r];
    }
    // Keep duals within a wide window of the barrier value so the step model
    // cannot drift arbitrarily far from the central path.
    auto clamp_dual = [mu](double z, double s) {
      const double center = mu / s;
      return std::clamp(z, 1e-8 * center, 1e8 * center);
    };
    for (std::size_t j = 0; j < z_cap_.size(); ++j) {
      z_cap_[j] = clamp_dual(z_cap_[j], -prog_.capacity[pre_.cap_rows[j]].value(it.x_full));
    }
    for (std::size_t j = 0; j < z_lin_.size(); ++j) {
      z_lin_[j] =
          clamp_dual(z_lin_[j], -prog_.linear_inequalities[pre_.lin_rows[j]].evaluate(it.x_full));
    }
    for (std::size_t r = 0; r < n_; ++r) {
      if (std::isfinite(pre_.lb_int[r])) {
        z_lb_[r] = clamp_dual(z_lb_[r], it.x_int[r] - pre_.lb_int[r]);
      }
      if (std::isfinite(pre_.ub_int[r])) {
        z_ub_[r] = clamp_dual(z_ub_[r], pre_.ub_int[r] - it.x_int[r]);
      }
    }
    out.ok = true;
    out.alpha = alpha;
    return out;
  }

  // Barrier weight at which each constraint's barrier force would match the
  // objective pull at the start point; the median over all constraints makes
  // a scale-free starting weight.
  double initial_mu(const Iterate& it) const {
    grad_full_.assign(prog_.variable_count(), 0.0);
    prog_.objective.add_gradient(it.x_full, grad_full_);
    double pull = 0.0;
    for (std::size_t r = 0; r < n_; ++r) {
      pull = std::max(pull, std::abs(grad_full_[pre_.free_ids[r]]) * pre_.unit[r]);
    }
    pull = std::max(pull, 1e-8);

    std::vector<double> candidates;
    std::vector<LinearTerm> scratch;
    for (std::size_t i : pre_.cap_rows) {
      const double slack = -prog_.capacity[i].value(it.x_full);
      scratch.clear();
      prog_.capacity[i].append_gradient(it.x_full, 1.0, scratch);
      double gnorm = 0.0;
      for (const LinearTerm& t : scratch) {
        if (pre_.fixed[t.index]) continue;
        const std::size_t r = static_cast<std::size_t>(pre_.pos[t.index]);
        gnorm = std::max(gnorm, std::abs(t.coeff) * pre_.unit[r]);
      }
      if (gnorm > 0.0) candidates.push_back(pull * slack / gnorm);
    }
    for (std::size_t i : pre_.lin_rows) {
      const LinearConstraint& c = prog_.linear_inequalities[i];
      const double slack = -c.evaluate(it.x_full);
      double gnorm = 0.0;
      for (const LinearTerm& t : c.terms) {
        if (pre_.fixed[t.index]) continue;
        const std::size_t r = static_cast<std::size_t>(pre_.pos[t.index]);
        gnorm = std::max(gnorm, std::abs(t.coeff) * pre_.unit[r]);
      }
      if (gnorm > 0.0) candidates.push_back(pull * slack / gnorm);
    }
    for (std::size_t r = 0; r < n_; ++r) {
      if (std::isfinite(pre_.lb_int[r])) candidates.push_back(pull * (it.x_int[r] - pre_.lb_int[r]));
      if (std::isfinite(pre_.ub_int[r])) candidates.push_back(pull * (pre_.ub_int[r] - it.x_int[r]));
    }
    if (candidates.empty()) return opts_.initial_barrier_weight;
    std::nth_element(candidates.begin(), candidates.begin() + candidates.size() / 2,
                     candidates.end());
    return opts_.initial_barrier_weight * std::max(candidates[candidates.size() / 2], 1e-10);
  }

  Multipliers multipliers_at(const Iterate& it, double mu, const std::vector<double>& y) const {
    (void)mu;
    Multipliers mult;
    mult.equality.assign(prog_.equalities.size(), 0.0);
    for (std::size_t r = 0; r < m_eq_; ++r) {
      const std::size_t original =
          static_cast<std::size_t>(pre_.eq[r].source - prog_.equalities.data());
      mult.equality[original] = y[r] * pre_.eq[r].scale;
    }
    mult.capacity.assign(prog_.capacity.size(), 0.0);
    for (std::size_t j = 0; j < pre_.cap_rows.size(); ++j) mult.capacity[pre_.cap_rows[j]] = z_cap_[j];
    mult.linear_inequality.assign(prog_.linear_inequalities.size(), 0.0);
    for (std::size_t j = 0; j < pre_.lin_rows.size(); ++j) {
      mult.linear_inequality[pre_.lin_rows[j]] = z_lin_[j];
    }
    mult.bound_lower.assign(prog_.variable_count(), 0.0);
    mult.bound_upper.assign(prog_.variable_count(), 0.0);
    for (std::size_t r = 0; r < n_; ++r) {
      const std::size_t g = pre_.free_ids[r];
      if (std::isfinite(pre_.lb_int[r])) mult.bound_lower[g] = z_lb_[r] / pre_.unit[r];
      if (std::isfinite(pre_.ub_int[r])) mult.bound_upper[g] = z_ub_[r] / pre_.unit[r];
    }

    // Duals of the rows the presolve consumed: each pinned a variable, and in
    // reverse consumption order that row can absorb whatever stationarity
    // residual is left on its variable (rows only reference variables pinned
    // earlier, so this is exact back-substitution).
    if (!pre_.consumed.empty()) {
      std::vector<double> resid(prog_.variable_count(), 0.0);
      prog_.objective.add_gradient(it.x_full, resid);
      std::vector<LinearTerm> scratch;
      for (std::size_t i = 0; i < prog_.capacity.size(); ++i) {
        if (mult.capacity[i] == 0.0) continue;
        scratch.clear();
        prog_.capacity[i].append_gradient(it.x_full, mult.capacity[i], scratch);
        for (const LinearTerm& t : scratch) resid[t.index] += t.coeff;
      }
      for (std::size_t i = 0; i < prog_.linear_inequalities.size(); ++i) {
        if (mult.linear_inequality[i] == 0.0) continue;
        for (const LinearTerm& t : prog_.linear_inequalities[i].terms) {
          resid[t.index] += mult.linear_inequality[i] * t.coeff;
        }
      }
      for (std::size_t i = 0; i < prog_.equalities.size(); ++i) {
        if (mult.equality[i] == 0.0) continue;
        for (const LinearTerm& t : prog_.equalities[i].terms) {
          resid[t.index] += mult.equality[i] * t.coeff;
        }
      }
      for (std::size_t i = 0; i < prog_.variable_count(); ++i) {
        resid[i] += mult.bound_upper[i] - mult.bound_lower[i];
      }
      for (auto row = pre_.consumed.rbegin(); row != pre_.consumed.rend(); ++row) {
        const double dual = -resid[row->fixed_index] / row->coeff;
        const std::size_t original =
            static_cast<std::size_t>(row->src - prog_.equalities.data());
        mult.equality[original] = dual;
        for (const LinearTerm& t : row->src->terms) resid[t.index] += dual * t.coeff;
      }
    }
    return mult;
  }

  KktResiduals residuals_at(const Iterate& it, double mu, const std::vector<double>& y) const {
    return kkt_residuals(prog_, it.x_full, multipliers_at(it, mu, y));
  }

  double mult_norm(const Iterate& it, double mu, const std::vector<double>& y) const {
    const Multipliers m = multipliers_at(it, mu, y);
    double norm = 0.0;
    for (double v : m.equality) norm = std::max(norm, std::abs(v));
    for (double v : m.capacity) norm = std::max(norm, std::abs(v));
    for (double v : m.linear_inequality) norm = std::max(norm, std::abs(v));
    for (double v : m.bound_lower) norm = std::max(norm, std::abs(v));
    for (double v : m.bound_upper) norm = std::max(norm, std::abs(v));
    return norm;
  }

  void finish(SolveStats& stats, const Iterate& it, double mu, const std::vector<double>& y,
              int iterations) const {
    const KktResiduals res = residuals_at(it, mu, y);
    stats.iterations = iterations;
    stats.kkt_stationarity = res.stationarity;
    stats.kkt_feasibility = res.feasibility;
    stats.kkt_complementarity = res.complementarity;
    stats.objective = prog_.objective.value(it.x_full);
  }

  const ConvexProgram& prog_;
  const Presolved& pre_;
  SolverOptions opts_;
  Blocks blocks_;
  std::size_t n_ = 0;
  std::size_t m_eq_ = 0;
  double last_mult_norm_ = 0.0;
  double last_score_ = kInf;
  bool free_positions_ = false;
  bool force_exact_ = false;
  // Dual iterates for the inequality rows and active bounds.
  std::vector<double> z_cap_, z_lin_, z_lb_, z_ub_;
  // Best iterate bookkeeping.
  double best_score_ = kInf;
  double best_mu_ = 0.0;
  Iterate best_it_;
  std::vector<double> best_y_, best_z_cap_, best_z_lin_, best_z_lb_, best_z_ub_;
  // Augmented-system ordering and workspaces.
  std::vector<std::size_t> aug_of_var_, aug_of_row_;
  std::vector<int> aug_sign_;
  std::size_t na_ = 0;
  std::size_t aug_bw_ = 0;
  linalg::BandLdlt aug_true_, aug_fact_;
  mutable std::vector<double> aug_rhs_, aug_out_;

  mutable std::vector<double> grad_full_;
  mutable std::vector<double> hess_diag_full_;
  mutable std::vector<LinearTerm> scratch_;
};

Solution degraded_solution(const ConvexProgram& prog, const Presolved& pre,
                           TerminationStatus status, const std::string& message) {
  std::vector<double> x = pre.x_full;
  for (std::size_t r = 0; r < pre.free_ids.size(); ++r) {
    const std::size_t g = pre.free_ids[r];
    const double lb = prog.lower_bounds[g];
    const double ub = prog.upper_bounds[g];
    double v = 0.0;
    if (std::isfinite(lb) && std::isfinite(ub)) {
      v = 0.5 * (lb + ub);
    } else if (std::isfinite(lb)) {
      v = lb;
    } else if (std::isfinite(ub)) {
      v = ub;
    }
    x[g] = v;
  }
  SolveStats stats;
  stats.status = status;
  stats.message = message;
  Solution sol = assemble_solution(prog.scenario, prog, x, stats);
  return sol;
}

double total_initial_data(const ScenarioConfig& cfg) {
  double d = 0.0;
  for (const NodeParams& n : cfg.nodes) d += n.initial_data_bits;
  return d;
}

}  // namespace

Solution solve(const ConvexProgram& prog, const SolverOptions& opts) {
  Presolved pre = presolve(prog);
  if (!pre.infeasibility.empty()) {
    return degraded_solution(prog, pre, TerminationStatus::infeasible, pre.infeasibility);
  }

  std::string why_not;
  auto start = initial_point(prog, nullptr, &why_not);
  std::string restoration_note;

  if (!start && prog.goal == ProgramGoal::min_energy && opts.feasibility_restoration) {
    // Phase in through the maximum-throughput program: it certifies data
    // infeasibility and otherwise donates a workable trajectory.
    ConvexProgram max_prog = build_program(prog.scenario, ProgramGoal::max_data);
    SolverOptions sub_opts = opts;
    sub_opts.feasibility_restoration = false;
    Solution max_sol = solve(max_prog, sub_opts);
    if (max_sol.stats.status == TerminationStatus::optimal) {
      const double deliverable = -max_sol.objective_value / kMaxDataObjectiveScale;
      const double requested = total_initial_data(prog.scenario);
      if (requested > deliverable) {
        std::ostringstream msg;
        msg << "requested " << requested << " bits exceed the maximum deliverable "
            << deliverable << " bits over this horizon";
        return degraded_solution(prog, pre, TerminationStatus::infeasible, msg.str());
      }
      TrajectoryHint hint;
      for (const NodeTrajectory& traj : max_sol.nodes) {
        hint.speed_mps.push_back(traj.speed_mps);
        hint.position_m.push_back(traj.position_m);
      }
      start = initial_point(prog, &hint, &why_not);
      restoration_note = "started from the maximum-throughput trajectory";
    }
  }
  if (!start) {
    return degraded_solution(prog, pre, TerminationStatus::numerical_failure,
                             "no strictly feasible start point: " + why_not);
  }

  std::vector<double> x_full = pre.x_full;
  for (std::size_t r = 0; r < pre.free_ids.size(); ++r) {
    const std::size_t g = pre.free_ids[r];
    double v = (*start)[g];
    const double lb = prog.lower_bounds[g];
    const double ub = prog.upper_bounds[g];
    if (std::isfinite(lb) && std::isfinite(ub)) {
      const double inset = 1e-6 * (ub - lb);
      v = std::clamp(v, lb + inset, ub - inset);
    } else if (std::isfinite(lb)) {
      v = std::max(v, lb + 1e-9 * (1.0 + std::abs(lb)));
    } else if (std::isfinite(ub)) {
      v = std::min(v, ub - 1e-9 * (1.0 + std::abs(ub)));
    }
    x_full[g] = v;
  }

  // A couple of deterministic retries over the starting barrier weight: the
  // right initial centering is problem-dependent and a failed attempt is
  // cheap compared to shipping a loose point.
  SolveStats stats;
  std::vector<double> x_best;
  int total_iterations = 0;
  bool first = true;
  for (double weight :
       {opts.initial_barrier_weight, 3.0 * opts.initial_barrier_weight,
        0.3 * opts.initial_barrier_weight, 10.0 * opts.initial_barrier_weight,
        100.0 * opts.initial_barrier_weight}) {
    SolverOptions attempt = opts;
    attempt.initial_barrier_weight = weight;
    std::vector<double> x_try = x_full;
    BarrierSolver barrier(prog, pre, attempt);
    SolveStats try_stats = barrier.run(x_try);
    total_iterations += try_stats.iterations;
    const bool better =
        first || (try_stats.status == TerminationStatus::optimal &&
                  stats.status != TerminationStatus::optimal) ||
        (try_stats.status == stats.status &&
         std::max({try_stats.kkt_stationarity, try_stats.kkt_feasibility,
                   try_stats.kkt_complementarity}) <
             std::max({stats.kkt_stationarity, stats.kkt_feasibility, stats.kkt_complementarity}));
    if (better) {
      stats = try_stats;
      x_best = x_try;
    }
    first = false;
    if (stats.status == TerminationStatus::optimal ||
        stats.status == TerminationStatus::infeasible) {
      break;
    }
  }
  stats.iterations = total_iterations;
  if (!restoration_note.empty() && stats.message.empty()) stats.message = restoration_note;
  return assemble_solution(prog.scenario, prog, x_best, std::move(stats));
}

Solution solve_scenario(const ScenarioConfig& cfg, const SolverOptions& opts) {
  const ConvexProgram prog = build_program(cfg, ProgramGoal::min_energy);
  return solve(prog, opts);
}

}  // namespace macflow
