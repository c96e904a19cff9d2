// Exact finite-horizon solver on the integer state lattice: value tables,
// optimal-action sets, compatible-decision construction, and exact policy
// evaluation by forward expectation.
#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "core.hpp"
#include "monge.hpp"

namespace dynmatch {

struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StateNotCovered : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotOptimalAfterTransfer : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t default_state_budget = 5'000'000;
inline constexpr std::size_t action_set_cap = 10'000;

// Rectangular box [0..xmax] x [0..ymax] of integer states with a row-major
// linear index (demand digits first, last type fastest within each side).
struct Lattice {
  Vec xmax, ymax;
  std::vector<std::size_t> sx, sy;  // index strides per type
  std::size_t size = 1;
  bool overflowed = false;  // size left meaningless; budget checks must fail

  static Lattice over(Vec xm, Vec ym) {
    Lattice lat;
    lat.xmax = std::move(xm);
    lat.ymax = std::move(ym);
    lat.sy.resize(lat.ymax.size());
    lat.sx.resize(lat.xmax.size());
    constexpr std::size_t cap = std::size_t{1} << 62;
    auto extend = [&](std::size_t& stride, int bound) {
      stride = lat.size;
      const std::size_t digits = static_cast<std::size_t>(bound) + 1;
      if (lat.size > cap / digits) lat.overflowed = true;
      if (!lat.overflowed) lat.size *= digits;
    };
    for (int j = static_cast<int>(lat.ymax.size()) - 1; j >= 0; --j)
      extend(lat.sy[j], lat.ymax[j]);
    for (int i = static_cast<int>(lat.xmax.size()) - 1; i >= 0; --i)
      extend(lat.sx[i], lat.xmax[i]);
    return lat;
  }

  bool contains(const Vec& x, const Vec& y) const {
    if (overflowed || x.size() != xmax.size() || y.size() != ymax.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] < 0 || x[i] > xmax[i]) return false;
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[j] < 0 || y[j] > ymax[j]) return false;
    return true;
  }

  std::size_t index(const Vec& x, const Vec& y) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) idx += sx[i] * static_cast<std::size_t>(x[i]);
    for (std::size_t j = 0; j < y.size(); ++j) idx += sy[j] * static_cast<std::size_t>(y[j]);
    return idx;
  }

  SystemState state(std::size_t idx) const {
    SystemState s;
    s.x.resize(xmax.size());
    s.y.resize(ymax.size());
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      s.x[i] = static_cast<int>(idx / sx[i]);
      idx %= sx[i];
    }
    for (std::size_t j = 0; j < s.y.size(); ++j) {
      s.y[j] = static_cast<int>(idx / sy[j]);
      idx %= sy[j];
    }
    return s;
  }
};

struct ValueTable {
  int T = 0;
  Vec xmax, ymax;  // reachable caps at the final period (the widest box)
  std::vector<Lattice> lattices;            // one box per period
  std::vector<std::vector<double>> values;  // values[t][lattices[t].index(state)]

  bool covers(int t, const SystemState& s) const {
    if (t >= T) return true;  // past the horizon the value is identically zero
    if (t < 0) return false;
    return lattices[t].contains(s.x, s.y);
  }

  double value(int t, const SystemState& s) const {
    if (t >= T) return 0.0;
    if (!covers(t, s)) throw StateNotCovered("state outside the solved lattice");
    return values[t][lattices[t].index(s.x, s.y)];
  }
};

struct ActionSet {
  std::vector<MatchingDecision> decisions;  // all optima, lexicographic order
  double value = 0.0;
  bool truncated = false;  // more optima existed than the enumeration cap
};

struct PolicyHandle {
  std::string name;
  std::function<MatchingDecision(int, const SystemState&)> decide;
};

namespace detail {

// Per-period reachable caps: the worst case stockpiles every arrival that the
// carry-over rates allow.  bound[0] covers the initial draw; each later period
// adds its own arrival ceiling on top of whatever could carry over.
inline std::pair<std::vector<Vec>, std::vector<Vec>> reachable_bounds(
    const MatchingInstance& inst) {
  std::vector<Vec> xb(inst.T), yb(inst.T);
  for (int t = 0; t < inst.T; ++t) {
    xb[t].resize(inst.m);
    yb[t].resize(inst.n);
    for (int i = 0; i < inst.m; ++i) {
      xb[t][i] = inst.demand_arrivals[t][i].max_value();
      if (t > 0 && inst.alpha[t - 1] > 0.0) xb[t][i] += xb[t - 1][i];
    }
    for (int j = 0; j < inst.n; ++j) {
      yb[t][j] = inst.supply_arrivals[t][j].max_value();
      if (t > 0 && inst.beta[t - 1] > 0.0) yb[t][j] += yb[t - 1][j];
    }
  }
  return {xb, yb};
}

inline std::vector<Lattice> build_lattices(const MatchingInstance& inst,
                                           std::size_t budget) {
  auto [xb, yb] = reachable_bounds(inst);
  std::vector<Lattice> lats;
  std::size_t total = 0;
  for (int t = 0; t < inst.T; ++t) {
    lats.push_back(Lattice::over(xb[t], yb[t]));
    if (lats.back().overflowed || lats.back().size > budget - total)
      throw BudgetExceeded("state lattice needs more than " +
                           std::to_string(budget) + " entries");
    total += lats.back().size;
  }
  return lats;
}

// Exhaustive recursion over feasible integer decisions at (x, y), row-major
// cell order with quantities ascending, so decisions appear in lexicographic
// order.  At each leaf u and v hold the leftovers and reward the immediate
// total.  fn(q, reward, u, v).
template <class Fn>
void decision_rec(const Matrix& r, std::vector<Vec>& q, Vec& u, Vec& v, int cell,
                  double reward, Fn& fn) {
  const int m = static_cast<int>(u.size()), n = static_cast<int>(v.size());
  if (cell == m * n) {
    fn(q, reward, u, v);
    return;
  }
  const int i = cell / n, j = cell % n;
  const int cap = std::min(u[i], v[j]);
  for (int val = 0; val <= cap; ++val) {
    q[i][j] = val;
    u[i] -= val;
    v[j] -= val;
    decision_rec(r, q, u, v, cell + 1, reward + r[i][j] * val, fn);
    u[i] += val;
    v[j] += val;
  }
  q[i][j] = 0;
}

template <class Fn>
void for_each_decision(const Matrix& r, const SystemState& state, Fn&& fn) {
  std::vector<Vec> q(state.x.size(), Vec(state.y.size(), 0));
  Vec u = state.x, v = state.y;
  decision_rec(r, q, u, v, 0, 0.0, fn);
}

// E V_{t+1}(alpha_t u + D, beta_t v + S) for leftovers (u, v) of period t.
inline double expected_next(const ValueTable& vt, const MatchingInstance& inst,
                            int t, const Vec& u, const Vec& v) {
  if (t + 1 >= inst.T) return 0.0;
  const int a = static_cast<int>(inst.alpha[t]), b = static_cast<int>(inst.beta[t]);
  SystemState next;
  next.x.resize(inst.m);
  next.y.resize(inst.n);
  double total = 0.0;
  for (const auto& d : enumerate_joint(inst.demand_arrivals[t + 1])) {
    for (int i = 0; i < inst.m; ++i) next.x[i] = a * u[i] + d.qty[i];
    for (const auto& s : enumerate_joint(inst.supply_arrivals[t + 1])) {
      for (int j = 0; j < inst.n; ++j) next.y[j] = b * v[j] + s.qty[j];
      total += d.prob * s.prob * vt.value(t + 1, next);
    }
  }
  return total;
}

}  // namespace detail

inline ValueTable solve_exact(const MatchingInstance& inst,
                              std::size_t budget = default_state_budget) {
  if (!inst.integer_carry())
    throw NonIntegerCarryOver("exact solve requires carry-over rates in {0, 1}");
  ValueTable vt;
  vt.T = inst.T;
  vt.lattices = detail::build_lattices(inst, budget);
  vt.xmax = vt.lattices.back().xmax;
  vt.ymax = vt.lattices.back().ymax;
  vt.values.resize(inst.T);

  for (int t = inst.T - 1; t >= 0; --t) {
    const Lattice& lat = vt.lattices[t];

    // Continuation expectation per leftover profile, shared by every decision
    // that strands the same (u, v).
    std::vector<double> cont;
    if (t + 1 < inst.T) {
      cont.resize(lat.size);
      for (std::size_t idx = 0; idx < lat.size; ++idx) {
        const SystemState uv = lat.state(idx);
        cont[idx] = detail::expected_next(vt, inst, t, uv.x, uv.y);
      }
    }

    vt.values[t].assign(lat.size, 0.0);
    const Matrix& r = inst.rewards[t];
    for (std::size_t idx = 0; idx < lat.size; ++idx) {
      const SystemState state = lat.state(idx);
      double best = std::numeric_limits<double>::lowest();
      detail::for_each_decision(r, state, [&](const std::vector<Vec>&, double reward,
                                              const Vec& u, const Vec& v) {
        const double val = reward + (cont.empty() ? 0.0 : cont[lat.index(u, v)]);
        if (val > best) best = val;
      });
      vt.values[t][idx] = best;
    }
  }
  return vt;
}

inline double optimal_objective(const ValueTable& vt, const MatchingInstance& inst) {
  double total = 0.0;
  SystemState s;
  for (const auto& d : enumerate_joint(inst.demand_arrivals[0])) {
    s.x = d.qty;
    for (const auto& sup : enumerate_joint(inst.supply_arrivals[0])) {
      s.y = sup.qty;
      total += d.prob * sup.prob * vt.value(0, s);
    }
  }
  return total;
}

inline ActionSet optimal_actions(const ValueTable& vt, const MatchingInstance& inst,
                                 int t, const SystemState& state) {
  if (t < 0 || t >= vt.T || !vt.covers(t, state))
    throw StateNotCovered("no value entries for this period and state");

  // Continuation values memoized per leftover profile for both passes.
  std::map<std::pair<Vec, Vec>, double> cont;
  auto continuation = [&](const Vec& u, const Vec& v) {
    auto it = cont.find({u, v});
    if (it != cont.end()) return it->second;
    const double val = detail::expected_next(vt, inst, t, u, v);
    cont.insert({{u, v}, val});
    return val;
  };

  const Matrix& r = inst.rewards[t];
  double best = std::numeric_limits<double>::lowest();
  detail::for_each_decision(r, state, [&](const std::vector<Vec>&, double reward,
                                          const Vec& u, const Vec& v) {
    best = std::max(best, reward + continuation(u, v));
  });

  ActionSet set;
  set.value = best;
  detail::for_each_decision(r, state, [&](const std::vector<Vec>& q, double reward,
                                          const Vec& u, const Vec& v) {
    if (reward + continuation(u, v) < best - value_tol) return;
    if (set.decisions.size() == action_set_cap) {
      set.truncated = true;
      return;
    }
    set.decisions.push_back(MatchingDecision{q});
  });
  return set;
}

namespace detail {

struct Transfer {
  int eps = 0;
  int kind = 0;  // 0 row two-way, 1 column two-way, 2 four-point swap
  PairId gain{0, 0};   // dominant cell receiving eps
  PairId lose{0, 0};   // dominated cell giving up eps
  PairId corner{0, 0}; // swap only: second receiving cell (i', j')
  PairId lose2{0, 0};  // swap only: second losing cell (i, j')

  // Largest transferable quantity first, then a fixed lexicographic order so
  // the construction is deterministic.
  bool operator<(const Transfer& o) const {
    return std::tuple(-eps, kind, gain, lose, corner) <
           std::tuple(-o.eps, o.kind, o.gain, o.lose, o.corner);
  }
};

inline std::vector<Transfer> available_transfers(const DominanceGraph& g,
                                                 const SystemState& state,
                                                 const MatchingDecision& dec,
                                                 AuditMode mode) {
  std::vector<Transfer> out;
  const Relation& rel = (mode == AuditMode::strong) ? g.strong : g.weak;
  const Vec rows = row_sums(dec), cols = col_sums(dec);

  for (const auto& [a, b] : rel) {
    if (rel.contains({b, a})) continue;  // ties impose no priority
    if (dec.q[b.i][b.j] == 0) continue;
    if (a.j == b.j) {
      const int slack = state.x[a.i] - rows[a.i];
      if (slack > 0)
        out.push_back({std::min(dec.q[b.i][b.j], slack), 0, a, b, {}, {}});
    } else {
      const int slack = state.y[a.j] - cols[a.j];
      if (slack > 0)
        out.push_back({std::min(dec.q[b.i][b.j], slack), 1, a, b, {}, {}});
    }
  }

  if (mode == AuditMode::strong) {
    // Four-point swaps: a pair dominating both a row neighbour and a column
    // neighbour pulls quantity off both and returns it at the far corner.
    for (const auto& [a, members] : g.b_right) {
      const auto bl = g.b_left.find(a);
      if (bl == g.b_left.end()) continue;
      for (const PairId& row_n : members) {
        if (dec.q[row_n.i][row_n.j] == 0) continue;
        for (const PairId& col_n : bl->second) {
          if (dec.q[col_n.i][col_n.j] == 0) continue;
          Transfer tr;
          tr.eps = std::min(dec.q[row_n.i][row_n.j], dec.q[col_n.i][col_n.j]);
          tr.kind = 2;
          tr.gain = a;
          tr.lose = row_n;
          tr.lose2 = col_n;
          tr.corner = {row_n.i, col_n.j};
          out.push_back(tr);
        }
      }
    }
  }
  return out;
}

}  // namespace detail

// Transforms the first (lexicographically smallest) optimal decision into one
// with no priority violations at this state, moving quantity onto dominant
// cells without changing the achieved value.  A failure of the final
// membership check signals a bug in the surrounding invariants, not bad input.
inline MatchingDecision make_compatible(const ActionSet& actions,
                                        const DominanceGraph& g,
                                        const SystemState& state,
                                        AuditMode mode = AuditMode::strong) {
  if (actions.decisions.empty()) throw RangeError("empty action set");
  if (mode == AuditMode::strong && !g.strong_valid)
    throw StrongConditionFails("pairwise value conditions do not hold");

  MatchingDecision dec = actions.decisions.front();
  int total = 0;
  for (const auto& row : dec.q)
    for (int v : row) total += v;
  const std::size_t cap =
      16 + static_cast<std::size_t>(total + 1) * g.m * g.n * g.m * g.n;

  for (std::size_t round = 0; round <= cap; ++round) {
    std::vector<Violation> bad;
    detail::collect_step_violations(g, state, dec, mode, 0, bad);
    if (bad.empty()) {
      if (!actions.truncated &&
          std::find(actions.decisions.begin(), actions.decisions.end(), dec) ==
              actions.decisions.end())
        throw NotOptimalAfterTransfer(
            "transfers left the optimal set; this signals a broken value condition");
      return dec;
    }

    auto options = detail::available_transfers(g, state, dec, mode);
    if (options.empty())
      throw NotOptimalAfterTransfer("violations remain but no transfer applies");
    const auto& tr = *std::min_element(options.begin(), options.end());
    dec.q[tr.gain.i][tr.gain.j] += tr.eps;
    dec.q[tr.lose.i][tr.lose.j] -= tr.eps;
    if (tr.kind == 2) {
      dec.q[tr.corner.i][tr.corner.j] += tr.eps;
      dec.q[tr.lose2.i][tr.lose2.j] -= tr.eps;
    }
  }
  throw NotOptimalAfterTransfer("transfer loop did not converge");
}

inline double evaluate_policy_exact(const MatchingInstance& inst,
                                    const PolicyHandle& policy,
                                    std::size_t budget = default_state_budget) {
  if (!inst.integer_carry())
    throw NonIntegerCarryOver("exact evaluation requires carry-over rates in {0, 1}");
  const auto lats = detail::build_lattices(inst, budget);
  std::vector<std::vector<double>> memo(inst.T);
  std::vector<std::vector<char>> done(inst.T);
  for (int t = 0; t < inst.T; ++t) {
    memo[t].assign(lats[t].size, 0.0);
    done[t].assign(lats[t].size, 0);
  }

  std::function<double(int, const SystemState&)> eval =
      [&](int t, const SystemState& state) -> double {
    if (t >= inst.T) return 0.0;
    const std::size_t idx = lats[t].index(state.x, state.y);
    if (done[t][idx]) return memo[t][idx];
    const MatchingDecision dec = policy.decide(t, state);
    const PostMatchState post = apply_decision(state, dec);
    double val = reward_of(inst.rewards[t], dec);
    if (t + 1 < inst.T) {
      const int a = static_cast<int>(inst.alpha[t]), b = static_cast<int>(inst.beta[t]);
      SystemState next;
      next.x.resize(inst.m);
      next.y.resize(inst.n);
      for (const auto& d : enumerate_joint(inst.demand_arrivals[t + 1])) {
        for (int i = 0; i < inst.m; ++i) next.x[i] = a * post.u[i] + d.qty[i];
        for (const auto& s : enumerate_joint(inst.supply_arrivals[t + 1])) {
          for (int j = 0; j < inst.n; ++j) next.y[j] = b * post.v[j] + s.qty[j];
          val += d.prob * s.prob * eval(t + 1, next);
        }
      }
    }
    done[t][idx] = 1;
    memo[t][idx] = val;
    return val;
  };

  double total = 0.0;
  SystemState s;
  for (const auto& d : enumerate_joint(inst.demand_arrivals[0])) {
    s.x = d.qty;
    for (const auto& sup : enumerate_joint(inst.supply_arrivals[0])) {
      s.y = sup.qty;
      total += d.prob * sup.prob * eval(0, s);
    }
  }
  return total;
}

// Every (period, state) the policy can visit, each reported once with the
// decision taken there.
inline void visit_policy_states(
    const MatchingInstance& inst, const PolicyHandle& policy,
    const std::function<void(int, const SystemState&, const MatchingDecision&)>& fn,
    std::size_t budget = default_state_budget) {
  if (!inst.integer_carry())
    throw NonIntegerCarryOver("state walk requires carry-over rates in {0, 1}");
  const auto lats = detail::build_lattices(inst, budget);
  std::vector<std::vector<char>> seen(inst.T);
  for (int t = 0; t < inst.T; ++t) seen[t].assign(lats[t].size, 0);

  std::function<void(int, const SystemState&)> walk = [&](int t,
                                                          const SystemState& state) {
    if (t >= inst.T) return;
    const std::size_t idx = lats[t].index(state.x, state.y);
    if (seen[t][idx]) return;
    seen[t][idx] = 1;
    const MatchingDecision dec = policy.decide(t, state);
    const PostMatchState post = apply_decision(state, dec);
    fn(t, state, dec);
    if (t + 1 >= inst.T) return;
    const int a = static_cast<int>(inst.alpha[t]), b = static_cast<int>(inst.beta[t]);
    SystemState next;
    next.x.resize(inst.m);
    next.y.resize(inst.n);
    for (const auto& d : enumerate_joint(inst.demand_arrivals[t + 1])) {
      for (int i = 0; i < inst.m; ++i) next.x[i] = a * post.u[i] + d.qty[i];
      for (const auto& s : enumerate_joint(inst.supply_arrivals[t + 1])) {
        for (int j = 0; j < inst.n; ++j) next.y[j] = b * post.v[j] + s.qty[j];
        walk(t + 1, next);
      }
    }
  };

  SystemState s;
  for (const auto& d : enumerate_joint(inst.demand_arrivals[0])) {
    s.x = d.qty;
    for (const auto& sup : enumerate_joint(inst.supply_arrivals[0])) {
      s.y = sup.qty;
      walk(0, s);
    }
  }
}

// Follows the first optimal action everywhere.
inline PolicyHandle dp_policy(const ValueTable& vt, const MatchingInstance& inst) {
  auto vtp = std::make_shared<const ValueTable>(vt);
  auto ip = std::make_shared<const MatchingInstance>(inst);
  return {"dp", [vtp, ip](int t, const SystemState& s) {
            return optimal_actions(*vtp, *ip, t, s).decisions.front();
          }};
}

// Optimal decisions rearranged onto dominant cells at every state.
inline PolicyHandle compatible_policy(const ValueTable& vt, const MatchingInstance& inst,
                                      const DominanceGraph& g,
                                      AuditMode mode = AuditMode::strong) {
  auto vtp = std::make_shared<const ValueTable>(vt);
  auto ip = std::make_shared<const MatchingInstance>(inst);
  auto gp = std::make_shared<const DominanceGraph>(g);
  return {"dp-compatible", [vtp, ip, gp, mode](int t, const SystemState& s) {
            return make_compatible(optimal_actions(*vtp, *ip, t, s), *gp, s, mode);
          }};
}

// Plain-text dump for regression fixtures: one "t x... y... value" line per
// stored state.
inline std::string to_text(const ValueTable& vt) {
  std::ostringstream out;
  out.precision(17);
  for (int t = 0; t < vt.T; ++t) {
    const Lattice& lat = vt.lattices[t];
    for (std::size_t idx = 0; idx < lat.size; ++idx) {
      const SystemState s = lat.state(idx);
      out << t;
      for (int xi : s.x) out << ' ' << xi;
      for (int yj : s.y) out << ' ' << yj;
      out << ' ' << vt.values[t][idx] << '\n';
    }
  }
  return out.str();
}

}  // namespace dynmatch
