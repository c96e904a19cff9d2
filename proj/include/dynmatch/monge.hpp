// monge.hpp -- dominance relations between neighboring pairs, priority tiers,
// perfect-pair detection, and compatibility audits of decision traces.

#pragma once

#include <map>
#include <set>
#include <sstream>
#include <utility>
#include <vector>

#include "core.hpp"

namespace dynmatch {

struct NotNeighbors : std::runtime_error { using std::runtime_error::runtime_error; };
struct StrongConditionFails : std::runtime_error { using std::runtime_error::runtime_error; };
struct InfeasibleTrace : std::runtime_error { using std::runtime_error::runtime_error; };

// A demand/supply pair (i,j). Ordering is lexicographic and doubles as the
// deterministic tie-break order everywhere below.
struct PairId {
  int i = 0, j = 0;
  bool operator==(const PairId&) const = default;
  auto operator<=>(const PairId&) const = default;
};

inline std::string to_string(const PairId& p) {
  return "(" + std::to_string(p.i) + "," + std::to_string(p.j) + ")";
}

// One quadrangle condition instance: (i,j) weakly dominates both (i2,j) and
// (i,j2), and `ok` says whether r[i][j] + r[i2][j2] >= r[i][j2] + r[i2][j]
// holds in every period.
struct QuadrangleCheck {
  int i = 0, j = 0, i2 = 0, j2 = 0;
  bool ok = false;
};

using Relation = std::set<std::pair<PairId, PairId>>; // (dominant, dominated)

struct DominanceGraph {
  int m = 0, n = 0;
  Relation weak;
  // Global reading of the quadrangle condition: one flag over all
  // weakly-dominant configurations. The per-configuration results are kept in
  // `quadrangles` for reporting.
  bool strong_valid = false;
  Relation strong; // equal to weak when strong_valid, else empty
  std::vector<QuadrangleCheck> quadrangles;
  // Dominated-neighbor sets of each pair: b_left[(i,j)] holds the (i,j')
  // sharing the demand type, b_right[(i,j)] the (i',j) sharing the supply
  // type. Populated from the strict part of the strong relation; see strict().
  std::map<PairId, std::set<PairId>> b_left, b_right;

  bool weakly(PairId a, PairId b) const { return weak.contains({a, b}); }
  bool strongly(PairId a, PairId b) const { return strong.contains({a, b}); }
  // Exact reward ties make the relation hold in both directions. A tie carries
  // no priority, so the audits and the transfer construction act only on the
  // one-way part of the relation.
  bool strict(PairId a, PairId b) const {
    return strong.contains({a, b}) && !strong.contains({b, a});
  }
};

struct PriorityTiers {
  std::vector<std::vector<PairId>> tiers; // disjoint, union covers all pairs
};

enum class AuditMode { weak, strong };

// Per-period record of what a policy saw and did.
struct TraceStep {
  SystemState state;
  MatchingDecision decision;
};
using Trace = std::vector<TraceStep>;

enum class RelationKind { shared_supply, shared_demand };

struct Violation {
  int t = 0;
  PairId dominant, dominated;
  RelationKind kind = RelationKind::shared_supply;
  int quantity = 0; // matched units on the dominated pair
  int witness = 0;  // remaining availability that should have been 0
};

struct CompatibilityReport {
  AuditMode mode = AuditMode::strong;
  std::vector<Violation> violations;
  bool clean() const { return violations.empty(); }
};

namespace detail {

// Dominance over a shared supply type j: (i,j) over (i2,j). Current rewards
// must be no worse in every period, and the current edge must be worth at
// least the carried-over next-period edge for every third supply type.
inline bool dominates_shared_supply(const MatchingInstance& inst, int i, int i2, int j) {
  for (int t = 0; t < inst.T; ++t) {
    if (inst.r(t, i, j) < inst.r(t, i2, j) - value_tol) return false;
    const double gap = inst.r(t, i, j) - inst.r(t, i2, j);
    for (int j2 = 0; j2 < inst.n; ++j2)
      if (gap < inst.alpha[t] * (inst.r(t + 1, i, j2) - inst.r(t + 1, i2, j2)) - value_tol)
        return false;
  }
  return true;
}

// Dominance over a shared demand type i: (i,j) over (i,j2), with the supply
// carry-over rate and third demand types.
inline bool dominates_shared_demand(const MatchingInstance& inst, int j, int j2, int i) {
  for (int t = 0; t < inst.T; ++t) {
    if (inst.r(t, i, j) < inst.r(t, i, j2) - value_tol) return false;
    const double gap = inst.r(t, i, j) - inst.r(t, i, j2);
    for (int i2 = 0; i2 < inst.m; ++i2)
      if (gap < inst.beta[t] * (inst.r(t + 1, i2, j) - inst.r(t + 1, i2, j2)) - value_tol)
        return false;
  }
  return true;
}

inline void check_pair_range(const MatchingInstance& inst, PairId p, const char* what) {
  if (p.i < 0 || p.i >= inst.m || p.j < 0 || p.j >= inst.n)
    throw RangeError(std::string(what) + " " + to_string(p) + " outside the type grid");
}

} // namespace detail

inline bool weak_dominates(const MatchingInstance& inst, PairId a, PairId b) {
  detail::check_pair_range(inst, a, "pair");
  detail::check_pair_range(inst, b, "pair");
  if (a == b) throw NotNeighbors("a pair is not its own neighbor");
  if (a.i != b.i && a.j != b.j)
    throw NotNeighbors("pairs " + to_string(a) + " and " + to_string(b) +
                       " share no demand or supply type");
  if (a.j == b.j) return detail::dominates_shared_supply(inst, a.i, b.i, a.j);
  return detail::dominates_shared_demand(inst, a.j, b.j, a.i);
}

inline DominanceGraph build_dominance_graph(const MatchingInstance& inst) {
  DominanceGraph g;
  g.m = inst.m;
  g.n = inst.n;

  for (int i = 0; i < inst.m; ++i)
    for (int j = 0; j < inst.n; ++j) {
      const PairId p{i, j};
      for (int i2 = 0; i2 < inst.m; ++i2)
        if (i2 != i && detail::dominates_shared_supply(inst, i, i2, j))
          g.weak.insert({p, PairId{i2, j}});
      for (int j2 = 0; j2 < inst.n; ++j2)
        if (j2 != j && detail::dominates_shared_demand(inst, j, j2, i))
          g.weak.insert({p, PairId{i, j2}});
    }

  // Quadrangle condition over every configuration in which one pair weakly
  // dominates a neighbor on each side.
  g.strong_valid = true;
  for (int i = 0; i < inst.m; ++i)
    for (int j = 0; j < inst.n; ++j) {
      const PairId p{i, j};
      for (int i2 = 0; i2 < inst.m; ++i2) {
        if (i2 == i || !g.weakly(p, {i2, j})) continue;
        for (int j2 = 0; j2 < inst.n; ++j2) {
          if (j2 == j || !g.weakly(p, {i, j2})) continue;
          QuadrangleCheck qc{i, j, i2, j2, true};
          for (int t = 0; t < inst.T && qc.ok; ++t)
            if (inst.r(t, i, j) + inst.r(t, i2, j2) <
                inst.r(t, i, j2) + inst.r(t, i2, j) - value_tol)
              qc.ok = false;
          g.strong_valid = g.strong_valid && qc.ok;
          g.quadrangles.push_back(qc);
        }
      }
    }

  if (g.strong_valid) {
    g.strong = g.weak;
    for (const auto& [a, b] : g.strong) {
      if (!g.strict(a, b)) continue;
      if (a.i == b.i)
        g.b_left[a].insert(b);
      else
        g.b_right[a].insert(b);
    }
  }
  return g;
}

inline PriorityTiers priority_tiers(const DominanceGraph& g) {
  if (!g.strong_valid)
    throw StrongConditionFails("priority tiers need the strong relation");

  // Within a residual set, q keeps p out of the current tier if q strictly
  // dominates p, or if they tie and q comes first lexicographically.
  auto blocks = [&](PairId q, PairId p) {
    if (g.strict(q, p)) return true;
    return g.strongly(q, p) && g.strongly(p, q) && q < p;
  };

  std::set<PairId> residual;
  for (int i = 0; i < g.m; ++i)
    for (int j = 0; j < g.n; ++j) residual.insert({i, j});

  PriorityTiers out;
  while (!residual.empty()) {
    std::vector<PairId> tier;
    for (PairId p : residual) {
      bool dominated = false;
      for (PairId q : residual)
        if (q != p && (q.i == p.i || q.j == p.j) && blocks(q, p)) {
          dominated = true;
          break;
        }
      if (!dominated) tier.push_back(p);
    }
    // Degenerate reward patterns could in principle chain strict dominance in
    // a cycle; release the first residual pair so peeling stays well defined.
    if (tier.empty()) tier.push_back(*residual.begin());
    for (PairId p : tier) residual.erase(p);
    out.tiers.push_back(std::move(tier));
  }
  return out;
}

// A pair is matched greedily at every state when it dominates all neighbors
// under the strong relation and its reward does not grow by more than the
// carry-over factor from one period to the next.
inline bool is_perfect_pair(const MatchingInstance& inst, const DominanceGraph& g,
                            int i, int j) {
  detail::check_pair_range(inst, {i, j}, "pair");
  if (!g.strong_valid)
    throw StrongConditionFails("perfect pairs are defined via the strong relation");
  const PairId p{i, j};
  for (int i2 = 0; i2 < inst.m; ++i2)
    if (i2 != i && !g.strongly(p, {i2, j})) return false;
  for (int j2 = 0; j2 < inst.n; ++j2)
    if (j2 != j && !g.strongly(p, {i, j2})) return false;
  for (int t = 0; t < inst.T; ++t) {
    const double rate = std::max(inst.alpha[t], inst.beta[t]);
    if (inst.r(t, i, j) < rate * inst.r(t + 1, i, j) - value_tol) return false;
  }
  return true;
}

namespace detail {

// Definition-3 / A.1 violations of one (state, decision) snapshot. The caller
// has already validated feasibility.
inline void collect_step_violations(const DominanceGraph& g, const SystemState& state,
                                    const MatchingDecision& dec, AuditMode mode, int t,
                                    std::vector<Violation>& out) {
  const int m = g.m, n = g.n;
  const Relation& rel = (mode == AuditMode::strong) ? g.strong : g.weak;

  for (const auto& [a, b] : rel) {
    // Strict one-way relations only; ties impose no priority (see DominanceGraph).
    if (rel.contains({b, a})) continue;
    const int q_dominated = dec.q[b.i][b.j];
    if (q_dominated == 0) continue;

    int witness = 0;
    if (a.j == b.j) {
      // Shared supply: the dominant pair's demand type must be exhausted.
      witness = state.x[a.i];
      if (mode == AuditMode::weak) {
        for (int j2 = 0; j2 < n; ++j2) witness -= dec.q[a.i][j2];
      } else {
        const auto bl = g.b_left.find(a);
        for (int j2 = 0; j2 < n; ++j2)
          if (bl == g.b_left.end() || !bl->second.contains({a.i, j2}))
            witness -= dec.q[a.i][j2];
      }
    } else {
      // Shared demand: the dominant pair's supply type must be exhausted.
      witness = state.y[a.j];
      if (mode == AuditMode::weak) {
        for (int i2 = 0; i2 < m; ++i2) witness -= dec.q[i2][a.j];
      } else {
        const auto br = g.b_right.find(a);
        for (int i2 = 0; i2 < m; ++i2)
          if (br == g.b_right.end() || !br->second.contains({i2, a.j}))
            witness -= dec.q[i2][a.j];
      }
    }
    if (witness > 0)
      out.push_back({t, a, b,
                     a.j == b.j ? RelationKind::shared_supply : RelationKind::shared_demand,
                     q_dominated, witness});
  }
}

} // namespace detail

inline CompatibilityReport audit_compatibility(const MatchingInstance& inst,
                                               const DominanceGraph& g,
                                               const Trace& trace, AuditMode mode) {
  if (g.m != inst.m || g.n != inst.n)
    throw DimensionMismatch("graph and instance type counts differ");
  if (static_cast<int>(trace.size()) > inst.T)
    throw InfeasibleTrace("trace has more steps than periods");

  CompatibilityReport report;
  report.mode = mode;
  for (std::size_t step = 0; step < trace.size(); ++step) {
    const auto& [state, dec] = trace[step];
    if (static_cast<int>(state.x.size()) != inst.m ||
        static_cast<int>(state.y.size()) != inst.n)
      throw InfeasibleTrace("trace state dimensions differ from the instance");
    try {
      apply_decision(state, dec);
    } catch (const std::runtime_error& e) {
      throw InfeasibleTrace("step " + std::to_string(step) + ": " + e.what());
    }
    detail::collect_step_violations(g, state, dec, mode, static_cast<int>(step),
                                    report.violations);
  }
  return report;
}

inline std::string to_text(const CompatibilityReport& report) {
  std::ostringstream os;
  const char* mode = report.mode == AuditMode::strong ? "strong" : "weak";
  if (report.clean()) {
    os << "compatible (" << mode << "): no violations\n";
    return os.str();
  }
  os << report.violations.size() << " violation(s) in " << mode << " mode\n";
  for (const auto& v : report.violations) {
    const char* wit = report.mode == AuditMode::strong
                          ? (v.kind == RelationKind::shared_supply ? "a" : "b")
                          : (v.kind == RelationKind::shared_supply ? "u" : "v");
    const int idx = v.kind == RelationKind::shared_supply ? v.dominant.i : v.dominant.j;
    os << "  t=" << v.t << " " << to_string(v.dominant) << " > " << to_string(v.dominated)
       << ": q" << to_string(v.dominated) << "=" << v.quantity << " but " << wit << "["
       << idx << "]=" << v.witness << "\n";
  }
  return os.str();
}

} // namespace dynmatch
