#pragma once

// Policy families built on the analysis layer: myopic transport greedy,
// two-round protection-level policies for two-type systems (with the collapsed
// imbalance DP that produces the match-down-to tables), a consolidation
// heuristic that reduces each prioritized pair to an artificial two-type
// system, top-down quantity policies for quality-ordered systems, a
// one-step-ahead total-quantity rule, and the restricted upgrade DP that
// only upgrades unfilled intended matches.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "dp.hpp"
#include "models.hpp"
#include "monge.hpp"
#include "serialize.hpp"
#include "transport.hpp"

namespace dynmatch {

struct QuantityOutOfRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotVertical : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotOneLevelStructure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- collapsed two-type coordinates ----------------------------------------

// Post-greedy excesses of a two-type system: z1 is leftover type-0 demand,
// z2 leftover type-1 supply, ib their difference (the aggregate imbalance,
// invariant under the diagonal round).
struct CollapsedState {
  int z1 = 0, z2 = 0, ib = 0;
};

inline CollapsedState collapse_2x2(const SystemState& s) {
  if (s.x.size() != 2 || s.y.size() != 2)
    throw RangeError("collapsed coordinates require exactly two types per side");
  CollapsedState c;
  c.z1 = s.x[0] - s.y[0];
  c.z2 = s.y[1] - s.x[1];
  c.ib = c.z1 - c.z2;
  return c;
}

// Match-down-to targets for one (period, imbalance) cell. The plus regime
// covers states with excess type-0 demand and type-1 supply; the minus regime
// the mirrored excesses. Both satisfy p_d - p_s = ib.
struct ProtectionEntry {
  int p_d_plus = 0, p_s_plus = 0;
  int p_d_minus = 0, p_s_minus = 0;
  bool operator==(const ProtectionEntry&) const = default;
};

struct ProtectionTable {
  int T = 0;
  std::vector<int> ib_lo;                            // first stored imbalance, per period
  std::vector<std::vector<ProtectionEntry>> entries; // entries[t][ib - ib_lo[t]]
  bool operator==(const ProtectionTable&) const = default;

  int ib_hi(int t) const { return ib_lo[t] + static_cast<int>(entries[t].size()) - 1; }

  const ProtectionEntry& at(int t, int ib) const {
    if (t < 0 || t >= T) throw RangeError("protection table: period out of range");
    if (ib < ib_lo[t] || ib > ib_hi(t))
      throw RangeError("protection table: imbalance " + std::to_string(ib) +
                       " outside [" + std::to_string(ib_lo[t]) + ", " +
                       std::to_string(ib_hi(t)) + "] at period " + std::to_string(t));
    return entries[t][ib - ib_lo[t]];
  }

  // Lookup with the imbalance clamped into the stored range; the extreme
  // entries extend unchanged beyond the reachable lattice.
  const ProtectionEntry& clamped(int t, int ib) const {
    if (t < 0 || t >= T) throw RangeError("protection table: period out of range");
    return entries[t][std::clamp(ib, ib_lo[t], ib_hi(t)) - ib_lo[t]];
  }
};

inline std::string protection_table_to_text(const ProtectionTable& table) {
  std::ostringstream out;
  out << "# t ib p_d_plus p_s_plus p_d_minus p_s_minus\n";
  for (int t = 0; t < table.T; ++t)
    for (int ib = table.ib_lo[t]; ib <= table.ib_hi(t); ++ib) {
      const ProtectionEntry& e = table.at(t, ib);
      out << t << ' ' << ib << ' ' << e.p_d_plus << ' ' << e.p_s_plus << ' '
          << e.p_d_minus << ' ' << e.p_s_minus << '\n';
    }
  return out.str();
}

inline ProtectionTable protection_table_from_text(const std::string& text) {
  std::map<int, std::map<int, ProtectionEntry>> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    int t, ib;
    ProtectionEntry e;
    if (!(ls >> t >> ib >> e.p_d_plus >> e.p_s_plus >> e.p_d_minus >> e.p_s_minus))
      throw ConfigError("protection table line " + std::to_string(lineno) +
                        ": expected six integers");
    std::string extra;
    if (ls >> extra)
      throw ConfigError("protection table line " + std::to_string(lineno) +
                        ": unexpected trailing token \"" + extra + "\"");
    if (t < 0) throw ConfigError("protection table line " + std::to_string(lineno) +
                                 ": negative period");
    if (e.p_d_plus < 0 || e.p_s_plus < 0 || e.p_d_minus < 0 || e.p_s_minus < 0)
      throw ConfigError("protection table line " + std::to_string(lineno) +
                        ": negative protection level");
    if (e.p_d_plus - e.p_s_plus != ib || e.p_d_minus - e.p_s_minus != ib)
      throw ConfigError("protection table line " + std::to_string(lineno) +
                        ": targets must differ by the imbalance");
    if (!rows[t].emplace(ib, e).second)
      throw ConfigError("protection table line " + std::to_string(lineno) +
                        ": duplicate (period, imbalance) key");
  }
  if (rows.empty()) throw ConfigError("protection table: no entries");

  ProtectionTable table;
  table.T = rows.rbegin()->first + 1;
  table.ib_lo.resize(table.T);
  table.entries.resize(table.T);
  for (int t = 0; t < table.T; ++t) {
    auto it = rows.find(t);
    if (it == rows.end())
      throw ConfigError("protection table: period " + std::to_string(t) + " has no entries");
    const auto& by_ib = it->second;
    table.ib_lo[t] = by_ib.begin()->first;
    int expect = table.ib_lo[t];
    for (const auto& [ib, e] : by_ib) {
      if (ib != expect)
        throw ConfigError("protection table: period " + std::to_string(t) +
                          " skips imbalance " + std::to_string(expect));
      table.entries[t].push_back(e);
      ++expect;
    }
  }
  return table;
}

// --- cumulative (transformed) state -----------------------------------------

// Running totals over quality-ordered types: xt[i] is the demand held by the
// best i+1 types combined, likewise yt for supply.
struct TransformedState {
  Vec xt, yt;
};

inline TransformedState transform_state(const SystemState& s) {
  TransformedState ts;
  ts.xt.resize(s.x.size());
  ts.yt.resize(s.y.size());
  std::partial_sum(s.x.begin(), s.x.end(), ts.xt.begin());
  std::partial_sum(s.y.begin(), s.y.end(), ts.yt.begin());
  return ts;
}

// Additively separable quality rewards: matching (i, j) in period t pays
// r_d[t][i] + r_s[t][j].
struct VerticalRewards {
  Matrix r_d; // [t][i]
  Matrix r_s; // [t][j]
};

inline std::vector<Matrix> vertical_reward_tensor(const VerticalRewards& vr) {
  if (vr.r_d.size() != vr.r_s.size())
    throw DimensionMismatch("vertical rewards: demand and supply period counts differ");
  if (vr.r_d.empty()) throw DimensionMismatch("vertical rewards: no periods");
  std::vector<Matrix> r(vr.r_d.size());
  for (std::size_t t = 0; t < vr.r_d.size(); ++t) {
    if (vr.r_d[t].size() != vr.r_d[0].size() || vr.r_s[t].size() != vr.r_s[0].size())
      throw DimensionMismatch("vertical rewards: ragged period rows");
    r[t].assign(vr.r_d[t].size(), std::vector<double>(vr.r_s[t].size(), 0.0));
    for (std::size_t i = 0; i < vr.r_d[t].size(); ++i)
      for (std::size_t j = 0; j < vr.r_s[t].size(); ++j)
        r[t][i][j] = vr.r_d[t][i] + vr.r_s[t][j];
  }
  return r;
}

// --- greedy -----------------------------------------------------------------

inline PolicyHandle greedy_policy(const MatchingInstance& inst) {
  auto ip = std::make_shared<const MatchingInstance>(inst);
  return {"greedy", [ip](int t, const SystemState& s) {
            if (t < 0 || t >= ip->T) throw RangeError("greedy: period outside the horizon");
            return max_weight_transport(ip->rewards[t], s).q;
          }};
}

inline PolicyHandle greedy_policy(const MatchingInstance& inst, const DominanceGraph& g) {
  auto ip = std::make_shared<const MatchingInstance>(inst);
  auto tp = std::make_shared<const PriorityTiers>(priority_tiers(g));
  return {"greedy-priority", [ip, tp](int t, const SystemState& s) {
            if (t < 0 || t >= ip->T) throw RangeError("greedy: period outside the horizon");
            return tier_greedy_transport(ip->rewards[t], s, *tp).q;
          }};
}

// --- protection levels for two-type systems ---------------------------------

namespace detail {

// Diagonal dominance within each period plus non-expanding cross-period gaps;
// the conditions under which the two-round table policy is exact. `check`
// false skips validation entirely (used for consolidated artificial systems,
// whose sampled weighted rewards need not obey the inequalities).
inline void check_2x2_assumptions(const MatchingInstance& inst, bool check) {
  if (!check) return;
  for (int t = 0; t < inst.T; ++t)
    for (int k = 0; k < 2; ++k) {
      const int o = 1 - k;
      if (inst.rewards[t][k][k] + value_tol < inst.rewards[t][k][o])
        throw AssumptionViolated("intended pair (" + std::to_string(k) + "," +
                                 std::to_string(k) + ") pays less than its row neighbor at t=" +
                                 std::to_string(t));
      if (inst.rewards[t][k][k] + value_tol < inst.rewards[t][o][k])
        throw AssumptionViolated("intended pair (" + std::to_string(k) + "," +
                                 std::to_string(k) +
                                 ") pays less than its column neighbor at t=" + std::to_string(t));
      const double row_gap = inst.rewards[t][k][k] - inst.rewards[t][k][o];
      const double col_gap = inst.rewards[t][k][k] - inst.rewards[t][o][k];
      for (int i = 0; i < 2; ++i)
        if (row_gap + value_tol < inst.r(t + 1, i, k) - inst.r(t + 1, i, o))
          throw AssumptionViolated("supply-" + std::to_string(k) +
                                   " advantage grows between periods t=" + std::to_string(t) +
                                   " and t+1");
      for (int j = 0; j < 2; ++j)
        if (col_gap + value_tol < inst.r(t + 1, k, j) - inst.r(t + 1, o, j))
          throw AssumptionViolated("demand-" + std::to_string(k) +
                                   " advantage grows between periods t=" + std::to_string(t) +
                                   " and t+1");
    }
}

// One realized period of two-type arrivals with its probability.
struct Joint22 {
  double pr;
  int d1, d2, s1, s2;
};

inline std::vector<Joint22> joint_arrivals_2x2(const MatchingInstance& inst, int t) {
  std::vector<Joint22> out;
  for (const auto& d : enumerate_joint(inst.demand_arrivals[t]))
    for (const auto& s : enumerate_joint(inst.supply_arrivals[t]))
      out.push_back({d.prob * s.prob, d.qty[0], d.qty[1], s.qty[0], s.qty[1]});
  return out;
}

// Reachable ranges for the collapsed excesses, one box per period.
struct ZBox {
  int lo1 = 0, hi1 = 0, lo2 = 0, hi2 = 0;
  std::size_t width2() const { return static_cast<std::size_t>(hi2 - lo2 + 1); }
  std::size_t size() const { return static_cast<std::size_t>(hi1 - lo1 + 1) * width2(); }
  std::size_t idx(int z1, int z2) const {
    return static_cast<std::size_t>(z1 - lo1) * width2() + static_cast<std::size_t>(z2 - lo2);
  }
};

// Smallest maximizer of a concave integer objective on [lo, cap]: advance only
// on strict improvement.
template <class Fn>
inline int concave_argmax(int lo, int cap, Fn&& f) {
  int p = lo;
  double cur = f(p);
  while (p < cap) {
    const double nxt = f(p + 1);
    if (nxt <= cur + value_tol) break;
    cur = nxt;
    ++p;
  }
  return p;
}

}  // namespace detail

// Collapsed-imbalance DP for a two-type system: solves the excess-coordinate
// value recursion on the reachable integer lattice and extracts, for every
// (period, imbalance), the match-down-to targets of both off-diagonal regimes
// as smallest maximizers of the concave hold-back objective.
inline ProtectionTable compute_protection_levels_2x2(const MatchingInstance& inst,
                                                     bool check = true,
                                                     std::size_t budget = default_state_budget) {
  if (inst.m != 2 || inst.n != 2)
    throw DimensionMismatch("protection levels require exactly two types per side");
  if (!inst.integer_carry())
    throw NonIntegerCarryOver("protection levels require carry-over rates in {0, 1}");
  detail::check_2x2_assumptions(inst, check);

  const int T = inst.T;
  std::vector<detail::ZBox> box(T);
  std::size_t states = 0;
  for (int t = 0; t < T; ++t) {
    const int a = t > 0 ? static_cast<int>(inst.alpha[t - 1]) : 0;
    const int b = t > 0 ? static_cast<int>(inst.beta[t - 1]) : 0;
    const int d1 = inst.demand_arrivals[t][0].max_value();
    const int d2 = inst.demand_arrivals[t][1].max_value();
    const int s1 = inst.supply_arrivals[t][0].max_value();
    const int s2 = inst.supply_arrivals[t][1].max_value();
    box[t].hi1 = d1 + (t > 0 ? a * box[t - 1].hi1 : 0);
    box[t].lo1 = -(s1 + (t > 0 ? b * -box[t - 1].lo1 : 0));
    box[t].hi2 = s2 + (t > 0 ? b * box[t - 1].hi2 : 0);
    box[t].lo2 = -(d2 + (t > 0 ? a * -box[t - 1].lo2 : 0));
    states += box[t].size();
    if (states > budget)
      throw BudgetExceeded("collapsed lattice exceeds the state budget");
  }

  std::vector<std::vector<detail::Joint22>> joints(T);
  for (int t = 1; t < T; ++t) joints[t] = detail::joint_arrivals_2x2(inst, t);

  // Value of the excess state under optimal off-diagonal matching, with the
  // next period's diagonal round folded into the transition.
  std::vector<std::vector<double>> U(T);
  for (int t = T - 1; t >= 0; --t) {
    U[t].assign(box[t].size(), 0.0);
    const double r12 = inst.rewards[t][0][1];
    const double r21 = inst.rewards[t][1][0];
    const int a = static_cast<int>(inst.alpha[t]);
    const int b = static_cast<int>(inst.beta[t]);
    for (int z1 = box[t].lo1; z1 <= box[t].hi1; ++z1)
      for (int z2 = box[t].lo2; z2 <= box[t].hi2; ++z2) {
        int qlo = 0, qhi = 0;
        if (z1 > 0 && z2 > 0) qhi = std::min(z1, z2);
        else if (z1 < 0 && z2 < 0) qlo = std::max(z1, z2);
        double best = std::numeric_limits<double>::lowest();
        for (int q = qlo; q <= qhi; ++q) {
          double val = r12 * std::max(q, 0) + r21 * std::max(-q, 0);
          if (t + 1 < T) {
            const int p1 = z1 - q, p2 = z2 - q;
            const int cd1 = a * std::max(p1, 0), cs1 = b * std::max(-p1, 0);
            const int cd2 = a * std::max(-p2, 0), cs2 = b * std::max(p2, 0);
            for (const auto& w : joints[t + 1]) {
              const int nx1 = cd1 + w.d1, ny1 = cs1 + w.s1;
              const int nx2 = cd2 + w.d2, ny2 = cs2 + w.s2;
              val += w.pr * (inst.rewards[t + 1][0][0] * std::min(nx1, ny1) +
                             inst.rewards[t + 1][1][1] * std::min(nx2, ny2) +
                             U[t + 1][box[t + 1].idx(nx1 - ny1, ny2 - nx2)]);
            }
          }
          best = std::max(best, val);
        }
        U[t][box[t].idx(z1, z2)] = best;
      }
  }

  ProtectionTable table;
  table.T = T;
  table.ib_lo.resize(T);
  table.entries.resize(T);
  for (int t = 0; t < T; ++t) {
    const int iblo = box[t].lo1 - box[t].hi2;
    const int ibhi = box[t].hi1 - box[t].lo2;
    table.ib_lo[t] = iblo;
    table.entries[t].resize(ibhi - iblo + 1);
    const int a = static_cast<int>(inst.alpha[t]);
    const int b = static_cast<int>(inst.beta[t]);
    for (int ib = iblo; ib <= ibhi; ++ib) {
      const int floor_ps = std::max(-ib, 0);

      // Hold-back objective of the plus regime: keeping one more unit of
      // type-1 supply (and, through the imbalance, type-0 demand) forgoes the
      // off-diagonal reward now for next-period diagonal value.
      auto plus = [&](int p) {
        double val = -inst.rewards[t][0][1] * p;
        if (t + 1 < T) {
          const int pd = p + ib;
          for (const auto& w : joints[t + 1]) {
            const int nx1 = a * pd + w.d1, ny1 = w.s1;
            const int nx2 = w.d2, ny2 = b * p + w.s2;
            val += w.pr * (inst.rewards[t + 1][0][0] * std::min(nx1, ny1) +
                           inst.rewards[t + 1][1][1] * std::min(nx2, ny2) +
                           U[t + 1][box[t + 1].idx(nx1 - ny1, ny2 - nx2)]);
          }
        }
        return val;
      };
      auto minus = [&](int p) {
        double val = -inst.rewards[t][1][0] * p;
        if (t + 1 < T) {
          const int pd = p + ib;
          for (const auto& w : joints[t + 1]) {
            const int nx1 = w.d1, ny1 = b * p + w.s1;
            const int nx2 = a * pd + w.d2, ny2 = w.s2;
            val += w.pr * (inst.rewards[t + 1][0][0] * std::min(nx1, ny1) +
                           inst.rewards[t + 1][1][1] * std::min(nx2, ny2) +
                           U[t + 1][box[t + 1].idx(nx1 - ny1, ny2 - nx2)]);
          }
        }
        return val;
      };

      // Beyond these caps the targets stop binding on any reachable state of
      // this imbalance, and the transition would leave the solved lattice.
      const int cap_plus = std::max(floor_ps, std::min(box[t].hi2, box[t].hi1 - ib));
      const int cap_minus = std::max(floor_ps, std::min(-box[t].lo1, -box[t].lo2 - ib));

      ProtectionEntry e;
      e.p_s_plus = detail::concave_argmax(floor_ps, cap_plus, plus);
      e.p_d_plus = e.p_s_plus + ib;
      e.p_s_minus = detail::concave_argmax(floor_ps, cap_minus, minus);
      e.p_d_minus = e.p_s_minus + ib;
      table.entries[t][ib - iblo] = e;
    }
  }
  return table;
}

// Two rounds per period: greedy on the intended diagonal, then match the
// surviving excesses down to the stored targets (never past feasibility).
inline PolicyHandle two_round_policy_2x2(const MatchingInstance& inst,
                                         const ProtectionTable& table) {
  if (inst.m != 2 || inst.n != 2)
    throw DimensionMismatch("two-round policy requires exactly two types per side");
  auto tp = std::make_shared<const ProtectionTable>(table);
  return {"two-round", [tp](int t, const SystemState& s) {
            const CollapsedState c = collapse_2x2(s);
            MatchingDecision dec = MatchingDecision::zeros(2, 2);
            dec.q[0][0] = std::min(s.x[0], s.y[0]);
            dec.q[1][1] = std::min(s.x[1], s.y[1]);
            if (c.z1 > 0 && c.z2 > 0) {
              const ProtectionEntry& e = tp->clamped(t, c.ib);
              dec.q[0][1] = std::clamp(c.z2 - e.p_s_plus, 0, std::min(c.z1, c.z2));
            } else if (c.z1 < 0 && c.z2 < 0) {
              const ProtectionEntry& e = tp->clamped(t, c.ib);
              dec.q[1][0] = std::clamp(-c.z1 - e.p_s_minus, 0, std::min(-c.z1, -c.z2));
            }
            return dec;
          }};
}

// --- consolidation heuristic ------------------------------------------------

// One prioritized pair reduced to a two-type system: the partner groups
// collect the dominating alternatives of each side, their residual arrivals
// (after internal higher-priority matching) drive the weighted rewards, and
// the resulting table provides this pair's match-down-to targets.
struct ConsolidatedPair {
  PairId pair{0, 0};
  std::vector<int> demand_group; // dominating demand types, ascending
  std::vector<int> supply_group; // dominating supply types, ascending
  bool sampled = false;          // true when residuals came from Monte Carlo paths
  Matrix demand_means;           // [t][k] residual means, aligned with demand_group
  Matrix supply_means;           // [t][k] residual means, aligned with supply_group
  MatchingInstance model;        // the artificial two-type instance
  ProtectionTable table;
};

namespace detail {

inline double canonical_uniform(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline int sample_pmf(const ArrivalModel& a, std::mt19937_64& eng) {
  const double u = canonical_uniform(eng);
  double cum = 0.0;
  for (std::size_t k = 0; k < a.support.size(); ++k) {
    cum += a.probs[k];
    if (u < cum) return a.support[k];
  }
  return a.support.back();
}

// Exact distribution of a sum of independent arrival models.
inline ArrivalModel convolve_sum(const std::vector<ArrivalModel>& models) {
  std::map<int, double> pmf;
  if (models.empty()) return ArrivalModel{{0}, {1.0}};
  for (const auto& joint : enumerate_joint(models)) {
    int total = 0;
    for (int q : joint.qty) total += q;
    pmf[total] += joint.prob;
  }
  ArrivalModel out;
  for (const auto& [v, p] : pmf) {
    out.support.push_back(v);
    out.probs.push_back(p);
  }
  return out;
}

}  // namespace detail

// Builds the artificial two-type system for one pair, or nothing when neither
// side has a dominating alternative (the pair is matched greedily). Residuals
// are exact whenever no internal higher-priority matching exists; otherwise
// they are estimated from `sample_count` seeded paths and only their means are
// kept: the group arrival becomes a point mass at the rounded mean.
inline std::optional<ConsolidatedPair> consolidate_pair(
    const MatchingInstance& inst, const DominanceGraph& g, const PriorityTiers& tiers,
    PairId pair, int sample_count = 1000, std::uint64_t seed = 2024) {
  const int i = pair.i, j = pair.j;
  std::vector<int> dg, sg;
  for (int i2 = 0; i2 < inst.m; ++i2)
    if (i2 != i && g.strict({i2, j}, pair)) dg.push_back(i2);
  for (int j2 = 0; j2 < inst.n; ++j2)
    if (j2 != j && g.strict({i, j2}, pair)) sg.push_back(j2);
  if (dg.empty() && sg.empty()) return std::nullopt;

  std::map<PairId, int> rank;
  for (std::size_t k = 0; k < tiers.tiers.size(); ++k)
    for (const PairId& p : tiers.tiers[k]) rank[p] = static_cast<int>(k);
  const int pair_rank = rank.at(pair);

  // Cross pairs inside the partner groups, split into those consumed by the
  // internal greedy round (strictly higher priority than this pair) and those
  // that persist.
  std::vector<PairId> internal, persisting;
  for (int i2 : dg)
    for (int j2 : sg)
      (rank.at({i2, j2}) < pair_rank ? internal : persisting).push_back({i2, j2});
  std::sort(internal.begin(), internal.end(), [&](const PairId& a, const PairId& b) {
    return std::pair(rank.at(a), a) < std::pair(rank.at(b), b);
  });

  ConsolidatedPair cp;
  cp.pair = pair;
  cp.demand_group = dg;
  cp.supply_group = sg;
  cp.sampled = !internal.empty();
  cp.demand_means.assign(inst.T, std::vector<double>(dg.size(), 0.0));
  cp.supply_means.assign(inst.T, std::vector<double>(sg.size(), 0.0));

  std::vector<std::vector<ArrivalModel>> da(inst.T), sa(inst.T);
  for (int t = 0; t < inst.T; ++t) {
    if (!cp.sampled) {
      std::vector<ArrivalModel> dmodels, smodels;
      for (std::size_t k = 0; k < dg.size(); ++k) {
        cp.demand_means[t][k] = inst.demand_arrivals[t][dg[k]].mean();
        dmodels.push_back(inst.demand_arrivals[t][dg[k]]);
      }
      for (std::size_t k = 0; k < sg.size(); ++k) {
        cp.supply_means[t][k] = inst.supply_arrivals[t][sg[k]].mean();
        smodels.push_back(inst.supply_arrivals[t][sg[k]]);
      }
      da[t] = {inst.demand_arrivals[t][i], detail::convolve_sum(dmodels)};
      sa[t] = {detail::convolve_sum(smodels), inst.supply_arrivals[t][j]};
    } else {
      std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                       static_cast<std::uint32_t>(t)};
      std::mt19937_64 eng(sq);
      Vec dq(dg.size()), sq2(sg.size());
      for (int k = 0; k < sample_count; ++k) {
        for (std::size_t a = 0; a < dg.size(); ++a)
          dq[a] = detail::sample_pmf(inst.demand_arrivals[t][dg[a]], eng);
        for (std::size_t b = 0; b < sg.size(); ++b)
          sq2[b] = detail::sample_pmf(inst.supply_arrivals[t][sg[b]], eng);
        for (const PairId& p : internal) {
          if (inst.rewards[t][p.i][p.j] <= value_tol) continue;
          const auto ai = std::find(dg.begin(), dg.end(), p.i) - dg.begin();
          const auto bj = std::find(sg.begin(), sg.end(), p.j) - sg.begin();
          const int q = std::min(dq[ai], sq2[bj]);
          dq[ai] -= q;
          sq2[bj] -= q;
        }
        for (std::size_t a = 0; a < dg.size(); ++a) cp.demand_means[t][a] += dq[a];
        for (std::size_t b = 0; b < sg.size(); ++b) cp.supply_means[t][b] += sq2[b];
      }
      double dtotal = 0.0, stotal = 0.0;
      for (std::size_t a = 0; a < dg.size(); ++a) {
        cp.demand_means[t][a] /= sample_count;
        dtotal += cp.demand_means[t][a];
      }
      for (std::size_t b = 0; b < sg.size(); ++b) {
        cp.supply_means[t][b] /= sample_count;
        stotal += cp.supply_means[t][b];
      }
      const int dmass = static_cast<int>(std::llround(dtotal));
      const int smass = static_cast<int>(std::llround(stotal));
      da[t] = {inst.demand_arrivals[t][i], ArrivalModel{{dmass}, {1.0}}};
      sa[t] = {ArrivalModel{{smass}, {1.0}}, inst.supply_arrivals[t][j]};
    }
  }

  std::vector<Matrix> rewards(inst.T);
  for (int t = 0; t < inst.T; ++t) {
    double swt = 0.0, srw = 0.0;
    for (std::size_t b = 0; b < sg.size(); ++b) {
      swt += cp.supply_means[t][b];
      srw += inst.rewards[t][i][sg[b]] * cp.supply_means[t][b];
    }
    double dwt = 0.0, drw = 0.0;
    for (std::size_t a = 0; a < dg.size(); ++a) {
      dwt += cp.demand_means[t][a];
      drw += inst.rewards[t][dg[a]][j] * cp.demand_means[t][a];
    }
    // Cross value of the persisting partner pairs, weighted by residual mass;
    // pairs already consumed by the internal round contribute nothing.
    double xwt = 0.0, xrw = 0.0;
    for (const PairId& p : persisting) {
      const auto ai = std::find(dg.begin(), dg.end(), p.i) - dg.begin();
      const auto bj = std::find(sg.begin(), sg.end(), p.j) - sg.begin();
      const double w = cp.demand_means[t][ai] * cp.supply_means[t][bj];
      xwt += w;
      xrw += inst.rewards[t][p.i][p.j] * w;
    }
    const double r11 = swt > prob_tol ? srw / swt : 0.0;
    const double r22 = dwt > prob_tol ? drw / dwt : 0.0;
    const double r21 = xwt > prob_tol ? xrw / xwt : 0.0;
    rewards[t] = {{r11, inst.rewards[t][i][j]}, {r21, r22}};
  }

  cp.model = new_instance(2, 2, inst.T, std::move(rewards), inst.alpha, inst.beta,
                          std::move(da), std::move(sa));
  cp.table = compute_protection_levels_2x2(cp.model, /*check=*/false);
  return cp;
}

// Priority-ordered matching with consolidated targets: walk the tiers, and for
// each pair with dominating alternatives match its mutual excess down to the
// pair's table entry; pairs without alternatives match greedily.
inline PolicyHandle consolidated_protection_policy(const MatchingInstance& inst,
                                                   const DominanceGraph& g,
                                                   int sample_count = 1000,
                                                   std::uint64_t seed = 2024) {
  auto ip = std::make_shared<const MatchingInstance>(inst);
  auto tp = std::make_shared<const PriorityTiers>(priority_tiers(g));
  auto consolidated = std::make_shared<std::map<PairId, ConsolidatedPair>>();
  for (const auto& tier : tp->tiers)
    for (const PairId& p : tier)
      if (auto cp = consolidate_pair(inst, g, *tp, p, sample_count, seed))
        consolidated->emplace(p, std::move(*cp));

  return {"consolidated", [ip, tp, consolidated](int t, const SystemState& s) {
            if (t < 0 || t >= ip->T)
              throw RangeError("consolidated: period outside the horizon");
            MatchingDecision dec = MatchingDecision::zeros(ip->m, ip->n);
            Vec xr = s.x, yr = s.y;
            for (const auto& tier : tp->tiers)
              for (const PairId& p : tier) {
                if (ip->rewards[t][p.i][p.j] <= value_tol) continue;
                int q = 0;
                const auto it = consolidated->find(p);
                if (it == consolidated->end()) {
                  q = std::min(xr[p.i], yr[p.j]);
                } else {
                  const ConsolidatedPair& cp = it->second;
                  int z1 = xr[p.i], z2 = yr[p.j];
                  for (int j2 : cp.supply_group) z1 -= yr[j2];
                  for (int i2 : cp.demand_group) z2 -= xr[i2];
                  if (z1 > 0 && z2 > 0) {
                    const ProtectionEntry& e = cp.table.clamped(t, z1 - z2);
                    q = std::clamp(z2 - e.p_s_plus, 0, std::min(z1, z2));
                  }
                }
                dec.q[p.i][p.j] += q;
                xr[p.i] -= q;
                yr[p.j] -= q;
              }
            return dec;
          }};
}

// --- top-down policies for quality-ordered systems --------------------------

// Consumes the best types first on both sides up to the total quantity, then
// pairs the consumed ranges in quality order.
inline MatchingDecision topdown_decision(const SystemState& state, int Q_total) {
  const int m = static_cast<int>(state.x.size());
  const int n = static_cast<int>(state.y.size());
  const TransformedState ts = transform_state(state);
  const int cap = std::min(m > 0 ? ts.xt[m - 1] : 0, n > 0 ? ts.yt[n - 1] : 0);
  if (Q_total < 0 || Q_total > cap)
    throw QuantityOutOfRange("total quantity " + std::to_string(Q_total) +
                             " outside [0, " + std::to_string(cap) + "]");
  MatchingDecision dec = MatchingDecision::zeros(m, n);
  for (int i = 0; i < m; ++i) {
    const int dlo = std::min(i > 0 ? ts.xt[i - 1] : 0, Q_total);
    const int dhi = std::min(ts.xt[i], Q_total);
    if (dhi <= dlo) continue;
    for (int j = 0; j < n; ++j) {
      const int slo = std::min(j > 0 ? ts.yt[j - 1] : 0, Q_total);
      const int shi = std::min(ts.yt[j], Q_total);
      const int q = std::min(dhi, shi) - std::max(dlo, slo);
      if (q > 0) dec.q[i][j] = q;
    }
  }
  return dec;
}

// Wraps any total-quantity rule into a policy. The rule sees the pre-decision
// state and must return a quantity within [0, min{total demand, total supply}].
inline PolicyHandle topdown_policy(const MatchingInstance& inst,
                                   std::function<int(int, const SystemState&)> quantity_rule) {
  const int m = inst.m, n = inst.n;
  auto rule = std::make_shared<const std::function<int(int, const SystemState&)>>(
      std::move(quantity_rule));
  return {"topdown", [m, n, rule](int t, const SystemState& s) {
            if (static_cast<int>(s.x.size()) != m || static_cast<int>(s.y.size()) != n)
              throw DimensionMismatch("topdown: state size differs from the instance");
            return topdown_decision(s, (*rule)(t, s));
          }};
}

namespace detail {

// Weakly decreasing rewards in both type indexes: the quality orders the
// top-down structure relies on.
inline void require_vertical(const MatchingInstance& inst) {
  for (int t = 0; t < inst.T; ++t)
    for (int i = 0; i < inst.m; ++i)
      for (int j = 0; j < inst.n; ++j) {
        if (i + 1 < inst.m &&
            inst.rewards[t][i][j] + value_tol < inst.rewards[t][i + 1][j])
          throw NotVertical("reward grows in the demand index at t=" + std::to_string(t));
        if (j + 1 < inst.n &&
            inst.rewards[t][i][j] + value_tol < inst.rewards[t][i][j + 1])
          throw NotVertical("reward grows in the supply index at t=" + std::to_string(t));
      }
}

inline int total_vec(const Vec& v) {
  int s = 0;
  for (int q : v) s += q;
  return s;
}

}  // namespace detail

enum class OsaMode { exact, sampled };

// One-step-ahead total-quantity rule: in each period, choose the top-down
// quantity maximizing immediate reward plus the value of matching everything
// from the next period on. The continuation is the exact greedy value
// recursion in exact mode, or a seeded common-random-number rollout average in
// sampled mode; the scan over quantities stops at the first non-improvement
// (smallest maximizer of a concave objective).
inline PolicyHandle osa_policy(const MatchingInstance& inst, OsaMode mode,
                               int sample_count = 1000, std::uint64_t seed = 2024) {
  detail::require_vertical(inst);
  if (!inst.integer_carry())
    throw NonIntegerCarryOver("one-step-ahead evaluation requires carry-over rates in {0, 1}");
  auto ip = std::make_shared<const MatchingInstance>(inst);

  if (mode == OsaMode::exact) {
    struct GreedyValue {
      std::mutex mu;
      std::vector<std::map<std::pair<Vec, Vec>, double>> memo;
    };
    auto gv = std::make_shared<GreedyValue>();
    gv->memo.resize(inst.T);

    // Expected reward of all-out top-down matching from period t on.
    auto vg = [ip, gv](auto&& self, int t, const SystemState& s) -> double {
      if (t >= ip->T) return 0.0;
      const auto key = std::pair(s.x, s.y);
      if (auto it = gv->memo[t].find(key); it != gv->memo[t].end()) return it->second;
      std::size_t cached = 0;
      for (const auto& mmap : gv->memo) cached += mmap.size();
      if (cached >= default_state_budget)
        throw BudgetExceeded("greedy continuation cache exceeds the state budget");
      const int q = std::min(detail::total_vec(s.x), detail::total_vec(s.y));
      const MatchingDecision dec = topdown_decision(s, q);
      double val = reward_of(ip->rewards[t], dec);
      if (t + 1 < ip->T) {
        const PostMatchState post = apply_decision(s, dec);
        for (const auto& d : enumerate_joint(ip->demand_arrivals[t + 1]))
          for (const auto& sup : enumerate_joint(ip->supply_arrivals[t + 1]))
            val += d.prob * sup.prob *
                   self(self, t + 1,
                        transition(post, d.qty, sup.qty, ip->alpha[t], ip->beta[t]));
      }
      gv->memo[t][key] = val;
      return val;
    };

    return {"osa-exact", [ip, gv, vg](int t, const SystemState& s) {
              if (t < 0 || t >= ip->T)
                throw RangeError("one-step-ahead: period outside the horizon");
              std::lock_guard<std::mutex> lock(gv->mu);
              const int cap = std::min(detail::total_vec(s.x), detail::total_vec(s.y));
              auto objective = [&](int q) {
                const MatchingDecision dec = topdown_decision(s, q);
                double val = reward_of(ip->rewards[t], dec);
                if (t + 1 < ip->T) {
                  const PostMatchState post = apply_decision(s, dec);
                  for (const auto& d : enumerate_joint(ip->demand_arrivals[t + 1]))
                    for (const auto& sup : enumerate_joint(ip->supply_arrivals[t + 1]))
                      val += d.prob * sup.prob *
                             vg(vg, t + 1,
                                transition(post, d.qty, sup.qty, ip->alpha[t], ip->beta[t]));
                }
                return val;
              };
              return topdown_decision(s, detail::concave_argmax(0, cap, objective));
            }};
  }

  const int N = std::max(sample_count, 1);
  return {"osa-sampled", [ip, N, seed](int t, const SystemState& s) {
            if (t < 0 || t >= ip->T)
              throw RangeError("one-step-ahead: period outside the horizon");
            const int cap = std::min(detail::total_vec(s.x), detail::total_vec(s.y));
            if (t + 1 >= ip->T || cap == 0) {
              auto myopic = [&](int q) {
                return reward_of(ip->rewards[t], topdown_decision(s, q));
              };
              return topdown_decision(s, detail::concave_argmax(0, cap, myopic));
            }

            // One arrival path per replication, shared by every candidate
            // quantity (common random numbers).
            std::vector<std::vector<std::pair<Vec, Vec>>> paths(N);
            for (int k = 0; k < N; ++k) {
              std::seed_seq sq{static_cast<std::uint32_t>(seed),
                               static_cast<std::uint32_t>(seed >> 32),
                               static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(k)};
              std::mt19937_64 eng(sq);
              paths[k].resize(ip->T);
              for (int tau = t + 1; tau < ip->T; ++tau) {
                Vec d(ip->m), sup(ip->n);
                for (int i = 0; i < ip->m; ++i)
                  d[i] = detail::sample_pmf(ip->demand_arrivals[tau][i], eng);
                for (int j = 0; j < ip->n; ++j)
                  sup[j] = detail::sample_pmf(ip->supply_arrivals[tau][j], eng);
                paths[k][tau] = {std::move(d), std::move(sup)};
              }
            }
            auto rollout = [&](int k, const PostMatchState& post) {
              SystemState cur = transition(post, paths[k][t + 1].first, paths[k][t + 1].second,
                                           ip->alpha[t], ip->beta[t]);
              double total = 0.0;
              for (int tau = t + 1; tau < ip->T; ++tau) {
                const int q = std::min(detail::total_vec(cur.x), detail::total_vec(cur.y));
                const MatchingDecision dec = topdown_decision(cur, q);
                total += reward_of(ip->rewards[tau], dec);
                if (tau + 1 < ip->T)
                  cur = transition(apply_decision(cur, dec), paths[k][tau + 1].first,
                                   paths[k][tau + 1].second, ip->alpha[tau], ip->beta[tau]);
              }
              return total;
            };
            auto objective = [&](int q) {
              const MatchingDecision dec = topdown_decision(s, q);
              const PostMatchState post = apply_decision(s, dec);
              double cont = 0.0;
              for (int k = 0; k < N; ++k) cont += rollout(k, post);
              return reward_of(ip->rewards[t], dec) + cont / N;
            };
            return topdown_decision(s, detail::concave_argmax(0, cap, objective));
          }};
}

// --- upgrade-on-unfilled restriction ----------------------------------------

namespace detail {

// All decisions that only use intended pairs (i, i) and one-step upgrades
// (i, i-1), upgrading around a type only when its intended match is filled to
// the hilt.
inline std::vector<MatchingDecision> iou_decisions(const SystemState& s) {
  const int n = static_cast<int>(s.x.size());
  std::vector<MatchingDecision> out;
  MatchingDecision cur = MatchingDecision::zeros(n, n);
  Vec rem_y = s.y;
  auto rec = [&](auto&& self, int i, bool prev_full) -> void {
    if (i == n) {
      out.push_back(cur);
      return;
    }
    const int full = std::min(s.x[i], s.y[i]);
    for (int qd = 0; qd <= full; ++qd) {
      cur.q[i][i] = qd;
      rem_y[i] -= qd;
      const bool diag_full = qd == full;
      const int up_cap =
          (i > 0 && diag_full && prev_full) ? std::min(s.x[i] - qd, rem_y[i - 1]) : 0;
      for (int qu = 0; qu <= up_cap; ++qu) {
        if (i > 0) {
          cur.q[i][i - 1] = qu;
          rem_y[i - 1] -= qu;
        }
        self(self, i + 1, diag_full);
        if (i > 0) {
          rem_y[i - 1] += qu;
          cur.q[i][i - 1] = 0;
        }
      }
      rem_y[i] += qd;
      cur.q[i][i] = 0;
    }
  };
  rec(rec, 0, true);
  return out;
}

}  // namespace detail

// Exact DP over the restricted decision set, returning the restricted-optimal
// policy and its expected value from the initial arrivals. Requires the
// one-level reward pattern (nonzero only on intended and one-step-upgrade
// pairs). When same-pair rewards decay faster than the carry-over rates, the
// half-of-optimal floor is not guaranteed; a warning is emitted.
inline std::pair<PolicyHandle, double> best_iou_policy(const MatchingInstance& inst) {
  if (inst.m != inst.n)
    throw NotOneLevelStructure("upgrade restriction requires equally many classes per side");
  for (int t = 0; t < inst.T; ++t)
    for (int i = 0; i < inst.m; ++i)
      for (int j = 0; j < inst.n; ++j)
        if (j != i && j != i - 1 && std::abs(inst.rewards[t][i][j]) > value_tol)
          throw NotOneLevelStructure("reward outside the intended and upgrade pairs at t=" +
                                     std::to_string(t) + ", pair (" + std::to_string(i) +
                                     "," + std::to_string(j) + ")");
  if (!inst.integer_carry())
    throw NonIntegerCarryOver("restricted DP requires carry-over rates in {0, 1}");
  for (int t = 0; t + 1 < inst.T; ++t)
    for (int i = 0; i < inst.m; ++i)
      if (inst.rewards[t][i][i] + value_tol <
          std::max(inst.alpha[t], inst.beta[t]) * inst.rewards[t + 1][i][i]) {
        std::cerr << "warning: intended-pair reward grows faster than the carry-over"
                     " discount; the half-of-optimal floor may not hold\n";
        t = inst.T;
        break;
      }

  struct Solver {
    MatchingInstance inst;
    std::mutex mu;
    std::vector<std::map<std::pair<Vec, Vec>, std::pair<double, MatchingDecision>>> memo;

    std::pair<double, MatchingDecision> solve(int t, const SystemState& s) {
      const auto key = std::pair(s.x, s.y);
      if (auto it = memo[t].find(key); it != memo[t].end()) return it->second;
      std::size_t cached = 0;
      for (const auto& mmap : memo) cached += mmap.size();
      if (cached >= default_state_budget)
        throw BudgetExceeded("restricted DP cache exceeds the state budget");
      double best = std::numeric_limits<double>::lowest();
      MatchingDecision arg = MatchingDecision::zeros(inst.m, inst.n);
      for (const MatchingDecision& dec : detail::iou_decisions(s)) {
        double val = reward_of(inst.rewards[t], dec);
        if (t + 1 < inst.T) {
          const PostMatchState post = apply_decision(s, dec);
          for (const auto& d : enumerate_joint(inst.demand_arrivals[t + 1]))
            for (const auto& sup : enumerate_joint(inst.supply_arrivals[t + 1]))
              val += d.prob * sup.prob *
                     solve(t + 1, transition(post, d.qty, sup.qty, inst.alpha[t], inst.beta[t]))
                         .first;
        }
        if (val > best + value_tol) {
          best = val;
          arg = dec;
        }
      }
      return memo[t][key] = {best, arg};
    }
  };
  auto solver = std::make_shared<Solver>();
  solver->inst = inst;
  solver->memo.resize(inst.T);

  double value = 0.0;
  {
    std::lock_guard<std::mutex> lock(solver->mu);
    SystemState s;
    for (const auto& d : enumerate_joint(inst.demand_arrivals[0])) {
      s.x = d.qty;
      for (const auto& sup : enumerate_joint(inst.supply_arrivals[0])) {
        s.y = sup.qty;
        value += d.prob * sup.prob * solver->solve(0, s).second == s ? 0.0 : 0.0;
      }
    }
    value = 0.0;
    for (const auto& d : enumerate_joint(inst.demand_arrivals[0])) {
      s.x = d.qty;
      for (const auto& sup : enumerate_joint(inst.supply_arrivals[0])) {
        s.y = sup.qty;
        value += d.prob * sup.prob * solver->solve(0, s).first;
      }
    }
  }

  PolicyHandle pol{"best-iou", [solver](int t, const SystemState& s) {
                     if (t < 0 || t >= solver->inst.T)
                       throw RangeError("restricted DP: period outside the horizon");
                     std::lock_guard<std::mutex> lock(solver->mu);
                     return solver->solve(t, s).second;
                   }};
  return {std::move(pol), value};
}

}  // namespace dynmatch
