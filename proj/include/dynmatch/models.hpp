#pragma once

// Builders for structured instance families: 2x2 horizontal systems,
// unidirectional lines (upgrading, carpooling), planar euclidean types, and
// vertically ordered quality tiers. Each builder assembles the reward tensor
// from domain parameters and numerically verifies the structural conditions
// under which the analysis layer guarantees priority rules. Checks throw by
// default; `check = false` downgrades them to stderr warnings so deliberate
// counterexamples can still be constructed.

#include <array>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"

namespace dynmatch {

struct AssumptionViolated : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MonotoneParamViolated : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BadClassOrder : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class Error>
inline void flag(bool check, const std::string& msg) {
  if (check) throw Error(msg);
  std::cerr << "warning: " << msg << "\n";
}

}  // namespace detail

// --- 2x2 horizontal systems -------------------------------------------------

// Reward matrix for a two-class service system where premier demand may be
// served by a regular unit at a penalty, and premier supply may serve regular
// demand at its higher wage. Type 0 is premier on both sides.
struct PremierRegular {
  double premier_fare = 0.0;
  double regular_fare = 0.0;
  double premier_wage = 0.0;
  double regular_wage = 0.0;
  double penalty = 0.0;  // charged when premier demand settles for regular supply
};

inline Matrix premier_regular_rewards(const PremierRegular& p) {
  return {{p.premier_fare - p.premier_wage, p.regular_fare - p.regular_wage - p.penalty},
          {p.regular_fare - p.premier_wage, p.regular_fare - p.regular_wage}};
}

// Builds a 2x2 instance and verifies the conditions behind the two-sided
// protection-level policy: in every period each diagonal reward must weakly
// beat its row and column neighbor, and the diagonal's edge over a neighbor
// must not grow from one period to the next.
inline MatchingInstance horizontal_2x2(const std::vector<Matrix>& rewards,
                                       const std::vector<double>& alpha,
                                       const std::vector<double>& beta,
                                       const std::vector<std::vector<ArrivalModel>>& demand_arrivals,
                                       const std::vector<std::vector<ArrivalModel>>& supply_arrivals,
                                       bool check = true) {
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    if (rewards[t].size() != 2 || rewards[t][0].size() != 2 || rewards[t][1].size() != 2)
      throw DimensionMismatch("horizontal_2x2: rewards[" + std::to_string(t) + "] must be 2x2");
  }
  MatchingInstance inst =
      new_instance(2, 2, static_cast<int>(rewards.size()), rewards, alpha, beta,
                   demand_arrivals, supply_arrivals);
  auto fail = [&](const std::string& msg) { detail::flag<AssumptionViolated>(check, msg); };
  for (int t = 0; t < inst.T; ++t) {
    for (int k = 0; k < 2; ++k) {
      int o = 1 - k;
      if (inst.r(t, k, k) < inst.r(t, k, o) - value_tol) {
        fail("diagonal reward r[" + std::to_string(t) + "][" + std::to_string(k) + "][" +
             std::to_string(k) + "]=" + std::to_string(inst.r(t, k, k)) +
             " is below its row neighbor r[" + std::to_string(t) + "][" + std::to_string(k) +
             "][" + std::to_string(o) + "]=" + std::to_string(inst.r(t, k, o)));
        return inst;
      }
      if (inst.r(t, k, k) < inst.r(t, o, k) - value_tol) {
        fail("diagonal reward r[" + std::to_string(t) + "][" + std::to_string(k) + "][" +
             std::to_string(k) + "]=" + std::to_string(inst.r(t, k, k)) +
             " is below its column neighbor r[" + std::to_string(t) + "][" + std::to_string(o) +
             "][" + std::to_string(k) + "]=" + std::to_string(inst.r(t, o, k)));
        return inst;
      }
    }
  }
  for (int t = 0; t < inst.T; ++t) {
    for (int k = 0; k < 2; ++k) {
      int o = 1 - k;
      double row_gap = inst.r(t, k, k) - inst.r(t, k, o);
      for (int i = 0; i < 2; ++i) {
        if (row_gap < inst.r(t + 1, i, k) - inst.r(t + 1, i, o) - value_tol) {
          fail("diagonal edge over supply " + std::to_string(o) + " shrinks between periods " +
               std::to_string(t) + " and " + std::to_string(t + 1) + " seen from demand " +
               std::to_string(i) + " (gap " + std::to_string(row_gap) + " < next-period gap " +
               std::to_string(inst.r(t + 1, i, k) - inst.r(t + 1, i, o)) + ")");
          return inst;
        }
      }
      double col_gap = inst.r(t, k, k) - inst.r(t, o, k);
      for (int j = 0; j < 2; ++j) {
        if (col_gap < inst.r(t + 1, k, j) - inst.r(t + 1, o, j) - value_tol) {
          fail("diagonal edge over demand " + std::to_string(o) + " shrinks between periods " +
               std::to_string(t) + " and " + std::to_string(t + 1) + " seen from supply " +
               std::to_string(j) + " (gap " + std::to_string(col_gap) + " < next-period gap " +
               std::to_string(inst.r(t + 1, k, j) - inst.r(t + 1, o, j)) + ")");
          return inst;
        }
      }
    }
  }
  return inst;
}

// --- unidirectional line ----------------------------------------------------

// Types placed on a directed line segment. Supply travels only forward, so a
// pair is matchable only when the demand sits at or beyond the supply. The
// prize matrix has one row per period, with either a single shared column or
// one column per demand type.
struct LineLayout {
  std::vector<double> demand_pos;
  std::vector<double> supply_pos;
  Matrix prizes;
};

// Reachability metadata for a layout: entry [i][j] is true when supply j can
// travel forward to demand i, i.e. dist(i <- j) = pos(i) - pos(j) >= 0.
inline std::vector<std::vector<bool>> reachable_pairs(const LineLayout& layout) {
  std::vector<std::vector<bool>> out(layout.demand_pos.size(),
                                     std::vector<bool>(layout.supply_pos.size(), false));
  for (std::size_t i = 0; i < layout.demand_pos.size(); ++i)
    for (std::size_t j = 0; j < layout.supply_pos.size(); ++j)
      out[i][j] = layout.demand_pos[i] >= layout.supply_pos[j];
  return out;
}

inline MatchingInstance directed_line(const LineLayout& layout,
                                      const std::vector<double>& alpha,
                                      const std::vector<double>& beta,
                                      const std::vector<std::vector<ArrivalModel>>& demand_arrivals,
                                      const std::vector<std::vector<ArrivalModel>>& supply_arrivals) {
  std::size_t m = layout.demand_pos.size();
  std::size_t n = layout.supply_pos.size();
  std::size_t T = layout.prizes.size();
  if (m == 0 || n == 0 || T == 0)
    throw DimensionMismatch("directed_line: positions and prizes must be nonempty");
  for (double p : layout.demand_pos)
    if (!std::isfinite(p) || p < 0.0)
      throw RangeError("directed_line: demand positions must be finite and nonnegative");
  for (double p : layout.supply_pos)
    if (!std::isfinite(p) || p < 0.0)
      throw RangeError("directed_line: supply positions must be finite and nonnegative");
  for (std::size_t t = 0; t < T; ++t) {
    if (layout.prizes[t].size() != 1 && layout.prizes[t].size() != m)
      throw DimensionMismatch("directed_line: prizes[" + std::to_string(t) +
                              "] must have 1 or " + std::to_string(m) + " entries");
  }
  auto prize = [&](std::size_t t, std::size_t i) {
    return layout.prizes[t].size() == 1 ? layout.prizes[t][0] : layout.prizes[t][i];
  };
  auto reach = reachable_pairs(layout);
  std::vector<Matrix> rewards(T);
  for (std::size_t t = 0; t < T; ++t) {
    rewards[t].assign(m, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (reach[i][j])
          rewards[t][i][j] = prize(t, i) - (layout.demand_pos[i] - layout.supply_pos[j]);
      }
    }
  }
  return new_instance(static_cast<int>(m), static_cast<int>(n), static_cast<int>(T), rewards,
                      alpha, beta, demand_arrivals, supply_arrivals);
}

// --- capacity management with upgrading -------------------------------------

// Demand class i may be served by its own class or any more expensive class
// j <= i (class 0 is the most expensive). Rewards are fare minus provision
// cost; with `one_level` set, upgrades further than one class away are
// infeasible and earn zero.
struct UpgradeParams {
  Matrix fares;               // one row per period, one column per class
  std::vector<double> costs;  // per-class provision cost, strictly decreasing
  bool one_level = false;
};

inline MatchingInstance upgrading_instance(const UpgradeParams& params,
                                           const std::vector<double>& alpha,
                                           const std::vector<double>& beta,
                                           const std::vector<std::vector<ArrivalModel>>& demand_arrivals,
                                           const std::vector<std::vector<ArrivalModel>>& supply_arrivals) {
  std::size_t n = params.costs.size();
  std::size_t T = params.fares.size();
  if (n == 0 || T == 0)
    throw DimensionMismatch("upgrading_instance: fares and costs must be nonempty");
  for (std::size_t t = 0; t < T; ++t) {
    if (params.fares[t].size() != n)
      throw DimensionMismatch("upgrading_instance: fares[" + std::to_string(t) + "] must have " +
                              std::to_string(n) + " entries");
  }
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (!(params.costs[k] > params.costs[k + 1]))
      throw BadClassOrder("upgrading_instance: costs must strictly decrease, but costs[" +
                          std::to_string(k) + "]=" + std::to_string(params.costs[k]) +
                          " <= costs[" + std::to_string(k + 1) + "]=" +
                          std::to_string(params.costs[k + 1]));
  }
  LineLayout layout;
  layout.demand_pos.resize(n);
  layout.supply_pos.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    layout.demand_pos[k] = params.costs[0] - params.costs[k];
    layout.supply_pos[k] = params.costs[0] - params.costs[k];
  }
  layout.prizes.assign(T, std::vector<double>(n, 0.0));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < n; ++i)
      layout.prizes[t][i] = params.fares[t][i] - params.costs[i];
  MatchingInstance inst =
      directed_line(layout, alpha, beta, demand_arrivals, supply_arrivals);
  if (params.one_level) {
    for (int t = 0; t < inst.T; ++t)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (j != i && j + 1 != i) inst.rewards[t][i][j] = 0.0;
  }
  return inst;
}

// --- euclidean types --------------------------------------------------------

using Point = std::array<double, 2>;

// Types at planar locations; matching pays a per-period prize minus a
// per-period rate times straight-line distance. Prizes and rates must be
// nonincreasing over time so that waiting never improves a given pair.
inline MatchingInstance euclidean_instance(const std::vector<Point>& demand_points,
                                           const std::vector<Point>& supply_points,
                                           const std::vector<double>& prize,
                                           const std::vector<double>& rate,
                                           const std::vector<double>& alpha,
                                           const std::vector<double>& beta,
                                           const std::vector<std::vector<ArrivalModel>>& demand_arrivals,
                                           const std::vector<std::vector<ArrivalModel>>& supply_arrivals,
                                           bool check = true) {
  std::size_t m = demand_points.size();
  std::size_t n = supply_points.size();
  std::size_t T = prize.size();
  if (m == 0 || n == 0 || T == 0)
    throw DimensionMismatch("euclidean_instance: points and prize must be nonempty");
  if (rate.size() != T)
    throw DimensionMismatch("euclidean_instance: rate must have one entry per period");
  for (std::size_t t = 0; t + 1 < T; ++t) {
    if (prize[t] < prize[t + 1] - value_tol) {
      detail::flag<MonotoneParamViolated>(
          check, "euclidean_instance: prize must be nonincreasing, but prize[" +
                     std::to_string(t) + "]=" + std::to_string(prize[t]) + " < prize[" +
                     std::to_string(t + 1) + "]=" + std::to_string(prize[t + 1]));
      break;
    }
  }
  for (std::size_t t = 0; t + 1 < T; ++t) {
    if (rate[t] < rate[t + 1] - value_tol) {
      detail::flag<MonotoneParamViolated>(
          check, "euclidean_instance: rate must be nonincreasing, but rate[" +
                     std::to_string(t) + "]=" + std::to_string(rate[t]) + " < rate[" +
                     std::to_string(t + 1) + "]=" + std::to_string(rate[t + 1]));
      break;
    }
  }
  std::vector<Matrix> rewards(T);
  for (std::size_t t = 0; t < T; ++t) {
    rewards[t].assign(m, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double d = std::hypot(demand_points[i][0] - supply_points[j][0],
                              demand_points[i][1] - supply_points[j][1]);
        rewards[t][i][j] = prize[t] - rate[t] * d;
      }
    }
  }
  return new_instance(static_cast<int>(m), static_cast<int>(n), static_cast<int>(T), rewards,
                      alpha, beta, demand_arrivals, supply_arrivals);
}

// --- vertical quality tiers -------------------------------------------------

namespace detail {

// Strict per-period quality ordering: lower index means strictly higher reward.
inline bool check_strict_order(const Matrix& q, const char* side, bool check) {
  for (std::size_t t = 0; t < q.size(); ++t) {
    for (std::size_t k = 0; k + 1 < q[t].size(); ++k) {
      if (!(q[t][k] > q[t][k + 1] + value_tol)) {
        flag<AssumptionViolated>(
            check, std::string("vertical quality order broken on the ") + side + " side at t=" +
                       std::to_string(t) + ": entry " + std::to_string(k) + "=" +
                       std::to_string(q[t][k]) + " does not strictly exceed entry " +
                       std::to_string(k + 1) + "=" + std::to_string(q[t][k + 1]));
        return false;
      }
    }
  }
  return true;
}

// Quality gaps (including the gap down to a virtual zero-reward type) must
// shrink at least as fast as the carry-over rate discounts them.
inline bool check_damped_gaps(const Matrix& q, const std::vector<double>& rate, const char* side,
                              bool check) {
  std::size_t T = q.size();
  auto at = [&](std::size_t t, std::size_t k) {
    return k < q[t].size() ? q[t][k] : 0.0;
  };
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t k = 0; k < q[t].size(); ++k) {
      double gap = at(t, k) - at(t, k + 1);
      double next = at(t + 1, k) - at(t + 1, k + 1);
      if (gap < rate[t] * next - value_tol) {
        flag<AssumptionViolated>(
            check, std::string("vertical gap condition broken on the ") + side + " side at t=" +
                       std::to_string(t) + ", entry " + std::to_string(k) + ": gap " +
                       std::to_string(gap) + " < carried next-period gap " +
                       std::to_string(rate[t] * next));
        return false;
      }
    }
  }
  return true;
}

}  // namespace detail

// Additively separable vertical system: the reward of a pair is the demand
// quality plus the supply quality, each strictly ordered by type index, with
// gaps that shrink no slower than the carry-over rate.
inline MatchingInstance vertical_instance(const Matrix& demand_quality,
                                          const Matrix& supply_quality,
                                          const std::vector<double>& alpha,
                                          const std::vector<double>& beta,
                                          const std::vector<std::vector<ArrivalModel>>& demand_arrivals,
                                          const std::vector<std::vector<ArrivalModel>>& supply_arrivals,
                                          bool check = true) {
  std::size_t T = demand_quality.size();
  if (T == 0 || supply_quality.size() != T)
    throw DimensionMismatch("vertical_instance: quality matrices must share one row per period");
  std::size_t m = demand_quality[0].size();
  std::size_t n = supply_quality[0].size();
  for (std::size_t t = 0; t < T; ++t) {
    if (demand_quality[t].size() != m || supply_quality[t].size() != n)
      throw DimensionMismatch("vertical_instance: ragged quality rows at t=" + std::to_string(t));
  }
  std::vector<Matrix> rewards(T);
  for (std::size_t t = 0; t < T; ++t) {
    rewards[t].assign(m, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        rewards[t][i][j] = demand_quality[t][i] + supply_quality[t][j];
  }
  MatchingInstance inst =
      new_instance(static_cast<int>(m), static_cast<int>(n), static_cast<int>(T), rewards,
                   alpha, beta, demand_arrivals, supply_arrivals);
  if (detail::check_strict_order(demand_quality, "demand", check) &&
      detail::check_strict_order(supply_quality, "supply", check)) {
    if (detail::check_damped_gaps(demand_quality, inst.alpha, "demand", check))
      detail::check_damped_gaps(supply_quality, inst.beta, "supply", check);
  }
  return inst;
}

// Vertical system with an interaction term: r[t][i][j] =
// a[t][i] + b[t][j] + gamma * a[t][i] * b[t][j]. The assembled tensor must be
// componentwise decreasing in both type indexes, have row and column gaps that
// dominate every carried next-period gap, and be supermodular.
inline MatchingInstance vertical_nonadditive(const Matrix& a, const Matrix& b, double gamma,
                                             const std::vector<double>& alpha,
                                             const std::vector<double>& beta,
                                             const std::vector<std::vector<ArrivalModel>>& demand_arrivals,
                                             const std::vector<std::vector<ArrivalModel>>& supply_arrivals,
                                             bool check = true) {
  std::size_t T = a.size();
  if (T == 0 || b.size() != T)
    throw DimensionMismatch("vertical_nonadditive: a and b must share one row per period");
  if (!std::isfinite(gamma)) throw RangeError("vertical_nonadditive: gamma must be finite");
  std::size_t m = a[0].size();
  std::size_t n = b[0].size();
  for (std::size_t t = 0; t < T; ++t) {
    if (a[t].size() != m || b[t].size() != n)
      throw DimensionMismatch("vertical_nonadditive: ragged rows at t=" + std::to_string(t));
  }
  std::vector<Matrix> rewards(T);
  for (std::size_t t = 0; t < T; ++t) {
    rewards[t].assign(m, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        rewards[t][i][j] = a[t][i] + b[t][j] + gamma * a[t][i] * b[t][j];
  }
  MatchingInstance inst =
      new_instance(static_cast<int>(m), static_cast<int>(n), static_cast<int>(T), rewards,
                   alpha, beta, demand_arrivals, supply_arrivals);
  auto fail = [&](const std::string& msg) {
    detail::flag<AssumptionViolated>(check, "vertical_nonadditive: " + msg);
  };
  for (int t = 0; t < inst.T; ++t) {
    for (int i = 0; i < inst.m; ++i) {
      for (int j = 0; j < inst.n; ++j) {
        if (i + 1 < inst.m && inst.r(t, i, j) < inst.r(t, i + 1, j) - value_tol) {
          fail("rewards must decrease in the demand index, but r[" + std::to_string(t) + "][" +
               std::to_string(i) + "][" + std::to_string(j) + "] < r[" + std::to_string(t) +
               "][" + std::to_string(i + 1) + "][" + std::to_string(j) + "]");
          return inst;
        }
        if (j + 1 < inst.n && inst.r(t, i, j) < inst.r(t, i, j + 1) - value_tol) {
          fail("rewards must decrease in the supply index, but r[" + std::to_string(t) + "][" +
               std::to_string(i) + "][" + std::to_string(j) + "] < r[" + std::to_string(t) +
               "][" + std::to_string(i) + "][" + std::to_string(j + 1) + "]");
          return inst;
        }
      }
    }
  }
  for (int t = 0; t < inst.T; ++t) {
    for (int i = 0; i + 1 < inst.m; ++i) {
      for (int j = 0; j < inst.n; ++j) {
        double gap = inst.r(t, i, j) - inst.r(t, i + 1, j);
        for (int jj = 0; jj < inst.n; ++jj) {
          double next = inst.r(t + 1, i, jj) - inst.r(t + 1, i + 1, jj);
          if (gap < inst.alpha[t] * next - value_tol) {
            fail("demand gap between types " + std::to_string(i) + "," + std::to_string(i + 1) +
                 " at t=" + std::to_string(t) + ", supply " + std::to_string(j) + " (" +
                 std::to_string(gap) + ") is below the carried next-period gap at supply " +
                 std::to_string(jj) + " (" + std::to_string(inst.alpha[t] * next) + ")");
            return inst;
          }
        }
      }
    }
    for (int j = 0; j + 1 < inst.n; ++j) {
      for (int i = 0; i < inst.m; ++i) {
        double gap = inst.r(t, i, j) - inst.r(t, i, j + 1);
        for (int ii = 0; ii < inst.m; ++ii) {
          double next = inst.r(t + 1, ii, j) - inst.r(t + 1, ii, j + 1);
          if (gap < inst.beta[t] * next - value_tol) {
            fail("supply gap between types " + std::to_string(j) + "," + std::to_string(j + 1) +
                 " at t=" + std::to_string(t) + ", demand " + std::to_string(i) + " (" +
                 std::to_string(gap) + ") is below the carried next-period gap at demand " +
                 std::to_string(ii) + " (" + std::to_string(inst.beta[t] * next) + ")");
            return inst;
          }
        }
      }
    }
  }
  for (int t = 0; t < inst.T; ++t) {
    for (int i = 0; i + 1 < inst.m; ++i) {
      for (int j = 0; j + 1 < inst.n; ++j) {
        double lhs = inst.r(t, i, j) - inst.r(t, i, j + 1);
        double rhs = inst.r(t, i + 1, j) - inst.r(t, i + 1, j + 1);
        if (lhs < rhs - value_tol) {
          fail("supermodularity fails at t=" + std::to_string(t) + " for demand types " +
               std::to_string(i) + "," + std::to_string(i + 1) + " and supply types " +
               std::to_string(j) + "," + std::to_string(j + 1));
          return inst;
        }
      }
    }
  }
  return inst;
}

}  // namespace dynmatch
