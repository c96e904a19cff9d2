// core.hpp -- problem data, states, decisions, period transitions, and the
// waiting-cost reward transformation.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dynmatch {

using Vec = std::vector<int>;                    // integer quantity vector
using Matrix = std::vector<std::vector<double>>; // one period's reward matrix

// Absolute tolerance for all reward/value comparisons.
inline constexpr double value_tol = 1e-9;
// Tolerance for probability-mass checks.
inline constexpr double prob_tol = 1e-12;

struct DimensionMismatch : std::runtime_error { using std::runtime_error::runtime_error; };
struct RangeError : std::runtime_error { using std::runtime_error::runtime_error; };
struct BadDistribution : std::runtime_error { using std::runtime_error::runtime_error; };
struct Infeasible : std::runtime_error { using std::runtime_error::runtime_error; };
struct NonIntegerCarryOver : std::runtime_error { using std::runtime_error::runtime_error; };

// Finite integer-valued arrival distribution for one type in one period.
struct ArrivalModel {
  Vec support;               // distinct nonnegative quantities
  std::vector<double> probs; // matching probabilities, sum to 1

  int max_value() const {
    return support.empty() ? 0 : *std::max_element(support.begin(), support.end());
  }
  double mean() const {
    double s = 0.0;
    for (std::size_t k = 0; k < support.size(); ++k) s += support[k] * probs[k];
    return s;
  }
  bool operator==(const ArrivalModel&) const = default;
};

struct WaitingCosts {
  Matrix c; // c[t][i], per-unit demand waiting cost
  Matrix h; // h[t][j], per-unit supply holding cost
};

// Pre-matching quantities at the start of a period.
struct SystemState {
  Vec x; // demand per type
  Vec y; // supply per type
  bool operator==(const SystemState&) const = default;
  auto operator<=>(const SystemState&) const = default;
};

// q[i][j] units of demand type i matched with supply type j.
struct MatchingDecision {
  std::vector<Vec> q;
  bool operator==(const MatchingDecision&) const = default;
  auto operator<=>(const MatchingDecision&) const = default;

  static MatchingDecision zeros(int m, int n) {
    return MatchingDecision{std::vector<Vec>(m, Vec(n, 0))};
  }
  int total() const {
    int s = 0;
    for (const auto& row : q)
      for (int v : row) s += v;
    return s;
  }
};

// Leftover quantities after matching, before carry-over and new arrivals.
struct PostMatchState {
  Vec u, v;
};

// Full problem datum. Periods and types are 0-indexed internally;
// rewards[t][i][j] is the per-unit reward of pair (i,j) in period t.
struct MatchingInstance {
  int m = 0, n = 0, T = 0;
  std::vector<Matrix> rewards;                            // T x m x n
  std::vector<double> alpha;                              // demand carry-over, length T
  std::vector<double> beta;                               // supply carry-over, length T
  std::vector<std::vector<ArrivalModel>> demand_arrivals; // [t][i]
  std::vector<std::vector<ArrivalModel>> supply_arrivals; // [t][j]
  // Original costs are kept after folding so an evaluator can report the
  // raw-reward-minus-costs objective next to the folded one.
  std::optional<WaitingCosts> waiting_costs;
  bool costs_folded = false;

  // Reward with the "zero after the horizon" convention.
  double r(int t, int i, int j) const {
    return t < T ? rewards[t][i][j] : 0.0;
  }
  bool integer_carry() const {
    auto ok = [](double a) { return a == 0.0 || a == 1.0; };
    return std::all_of(alpha.begin(), alpha.end(), ok) &&
           std::all_of(beta.begin(), beta.end(), ok);
  }
};

inline Vec row_sums(const MatchingDecision& d) {
  Vec r(d.q.size(), 0);
  for (std::size_t i = 0; i < d.q.size(); ++i)
    for (int v : d.q[i]) r[i] += v;
  return r;
}

inline Vec col_sums(const MatchingDecision& d) {
  if (d.q.empty()) return {};
  Vec c(d.q[0].size(), 0);
  for (const auto& row : d.q)
    for (std::size_t j = 0; j < row.size(); ++j) c[j] += row[j];
  return c;
}

namespace detail {

inline void validate_pmf(const ArrivalModel& a, const std::string& where) {
  if (a.support.empty() || a.support.size() != a.probs.size())
    throw BadDistribution(where + ": support/probs length mismatch or empty");
  double mass = 0.0;
  for (std::size_t k = 0; k < a.support.size(); ++k) {
    if (a.support[k] < 0)
      throw BadDistribution(where + ": negative support value");
    for (std::size_t l = k + 1; l < a.support.size(); ++l)
      if (a.support[k] == a.support[l])
        throw BadDistribution(where + ": duplicate support value");
    if (!(a.probs[k] >= 0.0) || !std::isfinite(a.probs[k]))
      throw BadDistribution(where + ": negative or non-finite probability");
    mass += a.probs[k];
  }
  if (std::abs(mass - 1.0) > prob_tol)
    throw BadDistribution(where + ": probabilities sum to " + std::to_string(mass));
}

inline std::vector<double> expand_rate(std::vector<double> rate, int T, const char* name) {
  if (rate.size() == 1) rate.assign(T, rate[0]);
  if (static_cast<int>(rate.size()) != T)
    throw DimensionMismatch(std::string(name) + ": expected scalar or length-T sequence");
  for (double v : rate)
    if (!(v >= 0.0 && v <= 1.0))
      throw RangeError(std::string(name) + ": carry-over rate outside [0,1]");
  return rate;
}

} // namespace detail

// Validates dimensions and ranges; scalar carry-over broadcasts to length T.
inline MatchingInstance new_instance(int m, int n, int T,
                                     std::vector<Matrix> rewards,
                                     std::vector<double> alpha,
                                     std::vector<double> beta,
                                     std::vector<std::vector<ArrivalModel>> demand_arrivals,
                                     std::vector<std::vector<ArrivalModel>> supply_arrivals) {
  if (m < 1 || n < 1 || T < 1)
    throw DimensionMismatch("instance dimensions must be at least 1");
  if (static_cast<int>(rewards.size()) != T)
    throw DimensionMismatch("rewards: expected T periods");
  for (const auto& rt : rewards) {
    if (static_cast<int>(rt.size()) != m)
      throw DimensionMismatch("rewards: expected m rows per period");
    for (const auto& row : rt) {
      if (static_cast<int>(row.size()) != n)
        throw DimensionMismatch("rewards: expected n columns per row");
      for (double v : row)
        if (!std::isfinite(v)) throw RangeError("rewards must be finite");
    }
  }
  alpha = detail::expand_rate(std::move(alpha), T, "alpha");
  beta = detail::expand_rate(std::move(beta), T, "beta");
  if (static_cast<int>(demand_arrivals.size()) != T ||
      static_cast<int>(supply_arrivals.size()) != T)
    throw DimensionMismatch("arrivals: expected one list per period");
  for (int t = 0; t < T; ++t) {
    if (static_cast<int>(demand_arrivals[t].size()) != m)
      throw DimensionMismatch("demand_arrivals: expected one model per type");
    if (static_cast<int>(supply_arrivals[t].size()) != n)
      throw DimensionMismatch("supply_arrivals: expected one model per type");
    for (int i = 0; i < m; ++i)
      detail::validate_pmf(demand_arrivals[t][i],
                           "demand_arrivals[" + std::to_string(t) + "][" + std::to_string(i) + "]");
    for (int j = 0; j < n; ++j)
      detail::validate_pmf(supply_arrivals[t][j],
                           "supply_arrivals[" + std::to_string(t) + "][" + std::to_string(j) + "]");
  }
  MatchingInstance inst;
  inst.m = m;
  inst.n = n;
  inst.T = T;
  inst.rewards = std::move(rewards);
  inst.alpha = std::move(alpha);
  inst.beta = std::move(beta);
  inst.demand_arrivals = std::move(demand_arrivals);
  inst.supply_arrivals = std::move(supply_arrivals);
  return inst;
}

inline MatchingInstance new_instance(int m, int n, int T,
                                     std::vector<Matrix> rewards,
                                     double alpha, double beta,
                                     std::vector<std::vector<ArrivalModel>> demand_arrivals,
                                     std::vector<std::vector<ArrivalModel>> supply_arrivals) {
  return new_instance(m, n, T, std::move(rewards), std::vector<double>{alpha},
                      std::vector<double>{beta}, std::move(demand_arrivals),
                      std::move(supply_arrivals));
}

// Folds per-period waiting/holding costs into the rewards:
//   r'[t][i][j] = r[t][i][j] + C[t][i] + H[t][j]
// where C[t][i] accumulates the demand cost stream c[tau][i] for tau >= t,
// discounted by the running product of the demand carry-over rates (and
// likewise H with the supply rates). The cost matrices are retained on the
// result for reporting.
inline MatchingInstance fold_waiting_costs(const MatchingInstance& inst, const WaitingCosts& costs) {
  const int m = inst.m, n = inst.n, T = inst.T;
  auto check = [&](const Matrix& mat, int cols, const char* name) {
    if (static_cast<int>(mat.size()) != T)
      throw DimensionMismatch(std::string(name) + ": expected T rows");
    for (const auto& row : mat) {
      if (static_cast<int>(row.size()) != cols)
        throw DimensionMismatch(std::string(name) + ": wrong width");
      for (double v : row)
        if (!std::isfinite(v)) throw RangeError(std::string(name) + ": costs must be finite");
    }
  };
  check(costs.c, m, "waiting_costs.c");
  check(costs.h, n, "waiting_costs.h");

  // Backward recurrences: C[t] = c[t] + alpha[t] * C[t+1], C[T] = 0.
  Matrix C(T, std::vector<double>(m, 0.0)), H(T, std::vector<double>(n, 0.0));
  for (int t = T - 1; t >= 0; --t) {
    for (int i = 0; i < m; ++i)
      C[t][i] = costs.c[t][i] + (t + 1 < T ? inst.alpha[t] * C[t + 1][i] : 0.0);
    for (int j = 0; j < n; ++j)
      H[t][j] = costs.h[t][j] + (t + 1 < T ? inst.beta[t] * H[t + 1][j] : 0.0);
  }

  MatchingInstance out = inst;
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        out.rewards[t][i][j] = inst.rewards[t][i][j] + C[t][i] + H[t][j];
  out.waiting_costs = costs;
  out.costs_folded = true;
  return out;
}

// Subtracts matched quantities from the state; rejects over-matching.
inline PostMatchState apply_decision(const SystemState& state, const MatchingDecision& dec) {
  const int m = static_cast<int>(state.x.size());
  const int n = static_cast<int>(state.y.size());
  if (static_cast<int>(dec.q.size()) != m)
    throw DimensionMismatch("decision row count != demand types");
  PostMatchState post{state.x, state.y};
  for (int i = 0; i < m; ++i) {
    if (static_cast<int>(dec.q[i].size()) != n)
      throw DimensionMismatch("decision column count != supply types");
    for (int j = 0; j < n; ++j) {
      const int qij = dec.q[i][j];
      if (qij < 0) throw Infeasible("negative matching quantity");
      post.u[i] -= qij;
      post.v[j] -= qij;
    }
  }
  for (int i = 0; i < m; ++i)
    if (post.u[i] < 0) throw Infeasible("demand type " + std::to_string(i) + " over-matched");
  for (int j = 0; j < n; ++j)
    if (post.v[j] < 0) throw Infeasible("supply type " + std::to_string(j) + " over-matched");
  return post;
}

// Carries leftovers at integer rates and adds realized arrivals. Fractional
// rates are only meaningful under the simulator's stochastic rounding and are
// rejected here.
inline SystemState transition(const PostMatchState& post, const Vec& d, const Vec& s,
                              double alpha_t, double beta_t) {
  auto integer_rate = [](double a) { return a == 0.0 || a == 1.0; };
  if (!integer_rate(alpha_t) || !integer_rate(beta_t))
    throw NonIntegerCarryOver("exact transition requires carry-over rates in {0,1}");
  if (d.size() != post.u.size() || s.size() != post.v.size())
    throw DimensionMismatch("arrival vector length mismatch");
  SystemState next;
  next.x.resize(post.u.size());
  next.y.resize(post.v.size());
  const int a = static_cast<int>(alpha_t), b = static_cast<int>(beta_t);
  for (std::size_t i = 0; i < post.u.size(); ++i) next.x[i] = a * post.u[i] + d[i];
  for (std::size_t j = 0; j < post.v.size(); ++j) next.y[j] = b * post.v[j] + s[j];
  return next;
}

// Sum of r[i][j] * q[i][j].
inline double reward_of(const Matrix& rewards_t, const MatchingDecision& dec) {
  if (rewards_t.size() != dec.q.size())
    throw DimensionMismatch("reward/decision row mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < dec.q.size(); ++i) {
    if (rewards_t[i].size() != dec.q[i].size())
      throw DimensionMismatch("reward/decision column mismatch");
    for (std::size_t j = 0; j < dec.q[i].size(); ++j)
      total += rewards_t[i][j] * dec.q[i][j];
  }
  return total;
}

// One realization of a side's joint arrivals with its probability.
struct JointArrival {
  Vec qty;
  double prob;
};

// Enumerates the product pmf across the given per-type models, last type
// varying fastest. Order is deterministic and part of the expectation
// routines' reproducibility.
inline std::vector<JointArrival> enumerate_joint(const std::vector<ArrivalModel>& models) {
  std::vector<JointArrival> out;
  const std::size_t k = models.size();
  Vec idx(k, 0);
  while (true) {
    JointArrival ja;
    ja.qty.resize(k);
    ja.prob = 1.0;
    for (std::size_t a = 0; a < k; ++a) {
      ja.qty[a] = models[a].support[idx[a]];
      ja.prob *= models[a].probs[idx[a]];
    }
    out.push_back(std::move(ja));
    std::size_t pos = k;
    while (pos > 0) {
      --pos;
      if (++idx[pos] < static_cast<int>(models[pos].support.size())) break;
      idx[pos] = 0;
      if (pos == 0) return out;
    }
    if (k == 0) return out;
  }
}

} // namespace dynmatch
