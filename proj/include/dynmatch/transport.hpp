// transport.hpp -- single-period maximum-reward matching via successive
// shortest paths, plus the tier-walk greedy used by priority policies.

#pragma once

#include <limits>
#include <vector>

#include "core.hpp"
#include "monge.hpp"

namespace dynmatch {

struct TransportResult {
  MatchingDecision q;
  double value = 0.0;
};

namespace detail {

// Maximum total reward routable through the cells with row-major index
// >= first_free, given residual capacities. Min-cost flow with successive
// shortest paths on source -> demand -> supply -> sink; augmentation stops
// once the best path no longer carries positive reward, which is what makes
// the totals inequality-constrained.
inline double transport_value_from(const Matrix& r, const Vec& x, const Vec& y,
                                   int first_free) {
  const int m = static_cast<int>(x.size()), n = static_cast<int>(y.size());
  const int source = 0, sink = m + n + 1, nodes = m + n + 2;

  struct Arc {
    int to, rev, cap;
    double cost;
  };
  std::vector<std::vector<Arc>> adj(nodes);
  auto add_arc = [&](int from, int to, int cap, double cost) {
    adj[from].push_back({to, static_cast<int>(adj[to].size()), cap, cost});
    adj[to].push_back({from, static_cast<int>(adj[from].size()) - 1, 0, -cost});
  };

  for (int i = 0; i < m; ++i) add_arc(source, 1 + i, x[i], 0.0);
  for (int j = 0; j < n; ++j) add_arc(1 + m + j, sink, y[j], 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      if (i * n + j >= first_free) add_arc(1 + i, 1 + m + j, std::min(x[i], y[j]), -r[i][j]);

  const double inf = std::numeric_limits<double>::infinity();
  double total = 0.0;
  while (true) {
    // Bellman-Ford; the network is tiny and costs can be negative.
    std::vector<double> dist(nodes, inf);
    std::vector<int> prev_node(nodes, -1), prev_arc(nodes, -1);
    dist[source] = 0.0;
    for (int round = 0; round < nodes; ++round) {
      bool changed = false;
      for (int u = 0; u < nodes; ++u) {
        if (dist[u] == inf) continue;
        for (int a = 0; a < static_cast<int>(adj[u].size()); ++a) {
          const Arc& arc = adj[u][a];
          if (arc.cap > 0 && dist[u] + arc.cost < dist[arc.to]) {
            dist[arc.to] = dist[u] + arc.cost;
            prev_node[arc.to] = u;
            prev_arc[arc.to] = a;
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    if (!(dist[sink] < 0.0)) break;

    int bottleneck = std::numeric_limits<int>::max();
    for (int v = sink; v != source; v = prev_node[v])
      bottleneck = std::min(bottleneck, adj[prev_node[v]][prev_arc[v]].cap);
    for (int v = sink; v != source; v = prev_node[v]) {
      Arc& arc = adj[prev_node[v]][prev_arc[v]];
      arc.cap -= bottleneck;
      adj[arc.to][arc.rev].cap += bottleneck;
    }
    total += -dist[sink] * bottleneck;
  }
  return total;
}

inline void check_transport_dims(const Matrix& r, const SystemState& state) {
  const std::size_t m = state.x.size(), n = state.y.size();
  if (r.size() != m) throw DimensionMismatch("reward row count != demand types");
  for (const auto& row : r)
    if (row.size() != n) throw DimensionMismatch("reward column count != supply types");
  for (int v : state.x)
    if (v < 0) throw RangeError("negative demand quantity");
  for (int v : state.y)
    if (v < 0) throw RangeError("negative supply quantity");
}

} // namespace detail

// Optimal single-period matching. Among all optimal decisions, returns the
// lexicographically smallest q in row-major order: each cell is fixed to the
// smallest quantity that keeps the optimum achievable by the later cells.
inline TransportResult max_weight_transport(const Matrix& rewards_t,
                                            const SystemState& state) {
  detail::check_transport_dims(rewards_t, state);
  const int m = static_cast<int>(state.x.size()), n = static_cast<int>(state.y.size());

  const double best = detail::transport_value_from(rewards_t, state.x, state.y, 0);

  TransportResult res;
  res.q = MatchingDecision::zeros(m, n);
  Vec xr = state.x, yr = state.y;
  double fixed = 0.0;
  for (int cell = 0; cell < m * n; ++cell) {
    const int i = cell / n, j = cell % n;
    const int cap = std::min(xr[i], yr[j]);
    for (int v = 0; v <= cap; ++v) {
      Vec xv = xr, yv = yr;
      xv[i] -= v;
      yv[j] -= v;
      const double rest = detail::transport_value_from(rewards_t, xv, yv, cell + 1);
      if (fixed + v * rewards_t[i][j] + rest >= best - value_tol) {
        res.q.q[i][j] = v;
        xr = std::move(xv);
        yr = std::move(yv);
        fixed += v * rewards_t[i][j];
        break;
      }
    }
  }
  res.value = reward_of(rewards_t, res.q);
  return res;
}

// Walks the priority tiers in order, matching each pair to the minimum of its
// residual quantities. Pairs without positive reward stay unmatched, matching
// them could only burn quantities wanted by reachable pairs.
inline TransportResult tier_greedy_transport(const Matrix& rewards_t,
                                             const SystemState& state,
                                             const PriorityTiers& tiers) {
  detail::check_transport_dims(rewards_t, state);
  const int m = static_cast<int>(state.x.size()), n = static_cast<int>(state.y.size());

  TransportResult res;
  res.q = MatchingDecision::zeros(m, n);
  Vec xr = state.x, yr = state.y;
  for (const auto& tier : tiers.tiers)
    for (const PairId& p : tier) {
      if (p.i < 0 || p.i >= m || p.j < 0 || p.j >= n)
        throw RangeError("tier pair " + to_string(p) + " outside the type grid");
      if (rewards_t[p.i][p.j] <= value_tol) continue;
      const int amount = std::min(xr[p.i], yr[p.j]);
      res.q.q[p.i][p.j] += amount;
      xr[p.i] -= amount;
      yr[p.j] -= amount;
    }
  res.value = reward_of(rewards_t, res.q);
  return res;
}

} // namespace dynmatch
