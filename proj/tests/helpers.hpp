// helpers.hpp -- shared instance builders for the test suite.

#pragma once

#include "dynmatch/core.hpp"

namespace testutil {

inline dynmatch::ArrivalModel fixed(int v) { return dynmatch::ArrivalModel{{v}, {1.0}}; }

inline dynmatch::ArrivalModel uniform01() {
  return dynmatch::ArrivalModel{{0, 1}, {0.5, 0.5}};
}

// Instance with the same reward matrix in every period and one arrival model
// shared by all periods and types per side.
inline dynmatch::MatchingInstance flat_instance(int m, int n, int T, dynmatch::Matrix r,
                                                double alpha, double beta,
                                                dynmatch::ArrivalModel demand = uniform01(),
                                                dynmatch::ArrivalModel supply = uniform01()) {
  std::vector<dynmatch::Matrix> rewards(T, std::move(r));
  std::vector<std::vector<dynmatch::ArrivalModel>> da(
      T, std::vector<dynmatch::ArrivalModel>(m, demand));
  std::vector<std::vector<dynmatch::ArrivalModel>> sa(
      T, std::vector<dynmatch::ArrivalModel>(n, supply));
  return dynmatch::new_instance(m, n, T, std::move(rewards), alpha, beta, std::move(da),
                                std::move(sa));
}

} // namespace testutil
