// serialize.hpp -- JSON-shaped reading and writing of problem instances.
// Documents are strict: unknown keys are rejected so that typos in configs
// fail loudly instead of silently changing the experiment.

#pragma once

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "dynmatch/core.hpp"

namespace dynmatch {

using nlohmann::json;

struct ConfigError : std::runtime_error { using std::runtime_error::runtime_error; };

namespace detail {

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) { known = true; break; }
    if (!known) throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
  }
}

inline const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(where + ": missing key \"" + key + "\"");
  return *it;
}

inline std::vector<double> rate_from_json(const json& j, const std::string& where) {
  try {
    if (j.is_number()) return {j.get<double>()};
    if (j.is_array()) return j.get<std::vector<double>>();
  } catch (const json::exception&) {
  }
  throw ConfigError(where + ": expected a number or an array of numbers");
}

} // namespace detail

inline ArrivalModel pmf_from_json(const json& j, const std::string& where) {
  detail::check_keys(j, {"support", "probs"}, where);
  ArrivalModel a;
  try {
    a.support = detail::require(j, "support", where).get<Vec>();
    a.probs = detail::require(j, "probs", where).get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return a;
}

inline json pmf_to_json(const ArrivalModel& a) {
  return json{{"support", a.support}, {"probs", a.probs}};
}

namespace detail {

// One entry per type; each entry is either {"iid": pmf} applying one pmf to
// every period, or an array of T per-period pmfs.
inline std::vector<std::vector<ArrivalModel>>
arrivals_from_json(const json& j, int count, int T, const std::string& where) {
  if (!j.is_array() || static_cast<int>(j.size()) != count)
    throw ConfigError(where + ": expected one entry per type");
  // Parsed per type, stored per period.
  std::vector<std::vector<ArrivalModel>> by_period(T, std::vector<ArrivalModel>(count));
  for (int k = 0; k < count; ++k) {
    const json& entry = j[k];
    const std::string here = where + "[" + std::to_string(k) + "]";
    if (entry.is_object()) {
      check_keys(entry, {"iid"}, here);
      ArrivalModel a = pmf_from_json(require(entry, "iid", here), here + ".iid");
      for (int t = 0; t < T; ++t) by_period[t][k] = a;
    } else if (entry.is_array()) {
      if (static_cast<int>(entry.size()) != T)
        throw ConfigError(here + ": expected T per-period distributions");
      for (int t = 0; t < T; ++t)
        by_period[t][k] = pmf_from_json(entry[t], here + "[" + std::to_string(t) + "]");
    } else {
      throw ConfigError(here + ": expected an object with \"iid\" or an array");
    }
  }
  return by_period;
}

} // namespace detail

inline MatchingInstance instance_from_json(const json& j) {
  const std::string where = "instance";
  detail::check_keys(j,
                     {"m", "n", "T", "rewards", "alpha", "beta", "demand_arrivals",
                      "supply_arrivals", "waiting_costs"},
                     where);
  int m, n, T;
  std::vector<Matrix> rewards;
  try {
    m = detail::require(j, "m", where).get<int>();
    n = detail::require(j, "n", where).get<int>();
    T = detail::require(j, "T", where).get<int>();
    rewards = detail::require(j, "rewards", where).get<std::vector<Matrix>>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  auto alpha = detail::rate_from_json(detail::require(j, "alpha", where), where + ".alpha");
  auto beta = detail::rate_from_json(detail::require(j, "beta", where), where + ".beta");
  auto da = detail::arrivals_from_json(detail::require(j, "demand_arrivals", where), m, T,
                                       where + ".demand_arrivals");
  auto sa = detail::arrivals_from_json(detail::require(j, "supply_arrivals", where), n, T,
                                       where + ".supply_arrivals");
  MatchingInstance inst;
  try {
    inst = new_instance(m, n, T, std::move(rewards), std::move(alpha), std::move(beta),
                        std::move(da), std::move(sa));
  } catch (const std::runtime_error& e) {
    throw ConfigError(where + ": " + e.what());
  }
  if (j.contains("waiting_costs")) {
    const json& wc = j["waiting_costs"];
    detail::check_keys(wc, {"c", "h"}, where + ".waiting_costs");
    WaitingCosts costs;
    try {
      costs.c = detail::require(wc, "c", where + ".waiting_costs").get<Matrix>();
      costs.h = detail::require(wc, "h", where + ".waiting_costs").get<Matrix>();
    } catch (const json::exception& e) {
      throw ConfigError(where + ".waiting_costs: " + e.what());
    }
    try {
      inst = fold_waiting_costs(inst, costs);
    } catch (const std::runtime_error& e) {
      throw ConfigError(where + ".waiting_costs: " + e.what());
    }
  }
  return inst;
}

// Writes the explicit per-period arrival form (round-trip safe). If the
// instance carries folded costs, the original unfolded rewards are not
// recoverable, so the folded rewards are written and waiting_costs omitted.
inline json instance_to_json(const MatchingInstance& inst) {
  json j;
  j["m"] = inst.m;
  j["n"] = inst.n;
  j["T"] = inst.T;
  j["rewards"] = inst.rewards;
  j["alpha"] = inst.alpha;
  j["beta"] = inst.beta;
  auto side = [&](const std::vector<std::vector<ArrivalModel>>& by_period, int count) {
    json arr = json::array();
    for (int k = 0; k < count; ++k) {
      json per_period = json::array();
      for (int t = 0; t < inst.T; ++t) per_period.push_back(pmf_to_json(by_period[t][k]));
      arr.push_back(std::move(per_period));
    }
    return arr;
  };
  j["demand_arrivals"] = side(inst.demand_arrivals, inst.m);
  j["supply_arrivals"] = side(inst.supply_arrivals, inst.n);
  return j;
}

} // namespace dynmatch
