// Core data-model tests: validation, waiting-cost folding, decisions,
// transitions, serialization, and the enumeration oracles' own fixed points.

#include <catch2/catch_amalgamated.hpp>

#include "brute.hpp"
#include "dynmatch/core.hpp"
#include "dynmatch/serialize.hpp"

using namespace dynmatch;

namespace {

ArrivalModel fixed(int v) { return ArrivalModel{{v}, {1.0}}; }

ArrivalModel uniform01() { return ArrivalModel{{0, 1}, {0.5, 0.5}}; }

// A small valid instance used as a base for many checks.
MatchingInstance tiny_instance(int T = 2, double alpha = 1.0, double beta = 1.0) {
  std::vector<Matrix> r(T, Matrix{{5.0, 1.0}, {2.0, 4.0}});
  std::vector<std::vector<ArrivalModel>> da(T, {uniform01(), uniform01()});
  std::vector<std::vector<ArrivalModel>> sa(T, {uniform01(), uniform01()});
  return new_instance(2, 2, T, r, alpha, beta, da, sa);
}

} // namespace

TEST_CASE("new_instance validates and normalizes", "[core]") {
  SECTION("minimal one-by-one case") {
    auto inst = new_instance(1, 1, 1, {Matrix{{5.0}}}, 0.0, 0.0, {{fixed(1)}}, {{fixed(1)}});
    REQUIRE(inst.m == 1);
    REQUIRE(inst.alpha == std::vector<double>{0.0});
    REQUIRE(inst.r(0, 0, 0) == 5.0);
    REQUIRE(inst.r(1, 0, 0) == 0.0); // past-horizon convention
  }
  SECTION("probability mass must reach one") {
    ArrivalModel bad{{0, 1}, {0.5, 0.4}};
    REQUIRE_THROWS_AS(
        new_instance(1, 1, 1, {Matrix{{1.0}}}, 0.0, 0.0, {{bad}}, {{fixed(0)}}),
        BadDistribution);
  }
  SECTION("scalar carry-over broadcasts") {
    auto inst = tiny_instance(3, 1.0, 0.0);
    REQUIRE(inst.alpha == std::vector<double>(3, 1.0));
    REQUIRE(inst.beta == std::vector<double>(3, 0.0));
  }
  SECTION("dimension and range failures") {
    REQUIRE_THROWS_AS(
        new_instance(2, 1, 1, {Matrix{{1.0}}}, 0.0, 0.0, {{fixed(0), fixed(0)}}, {{fixed(0)}}),
        DimensionMismatch);
    REQUIRE_THROWS_AS(
        new_instance(1, 1, 1, {Matrix{{1.0}}}, 1.5, 0.0, {{fixed(0)}}, {{fixed(0)}}),
        RangeError);
    ArrivalModel dup{{1, 1}, {0.5, 0.5}};
    REQUIRE_THROWS_AS(
        new_instance(1, 1, 1, {Matrix{{1.0}}}, 0.0, 0.0, {{dup}}, {{fixed(0)}}),
        BadDistribution);
  }
}

TEST_CASE("fold_waiting_costs accumulates discounted cost streams", "[core]") {
  SECTION("final period adds only its own costs") {
    auto inst = tiny_instance(2, 1.0, 1.0);
    WaitingCosts wc{{{1.0, 2.0}, {3.0, 4.0}}, {{0.5, 0.25}, {0.125, 0.0625}}};
    auto folded = fold_waiting_costs(inst, wc);
    REQUIRE(folded.rewards[1][0][1] ==
            Catch::Approx(inst.rewards[1][0][1] + 3.0 + 0.0625).margin(1e-12));
    REQUIRE(folded.costs_folded);
    REQUIRE(folded.waiting_costs.has_value());
  }
  SECTION("zero carry-over truncates the stream") {
    auto inst = tiny_instance(3, 0.0, 0.0);
    WaitingCosts wc{Matrix(3, {1.0, 2.0}), Matrix(3, {0.5, 0.25})};
    auto folded = fold_waiting_costs(inst, wc);
    for (int t = 0; t < 3; ++t)
      REQUIRE(folded.rewards[t][1][0] ==
              Catch::Approx(inst.rewards[t][1][0] + 2.0 + 0.5).margin(1e-12));
  }
  SECTION("full carry-over sums the remaining horizon") {
    auto inst = tiny_instance(3, 1.0, 1.0);
    WaitingCosts wc{Matrix(3, {1.0, 1.0}), Matrix(3, {0.0, 0.0})};
    auto folded = fold_waiting_costs(inst, wc);
    REQUIRE(folded.rewards[0][0][0] == Catch::Approx(inst.rewards[0][0][0] + 3.0).margin(1e-12));
    REQUIRE(folded.rewards[1][0][0] == Catch::Approx(inst.rewards[1][0][0] + 2.0).margin(1e-12));
  }
  SECTION("zero costs are the identity") {
    auto inst = tiny_instance();
    WaitingCosts wc{Matrix(2, {0.0, 0.0}), Matrix(2, {0.0, 0.0})};
    auto folded = fold_waiting_costs(inst, wc);
    REQUIRE(folded.rewards == inst.rewards);
  }
}

TEST_CASE("apply_decision computes leftovers and rejects over-matching", "[core]") {
  SystemState st{{2, 1}, {1, 2}};
  SECTION("full consumption") {
    MatchingDecision d{{{1, 1}, {0, 1}}};
    auto post = apply_decision(st, d);
    REQUIRE(post.u == Vec{0, 0});
    REQUIRE(post.v == Vec{0, 0});
  }
  SECTION("zero decision is the identity") {
    auto post = apply_decision(st, MatchingDecision::zeros(2, 2));
    REQUIRE(post.u == st.x);
    REQUIRE(post.v == st.y);
  }
  SECTION("over-matching fails") {
    SystemState one{{1}, {1}};
    REQUIRE_THROWS_AS(apply_decision(one, MatchingDecision{{{2}}}), Infeasible);
  }
  SECTION("conservation of units") {
    MatchingDecision d{{{1, 0}, {0, 1}}};
    auto post = apply_decision(st, d);
    int total_q = d.total();
    REQUIRE(post.u[0] + post.u[1] + total_q == st.x[0] + st.x[1]);
    REQUIRE(post.v[0] + post.v[1] + total_q == st.y[0] + st.y[1]);
  }
}

TEST_CASE("transition carries leftovers at integer rates", "[core]") {
  REQUIRE(transition({{3}, {0}}, {2}, {0}, 0.0, 1.0).x == Vec{2});
  REQUIRE(transition({{3}, {0}}, {2}, {0}, 1.0, 1.0).x == Vec{5});
  REQUIRE(transition({{0, 0}, {1, 0}}, {0, 0}, {0, 4}, 1.0, 1.0).y == Vec{1, 4});
  REQUIRE_THROWS_AS(transition({{1}, {1}}, {0}, {0}, 0.5, 1.0), NonIntegerCarryOver);
}

TEST_CASE("reward_of is the elementwise product sum", "[core]") {
  REQUIRE(reward_of(Matrix{{5.0}}, MatchingDecision{{{2}}}) == 10.0);
  REQUIRE(reward_of(Matrix{{5.0}}, MatchingDecision{{{0}}}) == 0.0);
  REQUIRE(reward_of(Matrix{{1.0, 2.0}, {3.0, 4.0}}, MatchingDecision{{{1, 0}, {0, 1}}}) == 5.0);
  REQUIRE_THROWS_AS(reward_of(Matrix{{1.0}}, MatchingDecision{{{1, 0}}}), DimensionMismatch);
}

TEST_CASE("enumerate_joint walks the product pmf", "[core]") {
  std::vector<ArrivalModel> models{uniform01(), ArrivalModel{{0, 1, 2}, {0.2, 0.3, 0.5}}};
  auto joint = enumerate_joint(models);
  REQUIRE(joint.size() == 6);
  double mass = 0.0;
  for (const auto& ja : joint) mass += ja.prob;
  REQUIRE(mass == Catch::Approx(1.0).margin(1e-12));
  // last type varies fastest
  REQUIRE(joint[0].qty == Vec{0, 0});
  REQUIRE(joint[1].qty == Vec{0, 1});
  REQUIRE(joint[3].qty == Vec{1, 0});
}

TEST_CASE("instance serialization round-trips and rejects unknown keys", "[core]") {
  auto inst = tiny_instance(2, 1.0, 0.0);
  json j = instance_to_json(inst);
  auto back = instance_from_json(j);
  REQUIRE(back.rewards == inst.rewards);
  REQUIRE(back.alpha == inst.alpha);
  REQUIRE(back.demand_arrivals[1][0] == inst.demand_arrivals[1][0]);

  SECTION("iid shorthand expands to every period") {
    json doc = {
        {"m", 1}, {"n", 1}, {"T", 3},
        {"rewards", json::array({json::array({json::array({1.0})}),
                                 json::array({json::array({2.0})}),
                                 json::array({json::array({3.0})})})},
        {"alpha", 1}, {"beta", 1},
        {"demand_arrivals", json::array({json{{"iid", {{"support", {0, 1}}, {"probs", {0.5, 0.5}}}}}})},
        {"supply_arrivals", json::array({json{{"iid", {{"support", {1}}, {"probs", {1.0}}}}}})},
    };
    auto parsed = instance_from_json(doc);
    for (int t = 0; t < 3; ++t) REQUIRE(parsed.supply_arrivals[t][0].support == Vec{1});
  }
  SECTION("unknown top-level key") {
    json doc = instance_to_json(inst);
    doc["horizon"] = 2;
    REQUIRE_THROWS_AS(instance_from_json(doc), ConfigError);
  }
  SECTION("unknown nested key") {
    json doc = instance_to_json(inst);
    doc["demand_arrivals"][0][0]["mean"] = 0.5;
    REQUIRE_THROWS_AS(instance_from_json(doc), ConfigError);
  }
  SECTION("waiting costs fold on load") {
    json doc = {
        {"m", 1}, {"n", 1}, {"T", 1},
        {"rewards", json::array({json::array({json::array({1.0})})})},
        {"alpha", 0}, {"beta", 0},
        {"demand_arrivals", json::array({json{{"iid", {{"support", {1}}, {"probs", {1.0}}}}}})},
        {"supply_arrivals", json::array({json{{"iid", {{"support", {1}}, {"probs", {1.0}}}}}})},
        {"waiting_costs", {{"c", json::array({json::array({2.0})})},
                           {"h", json::array({json::array({3.0})})}}},
    };
    auto parsed = instance_from_json(doc);
    REQUIRE(parsed.costs_folded);
    REQUIRE(parsed.rewards[0][0][0] == Catch::Approx(6.0).margin(1e-12));
  }
}

// The oracles' behavior is pinned here before any solver is compared
// against them.
TEST_CASE("enumeration oracles fixed points", "[core][oracle]") {
  SECTION("feasible decision counts") {
    REQUIRE(brute::all_decisions({0}, {0}).size() == 1);
    REQUIRE(brute::all_decisions({1}, {1}).size() == 2);
    // 2x2 with one unit everywhere: q11,q12,q21,q22 in {0,1} with row/col caps
    REQUIRE(brute::all_decisions({1, 1}, {1, 1}).size() == 7);
  }
  SECTION("transport value by enumeration") {
    Matrix r{{4.0, 1.0}, {2.0, 3.0}};
    REQUIRE(brute::transport_value(r, {1, 1}, {1, 1}) == Catch::Approx(7.0).margin(1e-12));
    REQUIRE(brute::transport_value(Matrix{{-1.0}}, {2}, {2}) == 0.0);
  }
  SECTION("single-period recursion reduces to transport") {
    auto inst = new_instance(2, 2, 1, {Matrix{{4.0, 1.0}, {2.0, 3.0}}}, 0.0, 0.0,
                             {{fixed(1), fixed(1)}}, {{fixed(1), fixed(1)}});
    brute::DpOracle oracle(inst);
    REQUIRE(oracle.value(0, {1, 1}, {1, 1}) == Catch::Approx(7.0).margin(1e-12));
    REQUIRE(oracle.objective() == Catch::Approx(7.0).margin(1e-12));
  }
  SECTION("zero rewards give zero value") {
    auto inst = new_instance(1, 1, 2, {Matrix{{0.0}}, Matrix{{0.0}}}, 1.0, 1.0,
                             {{uniform01()}, {uniform01()}}, {{uniform01()}, {uniform01()}});
    brute::DpOracle oracle(inst);
    REQUIRE(oracle.objective() == 0.0);
  }
  SECTION("two-period deterministic hold-back example") {
    // One unit of demand and supply in period 1; matching now earns 1,
    // holding the pair for period 2 earns 5. Patient types: wait.
    auto inst = new_instance(1, 1, 2, {Matrix{{1.0}}, Matrix{{5.0}}}, 1.0, 1.0,
                             {{fixed(1)}, {fixed(0)}}, {{fixed(1)}, {fixed(0)}});
    brute::DpOracle oracle(inst);
    REQUIRE(oracle.objective() == Catch::Approx(5.0).margin(1e-12));
    // Impatient demand loses the unit instead.
    auto lost = new_instance(1, 1, 2, {Matrix{{1.0}}, Matrix{{5.0}}}, 0.0, 1.0,
                             {{fixed(1)}, {fixed(0)}}, {{fixed(1)}, {fixed(0)}});
    brute::DpOracle lost_oracle(lost);
    REQUIRE(lost_oracle.objective() == Catch::Approx(1.0).margin(1e-12));
  }
}
