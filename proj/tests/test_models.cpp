// Instance builders: reward assembly, structural checks, and consistency with
// the dominance analysis.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dynmatch/models.hpp"
#include "dynmatch/monge.hpp"
#include "helpers.hpp"

using namespace dynmatch;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

std::vector<std::vector<ArrivalModel>> iid(int T, int k) {
  return std::vector<std::vector<ArrivalModel>>(T,
                                                std::vector<ArrivalModel>(k, testutil::uniform01()));
}

std::vector<PairId> diag(int k) {
  std::vector<PairId> out;
  for (int i = 0; i < k; ++i) out.push_back({i, i});
  return out;
}

}  // namespace

TEST_CASE("premier regular two class system passes the checks", "[models]") {
  PremierRegular pr;
  pr.premier_fare = 10.0;
  pr.regular_fare = 6.0;
  pr.premier_wage = 4.0;
  pr.regular_wage = 3.0;
  pr.penalty = 1.0;
  Matrix r = premier_regular_rewards(pr);
  REQUIRE(r == Matrix{{6.0, 2.0}, {2.0, 3.0}});

  auto inst = horizontal_2x2({r, r, r}, {1.0}, {1.0}, iid(3, 2), iid(3, 2));
  REQUIRE(inst.m == 2);
  REQUIRE(inst.T == 3);
  REQUIRE(inst.r(1, 0, 0) == 6.0);

  auto g = build_dominance_graph(inst);
  REQUIRE(g.strong_valid);
  REQUIRE(is_perfect_pair(inst, g, 0, 0));
  REQUIRE(is_perfect_pair(inst, g, 1, 1));
}

TEST_CASE("two class checks reject bad diagonals and growing edges", "[models]") {
  auto arr = iid(1, 2);
  REQUIRE_THROWS_WITH(horizontal_2x2({{{2.0, 6.0}, {2.0, 3.0}}}, {1.0}, {1.0}, arr, arr),
                      ContainsSubstring("row neighbor"));
  REQUIRE_THROWS_WITH(horizontal_2x2({{{6.0, 2.0}, {7.0, 3.0}}}, {1.0}, {1.0}, arr, arr),
                      ContainsSubstring("column neighbor"));
  REQUIRE_THROWS_AS(horizontal_2x2({{{2.0, 6.0}, {2.0, 3.0}}}, {1.0}, {1.0}, arr, arr),
                    AssumptionViolated);
  REQUIRE_NOTHROW(
      horizontal_2x2({{{2.0, 6.0}, {2.0, 3.0}}}, {1.0}, {1.0}, arr, arr, /*check=*/false));

  // Diagonals fine each period, but the diagonal's edge widens next period.
  auto arr2 = iid(2, 2);
  REQUIRE_THROWS_WITH(horizontal_2x2({{{5.0, 4.0}, {4.0, 5.0}}, {{6.0, 2.0}, {2.0, 3.0}}},
                                     {1.0}, {1.0}, arr2, arr2),
                      ContainsSubstring("shrinks between periods"));

  // Symmetric rewards with a diagonal gap satisfy both displays.
  REQUIRE_NOTHROW(horizontal_2x2({{{5.0, 2.0}, {2.0, 5.0}}, {{5.0, 2.0}, {2.0, 5.0}}},
                                 {1.0}, {1.0}, arr2, arr2));

  REQUIRE_THROWS_AS(horizontal_2x2({{{1.0, 2.0, 3.0}}}, {1.0}, {1.0}, arr, arr),
                    DimensionMismatch);
}

TEST_CASE("directed line pays prize minus forward distance", "[models]") {
  LineLayout lay;
  lay.demand_pos = {1.0};
  lay.supply_pos = {0.0, 2.0};
  lay.prizes = {{10.0}, {8.0}};
  auto reach = reachable_pairs(lay);
  REQUIRE(reach[0][0]);
  REQUIRE_FALSE(reach[0][1]);

  auto inst = directed_line(lay, {1.0}, {1.0}, iid(2, 1), iid(2, 2));
  REQUIRE(inst.r(0, 0, 0) == 9.0);
  REQUIRE(inst.r(0, 0, 1) == 0.0);  // supply sits downstream, unreachable
  REQUIRE(inst.r(1, 0, 0) == 7.0);

  // Per-demand prize columns.
  LineLayout lay2;
  lay2.demand_pos = {0.0, 1.0};
  lay2.supply_pos = {0.0};
  lay2.prizes = {{10.0, 7.0}};
  auto inst2 = directed_line(lay2, {1.0}, {1.0}, iid(1, 2), iid(1, 1));
  REQUIRE(inst2.r(0, 1, 0) == 6.0);
  REQUIRE(inst2.r(0, 0, 0) == 10.0);

  LineLayout bad = lay;
  bad.supply_pos = {-1.0, 2.0};
  REQUIRE_THROWS_AS(directed_line(bad, {1.0}, {1.0}, iid(2, 1), iid(2, 2)), RangeError);
}

TEST_CASE("co-located line pair is perfect under decreasing prizes", "[models]") {
  LineLayout lay;
  lay.demand_pos = {0.0, 1.0};
  lay.supply_pos = {0.0, 1.0};
  lay.prizes = {{10.0}, {9.0}};
  auto inst = directed_line(lay, {1.0}, {1.0}, iid(2, 2), iid(2, 2));
  auto g = build_dominance_graph(inst);
  REQUIRE(g.strong_valid);
  REQUIRE(is_perfect_pair(inst, g, 0, 0));
  REQUIRE(is_perfect_pair(inst, g, 1, 1));
}

TEST_CASE("line tiers are ordered by directed distance", "[models]") {
  LineLayout lay;
  lay.demand_pos = {0.0, 1.0, 2.0};
  lay.supply_pos = {0.0, 1.0, 2.0};
  lay.prizes = {{10.0}, {10.0}};
  auto inst = directed_line(lay, {1.0}, {1.0}, iid(2, 3), iid(2, 3));
  auto g = build_dominance_graph(inst);
  REQUIRE(g.strong_valid);
  auto tiers = priority_tiers(g).tiers;
  REQUIRE(tiers.size() == 3);
  REQUIRE(tiers[0] == diag(3));
  REQUIRE(tiers[2] == std::vector<PairId>{{2, 0}});
}

TEST_CASE("upgrading matches its line representation", "[models]") {
  UpgradeParams up;
  up.fares = {{9.0, 7.0, 6.0}, {8.0, 6.0, 5.0}};
  up.costs = {5.0, 3.0, 2.0};

  auto inst = upgrading_instance(up, {1.0}, {1.0}, iid(2, 3), iid(2, 3));
  REQUIRE(inst.r(0, 1, 0) == 2.0);  // fare 7 minus class-0 cost 5
  REQUIRE(inst.r(0, 0, 1) == 0.0);  // cheaper class cannot serve a higher one
  REQUIRE(inst.r(1, 2, 2) == 3.0);

  LineLayout lay;
  lay.demand_pos = {0.0, 2.0, 3.0};
  lay.supply_pos = {0.0, 2.0, 3.0};
  lay.prizes = {{4.0, 4.0, 4.0}, {3.0, 3.0, 3.0}};
  auto line = directed_line(lay, {1.0}, {1.0}, iid(2, 3), iid(2, 3));
  REQUIRE(inst.rewards == line.rewards);

  up.one_level = true;
  auto one = upgrading_instance(up, {1.0}, {1.0}, iid(2, 3), iid(2, 3));
  REQUIRE(one.r(0, 2, 0) == 0.0);  // two-level upgrade disabled
  REQUIRE(one.r(0, 2, 1) == 3.0);
  REQUIRE(one.r(0, 1, 0) == 2.0);
  REQUIRE(one.r(0, 0, 0) == 4.0);
  REQUIRE(one.r(0, 1, 2) == 0.0);

  UpgradeParams bad = up;
  bad.costs = {3.0, 5.0, 2.0};
  REQUIRE_THROWS_AS(upgrading_instance(bad, {1.0}, {1.0}, iid(2, 3), iid(2, 3)), BadClassOrder);
  bad.costs = {3.0, 3.0, 2.0};
  REQUIRE_THROWS_AS(upgrading_instance(bad, {1.0}, {1.0}, iid(2, 3), iid(2, 3)), BadClassOrder);
}

TEST_CASE("equal upgrade margins put every intended pair in the top tier", "[models]") {
  UpgradeParams up;
  up.fares = {{9.0, 7.0, 6.0}, {9.0, 7.0, 6.0}};
  up.costs = {5.0, 3.0, 2.0};
  auto inst = upgrading_instance(up, {1.0}, {1.0}, iid(2, 3), iid(2, 3));
  auto g = build_dominance_graph(inst);
  REQUIRE(g.strong_valid);
  REQUIRE(priority_tiers(g).tiers[0] == diag(3));
}

TEST_CASE("euclidean rewards reproduce pairwise distances", "[models]") {
  std::vector<Point> pts = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  auto inst = euclidean_instance(pts, pts, {10.0, 9.0}, {2.0, 1.0}, {1.0}, {1.0},
                                 iid(2, 3), iid(2, 3));
  REQUIRE(inst.r(0, 0, 1) == Approx(8.0).margin(1e-12));
  REQUIRE(inst.r(0, 1, 2) == Approx(10.0 - 2.0 * std::sqrt(2.0)).margin(1e-12));
  REQUIRE(inst.r(1, 0, 2) == Approx(8.0).margin(1e-12));

  auto g = build_dominance_graph(inst);
  REQUIRE(g.strong_valid);
  for (int k = 0; k < 3; ++k) REQUIRE(is_perfect_pair(inst, g, k, k));

  auto flat = euclidean_instance(pts, pts, {10.0, 9.0}, {0.0, 0.0}, {1.0}, {1.0},
                                 iid(2, 3), iid(2, 3));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      REQUIRE(flat.r(0, i, j) == 10.0);
      REQUIRE(flat.r(1, i, j) == 9.0);
    }

  // Hand-checked distances: unit square corners and a 3-4-5 triangle.
  std::vector<Point> d = {{0.0, 0.0}, {1.0, 1.0}};
  std::vector<Point> s = {{1.0, 0.0}, {0.0, 1.0}};
  auto sq = euclidean_instance(d, s, {5.0}, {1.0}, {1.0}, {1.0}, iid(1, 2), iid(1, 2));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) REQUIRE(sq.r(0, i, j) == Approx(4.0).margin(1e-12));
  auto tri = euclidean_instance({{0.0, 0.0}}, {{3.0, 4.0}}, {10.0}, {1.0}, {1.0}, {1.0},
                                iid(1, 1), iid(1, 1));
  REQUIRE(tri.r(0, 0, 0) == Approx(5.0).margin(1e-12));
}

TEST_CASE("euclidean parameters must be nonincreasing", "[models]") {
  std::vector<Point> pts = {{0.0, 0.0}, {1.0, 0.0}};
  auto arr = iid(2, 2);
  REQUIRE_THROWS_AS(
      euclidean_instance(pts, pts, {9.0, 10.0}, {1.0, 1.0}, {1.0}, {1.0}, arr, arr),
      MonotoneParamViolated);
  REQUIRE_THROWS_AS(
      euclidean_instance(pts, pts, {10.0, 9.0}, {1.0, 2.0}, {1.0}, {1.0}, arr, arr),
      MonotoneParamViolated);
  REQUIRE_NOTHROW(euclidean_instance(pts, pts, {9.0, 10.0}, {1.0, 2.0}, {1.0}, {1.0}, arr, arr,
                                     /*check=*/false));
  REQUIRE_THROWS_AS(
      euclidean_instance(pts, pts, {10.0, 9.0}, {1.0}, {1.0}, {1.0}, arr, arr),
      DimensionMismatch);
}

TEST_CASE("vertical additive tiers follow combined quality rank", "[models]") {
  Matrix rd = {{5.0, 3.0, 1.0}, {5.0, 3.0, 1.0}};
  Matrix rs = {{4.0, 2.0}, {4.0, 2.0}};
  auto inst = vertical_instance(rd, rs, {1.0}, {1.0}, iid(2, 3), iid(2, 2));
  REQUIRE(inst.r(0, 1, 0) == 7.0);
  REQUIRE(inst.r(1, 2, 1) == 3.0);

  auto g = build_dominance_graph(inst);
  REQUIRE(g.strong_valid);
  auto tiers = priority_tiers(g).tiers;
  REQUIRE(tiers.size() == 4);
  for (std::size_t k = 0; k < tiers.size(); ++k)
    for (const PairId& p : tiers[k]) REQUIRE(p.i + p.j == static_cast<int>(k));
}

TEST_CASE("vertical checks name the failing side and entry", "[models]") {
  auto arr3 = iid(2, 2);
  auto arr1 = iid(2, 1);
  REQUIRE_THROWS_WITH(
      vertical_instance({{3.0, 3.0}, {3.0, 2.0}}, {{2.0}, {2.0}}, {1.0}, {1.0}, arr3, arr1),
      ContainsSubstring("quality order") && ContainsSubstring("demand"));
  // Interior gap shrinks slower than the carry-over rate keeps it.
  REQUIRE_THROWS_WITH(
      vertical_instance({{5.0, 3.0}, {5.0, 2.0}}, {{2.0}, {2.0}}, {1.0}, {1.0}, arr3, arr1),
      ContainsSubstring("demand side") && ContainsSubstring("entry 0"));
  // The gap down to the virtual zero-reward type counts too.
  REQUIRE_THROWS_WITH(
      vertical_instance({{5.0, 3.0}, {5.0, 4.0}}, {{2.0}, {2.0}}, {1.0}, {1.0}, arr3, arr1),
      ContainsSubstring("entry 1"));
  REQUIRE_THROWS_WITH(
      vertical_instance({{5.0}, {5.0}}, {{4.0, 2.0}, {4.0, 3.5}}, {1.0}, {1.0}, arr1, arr3),
      ContainsSubstring("supply side"));
  // Without carry-over the time condition is vacuous.
  REQUIRE_NOTHROW(
      vertical_instance({{5.0, 3.0}, {5.0, 4.0}}, {{2.0}, {2.0}}, {0.0}, {0.0}, arr3, arr1));
  REQUIRE_NOTHROW(vertical_instance({{5.0, 3.0}, {5.0, 4.0}}, {{2.0}, {2.0}}, {1.0}, {1.0},
                                    arr3, arr1, /*check=*/false));
}

TEST_CASE("nonadditive vertical with zero interaction reduces to additive", "[models]") {
  Matrix a = {{5.0, 3.0, 1.0}, {4.0, 2.5, 0.5}};
  Matrix b = {{4.0, 2.0}, {3.0, 1.5}};
  auto add = vertical_instance(a, b, {1.0}, {1.0}, iid(2, 3), iid(2, 2));
  auto non = vertical_nonadditive(a, b, 0.0, {1.0}, {1.0}, iid(2, 3), iid(2, 2));
  REQUIRE(add.rewards == non.rewards);
}

TEST_CASE("nonadditive vertical accepts small interaction and rejects large", "[models]") {
  Matrix a = {{5.0, 3.0}, {4.0, 2.4}};
  Matrix b = {{4.0, 2.0}, {3.2, 1.6}};
  auto inst = vertical_nonadditive(a, b, 0.05, {1.0}, {1.0}, iid(2, 2), iid(2, 2));
  auto g = build_dominance_graph(inst);
  REQUIRE(g.strong_valid);
  REQUIRE(g.strongly({0, 0}, {1, 0}));
  REQUIRE(g.strongly({0, 0}, {0, 1}));
  REQUIRE(g.strongly({1, 0}, {1, 1}));
  REQUIRE(g.strongly({0, 1}, {1, 1}));

  REQUIRE_THROWS_WITH(vertical_nonadditive(a, b, 10.0, {1.0}, {1.0}, iid(2, 2), iid(2, 2)),
                      ContainsSubstring("carried next-period gap"));
  REQUIRE_THROWS_WITH(vertical_nonadditive({{3.0, 5.0}}, {{2.0, 1.0}}, 0.0, {1.0}, {1.0},
                                           iid(1, 2), iid(1, 2)),
                      ContainsSubstring("decrease in the demand index"));
  // A negative interaction flips the quadrangle while both orderings survive.
  REQUIRE_THROWS_WITH(vertical_nonadditive({{5.0, 3.0}}, {{4.0, 2.0}}, -0.01, {1.0}, {1.0},
                                           iid(1, 2), iid(1, 2)),
                      ContainsSubstring("supermodularity"));
}
