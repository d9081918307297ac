#include <catch2/catch_amalgamated.hpp>

#include <optional>
#include <random>
#include <set>
#include <vector>

#include "sqf/constructions.hpp"
#include "sqf/numtheory.hpp"
#include "sqf/oracle.hpp"

using namespace sqf;

namespace {

bool sqf_at(const Int& v) { return oracle::in_Pm(1, Rat(v)); }

bool realizes(const PatternSpec& spec, const Int& a) {
  for (const Int& o : spec.offsets)
    if (!sqf_at(a + o * spec.step)) return false;
  for (const Int& o : spec.complementary)
    if (sqf_at(a + o * spec.step)) return false;
  return true;
}

}  // namespace

TEST_CASE("pattern searches return least starts and verify them", "[constructions]") {
  CHECK(find_pattern_run(consecutive_pattern({1, 2}), 1000) == 0);
  CHECK(find_pattern_run(consecutive_pattern({1, 4}), 1000) == 6);

  try {
    find_pattern_run(consecutive_pattern({0, 1, 2, 3}), 1000);
    FAIL("four consecutive square-free integers should be impossible");
  } catch (const locally_unsatisfiable_error& e) {
    CHECK(e.prime == 2);
  }

  CHECK_THROWS_AS(find_pattern_run(consecutive_pattern({1, 4}), 5), budget_error);

  PatternSpec bad;
  bad.offsets = {Int(3), Int(1)};
  CHECK_THROWS_AS(find_pattern_run(bad, 100), std::invalid_argument);
  PatternSpec clash;
  clash.offsets = {Int(1)};
  clash.complementary = {Int(1)};
  CHECK_THROWS_AS(find_pattern_run(clash, 100), std::invalid_argument);
  PatternSpec badstep;
  badstep.offsets = {Int(0)};
  badstep.step = 0;
  CHECK_THROWS_AS(find_pattern_run(badstep, 100), std::invalid_argument);
}

TEST_CASE("pattern searches agree with a direct scan", "[constructions]") {
  std::mt19937_64 rng(60231);
  for (int it = 0; it < 30; ++it) {
    std::set<Int> offs;
    long span = 1 + static_cast<long>(rng() % 6);
    offs.insert(Int(0));
    offs.insert(Int(span));
    for (long t = 1; t < span; ++t)
      if (rng() % 2) offs.insert(Int(t));
    PatternSpec spec = consecutive_pattern(std::vector<Int>(offs.begin(), offs.end()));

    std::optional<Int> brute;
    const long bound = 100000;
    for (long a = 0; a <= bound && !brute; ++a)
      if (realizes(spec, Int(a))) brute = Int(a);

    try {
      Int found = find_pattern_run(spec, Int(bound));
      REQUIRE(brute);
      CHECK(found == *brute);
      CHECK(realizes(spec, found));
    } catch (const locally_unsatisfiable_error&) {
      CHECK_FALSE(brute);
    } catch (const budget_error&) {
      CHECK_FALSE(brute);
    }
  }
}

TEST_CASE("square-gap runs match the reference scan", "[constructions]") {
  CHECK(consecutive_squarefree_squares_run(1, 100) == 0);
  CHECK(consecutive_squarefree_squares_run(2, 1000) == 6);
  Int a3 = consecutive_squarefree_squares_run(3, 100000);
  CHECK(a3 == 10822);
  for (Int t = 1; t <= 9; ++t) {
    bool want = is_perfect_square(t);
    CHECK(sqf_at(a3 + t) == want);
  }
  CHECK_THROWS_AS(consecutive_squarefree_squares_run(0, 10), std::invalid_argument);
  CHECK_THROWS_AS(consecutive_squarefree_squares_run(4, 1000), budget_error);
}

TEST_CASE("gap-pattern membership checks", "[constructions]") {
  CHECK(is_in_T(6, 10));
  CHECK(is_in_T(0, 1));
  CHECK(is_in_T(2, 3));
  CHECK(is_in_T(10822, 10831));
  CHECK_FALSE(is_in_T(5, 9));
  CHECK_FALSE(is_in_T(6, 9));
  CHECK_FALSE(is_in_T(0, 4));
  CHECK_FALSE(is_in_T(3, 3));
  CHECK_FALSE(is_in_T(7, 3));
  CHECK_THROWS_AS(is_in_T(-1, 4), std::invalid_argument);

  // Exhaustive cross-check against the characterization spelled out directly.
  for (long a = 0; a <= 60; ++a)
    for (long w = 1; w <= 20; ++w) {
      bool direct = true;
      Int next = 1;
      for (long t = 1; t <= w && direct; ++t) {
        bool want = Int(t) == next * next;
        if (want) ++next;
        if (sqf_at(Int(a + t)) != want) direct = false;
      }
      direct = direct && is_perfect_square(Int(w));
      CHECK(is_in_T(a, a + w) == direct);
    }
}

TEST_CASE("square membership is semidecidable with immediate refutations", "[constructions]") {
  for (long c = 0; c <= 12; ++c) {
    bool want = c == 0 || is_perfect_square(Int(c));
    CHECK(is_in_S(c, 20000) == want);
  }
  CHECK_FALSE(is_in_S(-4, 100));
  CHECK_FALSE(is_in_S(20, 100));
  // 16 and 25 need runs whose least starts lie beyond these bounds.
  CHECK_THROWS_AS(is_in_S(16, 100000), witness_bound_error);
  CHECK_THROWS_AS(is_in_S(25, 10000), witness_bound_error);
}

TEST_CASE("multiplication falls out of the polarization identity", "[constructions]") {
  for (long a = 0; a <= 12; ++a)
    for (long b = 0; b <= 12; ++b)
      CHECK(mult_via_definability(a, b) == Int(a * b));
  CHECK_THROWS_AS(mult_via_definability(-1, 3), std::invalid_argument);
}

TEST_CASE("patterned progressions hit prescribed square-free sets", "[constructions]") {
  auto [a1, d1] = pattern_progression(2, {0, 1}, Int(1));
  CHECK(a1 == 1);
  CHECK(d1 == 1);

  auto [a2, d2] = pattern_progression(3, {0, 2}, Int(1));
  CHECK(a2 == 3);
  CHECK(d2 == 1);

  auto [a3, d3] = pattern_progression(3, {}, Int(1));
  CHECK(a3 == 48);  // first run of three consecutive non-square-free integers

  auto [a4, d4] = pattern_progression(4, {0, 1, 2, 3});
  CHECK(d4 == 576);  // (4!)^2
  CHECK(a4 == 1);
  for (long t = 0; t < 4; ++t) CHECK(sqf_at(a4 + t * d4));

  CHECK_THROWS_AS(pattern_progression(0, {}), std::invalid_argument);
  CHECK_THROWS_AS(pattern_progression(2, {3}), std::invalid_argument);
  CHECK_THROWS_AS(pattern_progression(2, {0}, Int(-5)), std::invalid_argument);
}

TEST_CASE("independence witness families verify exhaustively", "[constructions]") {
  IPkWitness w11 = ipk_witness(1, 1);
  CHECK(w11.start == 0);
  CHECK(w11.step == 1);
  REQUIRE(w11.a_delta.size() == 2);
  CHECK(w11.a_delta[0] == 0);
  CHECK(w11.a_delta[1] == 1);
  REQUIRE(w11.b.size() == 1);
  REQUIRE(w11.b[0].size() == 1);
  CHECK(w11.b[0][0] == 0);

  IPkWitness w21 = ipk_witness(2, 1);
  REQUIRE(w21.a_delta.size() == 2);
  REQUIRE(w21.b.size() == 2);
  CHECK(sqf_at(w21.a_delta[1] + w21.b[0][0] + w21.b[1][0]));
  CHECK_FALSE(sqf_at(w21.a_delta[0] + w21.b[0][0] + w21.b[1][0]));

  IPkWitness w12 = ipk_witness(1, 2);
  CHECK(w12.step == 576);
  CHECK(w12.start == 267650);
  REQUIRE(w12.a_delta.size() == 4);
  REQUIRE(w12.b.size() == 1);
  REQUIRE(w12.b[0].size() == 2);
  for (long f = 0; f < 4; ++f)
    for (long j = 0; j < 2; ++j) {
      bool want = (f >> j) & 1;
      CHECK(sqf_at(w12.a_delta[static_cast<std::size_t>(f)] +
                   w12.b[0][static_cast<std::size_t>(j)]) == want);
    }

  CHECK_THROWS_AS(ipk_witness(1, 3), std::invalid_argument);
  CHECK_THROWS_AS(ipk_witness(2, 2), std::invalid_argument);
  CHECK_THROWS_AS(ipk_witness(0, 1), std::invalid_argument);
}

TEST_CASE("pattern search is independent of the worker count", "[constructions]") {
  CHECK(find_pattern_run(consecutive_pattern({1, 4}), 1000, 5) == 6);
  CHECK(consecutive_squarefree_squares_run(3, 100000, 4) == 10822);
  IPkWitness serial = ipk_witness(1, 2, 10'000'000, 1);
  IPkWitness wide = ipk_witness(1, 2, 10'000'000, 6);
  CHECK(serial.start == wide.start);
  CHECK(serial.a_delta == wide.a_delta);
}
