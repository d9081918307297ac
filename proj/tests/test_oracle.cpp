#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sqf/numtheory.hpp"
#include "sqf/oracle.hpp"

using namespace sqf;

namespace {

Term lin(std::initializer_list<std::pair<const char*, long>> vars, Rat c = Rat(0)) {
  Term t(std::move(c));
  for (auto& [v, k] : vars) t += Term::variable(v, Int(k));
  return t;
}

Formula sqf_atom(Term t) { return Formula::make_atom(Atom::in_P(std::move(t), 1)); }

}  // namespace

TEST_CASE("oracle membership agrees with the solver-side tests") {
  // Values whose only repeated factor is a prime of m, at exactly the
  // allowance boundary.
  CHECK(oracle::in_Pm(3, Rat(18)));
  CHECK(oracle::in_Pm(3, Rat(-18)));
  CHECK_FALSE(oracle::in_Pm(3, Rat(54)));
  CHECK(oracle::in_Pm(2, Rat(-4)));
  CHECK_FALSE(oracle::in_Pm(2, Rat(8)));
  CHECK(oracle::in_Pm(6, Rat(9)));
  CHECK(oracle::in_Pm(6, Rat(36)));

  std::mt19937_64 rng(7101);
  for (int i = 0; i < 3000; ++i) {
    Int m = Int(static_cast<long>(rng() % 12) + 1);
    Int n = Int(static_cast<long>(rng() % 200000) - 100000);
    // Half the time, force a square factor of a prime dividing m so the
    // raised exponent budget actually gets exercised.
    if (rng() % 2 == 0 && m > 1) {
      Int q = 2;
      while (m % q != 0) q = q == 2 ? Int(3) : q + 2;
      n *= q * q;
    }
    Int d = Int(static_cast<long>(rng() % 40) + 1);
    if (n == 0) n = 1;
    Rat a(n, d);
    a.canonicalize();
    CAPTURE(m.get_str(), a.get_str());
    CHECK(oracle::in_Pm(m, a) == is_in_Pm(m, a));
    Int p = std::vector<int>{2, 3, 5, 7}[rng() % 4];
    long l = static_cast<long>(rng() % 7) - 2;
    CHECK(oracle::in_U(p, l, a) == is_in_U(p, l, a));
  }
}

TEST_CASE("oracle evaluation of compound formulas") {
  // sqf(x) & !sqf(x+1)
  Formula f = Formula::make_and(
      {sqf_atom(lin({{"x", 1}})), Formula::make_not(sqf_atom(lin({{"x", 1}}, Rat(1))))});
  CHECK(oracle::eval(f, {{"x", Rat(3)}}, Theory::Z1));   // 3 sf, 4 not
  CHECK_FALSE(oracle::eval(f, {{"x", Rat(1)}}, Theory::Z1));
  CHECK_FALSE(oracle::eval(f, {{"x", Rat(4)}}, Theory::Z1));

  Formula g = Formula::make_or(
      {Formula::make_atom(Atom::eq_zero(lin({{"x", 1}}, Rat(-2)))),
       Formula::make_atom(Atom::in_U(lin({{"x", 3}}, Rat(1)), 2, 2))});
  CHECK(oracle::eval(g, {{"x", Rat(2)}}, Theory::Z1));   // x = 2
  CHECK(oracle::eval(g, {{"x", Rat(1)}}, Theory::Z1));   // 3 + 1 = 4 in U[2,2]
  CHECK_FALSE(oracle::eval(g, {{"x", Rat(3)}}, Theory::Z1));

  Formula ord = Formula::make_atom(Atom::lt_zero(lin({{"x", 2}}, Rat(1))));
  CHECK(oracle::eval(ord, {{"x", Rat(-1)}}, Theory::Q2));
  CHECK_FALSE(oracle::eval(ord, {{"x", Rat(0)}}, Theory::Q2));
  CHECK_THROWS_AS(oracle::eval(ord, {{"x", Rat(-1)}}, Theory::Z1), theory_error);

  Formula ex = Formula::make_exists("x", f);
  CHECK_THROWS_AS(oracle::eval(ex, {}, Theory::Z1), std::invalid_argument);
}

TEST_CASE("integer witness search scans ascending") {
  // sqf(x) & sqf(x+1): least nonnegative solution is 1.
  Formula f = Formula::make_and(
      {sqf_atom(lin({{"x", 1}})), sqf_atom(lin({{"x", 1}}, Rat(1)))});
  auto w = oracle::search(f, "x", {Rat(0), Rat(100)}, Theory::Z1);
  REQUIRE(w.has_value());
  CHECK(*w == Rat(1));

  // First x with x, x+1, x+2 all square-free.
  Formula g = Formula::make_and({sqf_atom(lin({{"x", 1}})),
                                 sqf_atom(lin({{"x", 1}}, Rat(1))),
                                 sqf_atom(lin({{"x", 1}}, Rat(2)))});
  w = oracle::search(g, "x", {Rat(1), Rat(100)}, Theory::Z1);
  REQUIRE(w.has_value());
  CHECK(*w == Rat(1));  // 1, 2, 3

  // Unsatisfiable within the range: x in U[2,2] & sqf(x) has no solution.
  Formula h = Formula::make_and(
      {Formula::make_atom(Atom::in_U(lin({{"x", 1}}), 2, 2)), sqf_atom(lin({{"x", 1}}))});
  CHECK_FALSE(oracle::search(h, "x", {Rat(-500), Rat(500)}, Theory::Z1).has_value());

  Formula with_param = sqf_atom(lin({{"x", 1}, {"y", 1}}));
  CHECK_THROWS_AS(oracle::search(with_param, "x", {Rat(0), Rat(10)}, Theory::Z1),
                  std::invalid_argument);
}

TEST_CASE("bulk block scan matches value-by-value evaluation") {
  std::mt19937_64 rng(7102);
  for (int it = 0; it < 20; ++it) {
    long k = static_cast<long>(rng() % 7) - 3;
    if (k == 0) k = 5;
    long c = static_cast<long>(rng() % 41) - 20;
    long m = static_cast<long>(rng() % 6) + 1;
    Formula f = Formula::make_and(
        {Formula::make_atom(Atom::in_P(lin({{"x", k}}, Rat(c)), m)),
         Formula::make_not(
             Formula::make_atom(Atom::in_U(lin({{"x", 1}}, Rat(c % 5)), 3, 2)))});
    long lo = static_cast<long>(rng() % 2000) - 1000;
    std::vector<Int> bulk_hits;
    oracle::scan_block(f, "x", Int(lo), 700, Theory::Z1, [&](const Int& x) {
      bulk_hits.push_back(x);
      return true;
    });
    std::vector<Int> direct_hits;
    for (long x = lo; x < lo + 700; ++x)
      if (oracle::eval(f, {{"x", Rat(Int(x))}}, Theory::Z1)) direct_hits.push_back(Int(x));
    CAPTURE(k, c, m, lo);
    CHECK(bulk_hits == direct_hits);
  }
}

TEST_CASE("rational search uses denominator-major order") {
  // Least square-free rational in the open interval (0,1) with denominator
  // at most 4, scanning denominators first: 1/2.
  Formula f = sqf_atom(lin({{"x", 1}}));
  auto w = oracle::search(f, "x", {Rat(0), Rat(1), 4, true}, Theory::Q1);
  REQUIRE(w.has_value());
  CHECK(*w == Rat(1, 2));

  // With closed ends, 1 itself is tested at denominator 1 first.
  w = oracle::search(f, "x", {Rat(0), Rat(1), 4, false}, Theory::Q1);
  REQUIRE(w.has_value());
  CHECK(*w == Rat(1));
}

TEST_CASE("solution counting over a range") {
  Formula f = sqf_atom(lin({{"x", 1}}));
  CHECK(oracle::count_solutions(f, "x", 1, 10, Theory::Z1) == 7);
  CHECK(oracle::count_solutions(f, "x", 1, 100, Theory::Z1) == 61);
}
