#include <catch2/catch_amalgamated.hpp>

#include "sqf/core.hpp"

using namespace sqf;

namespace {

Term lin(std::initializer_list<std::pair<const char*, long>> vars, Rat c = Rat(0)) {
  Term t(std::move(c));
  for (auto& [v, k] : vars) t += Term::variable(v, Int(k));
  return t;
}

}  // namespace

TEST_CASE("terms are canonical affine forms") {
  Term t = lin({{"x", 2}, {"y", -1}}, Rat(3, 4));
  CHECK(t.coeff_of("x") == 2);
  CHECK(t.coeff_of("y") == -1);
  CHECK(t.coeff_of("z") == 0);
  CHECK(t.constant == Rat(3, 4));

  // Cancelling coefficients leaves no residue entry.
  Term s = t + lin({{"y", 1}});
  CHECK(s.coeffs.count("y") == 0);
  CHECK(s == lin({{"x", 2}}, Rat(3, 4)));

  CHECK(-t == lin({{"x", -2}, {"y", 1}}, Rat(-3, 4)));
  CHECK(Int(6) * t == lin({{"x", 12}, {"y", -6}}, Rat(9, 2)));
  CHECK((Int(0) * t).is_constant());
  CHECK((t - t) == Term(Rat(0)));

  CHECK(t.evaluate({{"x", Rat(1)}, {"y", Rat(1, 2)}}) == Rat(2) - Rat(1, 2) + Rat(3, 4));
  CHECK_THROWS_AS(t.evaluate({{"x", Rat(1)}}), std::invalid_argument);

  CHECK(t.substituted("y", Rat(2)) == lin({{"x", 2}}, Rat(3, 4) - Rat(2)));
  CHECK(t.substituted("w", Rat(5)) == t);
}

TEST_CASE("free variables and substitution") {
  Formula f = Formula::make_exists(
      "x", Formula::make_and(
               {Formula::make_atom(Atom::in_P(lin({{"x", 1}, {"y", 1}}), 1)),
                Formula::make_not(Formula::make_atom(Atom::eq_zero(lin({{"z", 2}}))))}));
  auto fv = free_variables(f);
  CHECK(fv == std::set<std::string>{"y", "z"});

  Formula g = substitute(f, "y", Rat(7), Theory::Z1);
  CHECK(free_variables(g) == std::set<std::string>{"z"});
  // The bound variable is untouched by substitution of its own name.
  CHECK(substitute(f, "x", Rat(1), Theory::Z1) == f);

  CHECK_THROWS_AS(substitute(f, "y", Rat(1, 2), Theory::Z1), theory_error);
  CHECK(free_variables(substitute(f, "y", Rat(1, 2), Theory::Q1)) ==
        std::set<std::string>{"z"});
}

TEST_CASE("formula equality is structural") {
  Formula a = Formula::make_atom(Atom::in_U(lin({{"x", 1}}), 2, 3));
  Formula b = Formula::make_atom(Atom::in_U(lin({{"x", 1}}), 2, 3));
  CHECK(a == b);
  CHECK(Formula::make_not(a) != a);
  CHECK(Formula::make_and({a, b}) == Formula::make_and({a, b}));
  CHECK(Formula::make_and({a}) != Formula::make_or({a}));
  CHECK(Formula::make_atom(Atom::in_U(lin({{"x", 1}}), 2, 4)) != a);
  CHECK(Formula::make_true() == Formula::make_true());
  CHECK(Formula::make_true() != Formula::make_false());
}

TEST_CASE("validation enforces the theory contracts") {
  Formula order = Formula::make_atom(Atom::lt_zero(lin({{"x", 1}})));
  CHECK_THROWS_AS(validate(order, Theory::Z1), theory_error);
  CHECK_THROWS_AS(validate(order, Theory::Q1), theory_error);
  CHECK_NOTHROW(validate(order, Theory::Q2));

  Formula frac = Formula::make_atom(Atom::in_P(lin({{"x", 1}}, Rat(1, 2)), 1));
  CHECK_THROWS_AS(validate(frac, Theory::Z1), theory_error);
  CHECK_NOTHROW(validate(frac, Theory::Q1));

  Formula bad_p = Formula::make_atom(Atom::in_U(lin({{"x", 1}}), 4, 1));
  CHECK_THROWS_AS(validate(bad_p, Theory::Z1), theory_error);
  Formula bad_m = Formula::make_atom(Atom::in_P(lin({{"x", 1}}), 0));
  CHECK_THROWS_AS(validate(bad_m, Theory::Z1), theory_error);

  Formula nested = Formula::make_exists(
      "x", Formula::make_exists("y", Formula::make_atom(Atom::eq_zero(lin({{"x", 1}})))));
  CHECK_THROWS_AS(validate(nested, Theory::Z1), theory_error);
  Formula buried = Formula::make_not(
      Formula::make_exists("x", Formula::make_atom(Atom::eq_zero(lin({{"x", 1}})))));
  CHECK_THROWS_AS(validate(buried, Theory::Z1), theory_error);

  Formula ok = Formula::make_exists(
      "x", Formula::make_or({Formula::make_atom(Atom::in_P(lin({{"x", 2}}, Rat(1)), 3)),
                             Formula::make_atom(Atom::eq_zero(lin({{"x", 1}, {"y", -1}})))}));
  CHECK_NOTHROW(validate(ok, Theory::Z1));
}

TEST_CASE("G-system renders to its defining formula") {
  GSystem g;
  g.shape.k = 2;
  g.shape.m = 3;
  g.shape.n = 1;
  g.shape.nprime = 1;
  g.c = {Rat(1)};
  g.cp = {Rat(5)};
  PCondition cond;
  cond.p = 2;
  cond.var = "x";
  cond.root = PCondition::Node::literal({false, lin({{"x", 2}}, Rat(1)), 2});
  g.shape.theta[2] = cond;

  Formula f = gsystem_formula(g, "x");
  REQUIRE(f.kind == Formula::Kind::And);
  REQUIRE(f.children.size() == 3);
  CHECK(f.children[0] == Formula::make_atom(Atom::in_U(lin({{"x", 2}}, Rat(1)), 2, 2)));
  CHECK(f.children[1] == Formula::make_atom(Atom::in_P(lin({{"x", 2}}, Rat(1)), 3)));
  CHECK(f.children[2] ==
        Formula::make_not(Formula::make_atom(Atom::in_P(lin({{"x", 2}}, Rat(5)), 3))));
}

TEST_CASE("p-condition level bookkeeping") {
  PCondition cond;
  cond.p = 3;
  using N = PCondition::Node;
  cond.root = N::conj({N::literal({false, lin({{"x", 1}}), 2}),
                       N::disj({N::literal({true, lin({{"x", 3}}, Rat(1)), 5}),
                                N::literal({false, lin({{"x", 1}}), -2})})});
  CHECK(cond.max_level() == 5);
  CHECK_FALSE(cond.trivially_true());
  PCondition triv;
  CHECK(triv.trivially_true());
  CHECK(triv.max_level() == 0);
}
