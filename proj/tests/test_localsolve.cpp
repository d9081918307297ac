#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <random>
#include <vector>

#include "sqf/localsolve.hpp"
#include "sqf/normalize.hpp"
#include "sqf/oracle.hpp"
#include "sqf/parser.hpp"

using namespace sqf;

namespace {

using Node = PCondition::Node;
using Lit = PCondition::Lit;

PCondition make_cond(Int p, Node root, std::string var = "x") {
  PCondition c;
  c.p = std::move(p);
  c.var = std::move(var);
  c.root = std::move(root);
  return c;
}

Lit lit(bool neg, std::initializer_list<std::pair<const char*, long>> vars, long c, long level) {
  Term t{Rat(c)};
  for (auto& [v, k] : vars) t += Term::variable(v, Int(k));
  return Lit{neg, std::move(t), level};
}

// Independent truth via the formula evaluator rather than eval_pcondition.
bool truth_at(const Formula& f, const std::string& var, const Rat& x, Theory th) {
  return oracle::eval(f, {{var, x}}, th);
}
bool truth_at(const PCondition& cond, const Rat& x, Theory th) {
  return truth_at(formula_of_pcondition(cond), cond.var, x, th);
}

// Random single-variable condition at p: a small and/or tree of literals.
PCondition random_cond(std::mt19937_64& rng, const Int& p) {
  auto rnd = [&](long lo, long hi) {
    return lo + static_cast<long>(rng() % static_cast<unsigned long>(hi - lo + 1));
  };
  auto rnd_lit = [&] {
    long k = rnd(-6, 6);
    if (k == 0 && rng() % 2) k = 1;
    return Node::literal(Lit{rng() % 2 == 0,
                             Term::variable("x", Int(k)) + Term(Rat(rnd(-40, 40))),
                             rnd(-2, 4)});
  };
  std::vector<Node> groups;
  long outer = rnd(1, 3);
  for (long i = 0; i < outer; ++i) {
    std::vector<Node> ls;
    long inner = rnd(1, 3);
    for (long j = 0; j < inner; ++j) ls.push_back(rnd_lit());
    groups.push_back(rng() % 2 == 0 ? Node::conj(std::move(ls)) : Node::disj(std::move(ls)));
  }
  Node root = rng() % 2 == 0 ? Node::conj(std::move(groups)) : Node::disj(std::move(groups));
  return make_cond(p, std::move(root));
}

PCondition subst_param(const PCondition& cond, const std::string& name, const Rat& value) {
  std::function<Node(const Node&)> go = [&](const Node& n) -> Node {
    switch (n.kind) {
      case Node::Kind::True:
      case Node::Kind::False:
        return n;
      case Node::Kind::Lit:
        return Node::literal(Lit{n.lit.negated, n.lit.term.substituted(name, value), n.lit.level});
      default: {
        std::vector<Node> kids;
        for (const auto& k : n.kids) kids.push_back(go(k));
        Node out;
        out.kind = n.kind;
        out.kids = std::move(kids);
        return out;
      }
    }
  };
  PCondition out = cond;
  out.root = go(cond.root);
  return out;
}

bool mentions_var(const PCondition& cond, const std::string& name) {
  bool found = false;
  PCondition::walk(cond.root, [&](const Lit& l) {
    if (l.term.coeff_of(name) != 0) found = true;
  });
  return found;
}

}  // namespace

TEST_CASE("associated p-condition of a system") {
  GSystem g;
  g.shape.k = 2;
  g.shape.m = 4;
  g.shape.n = 2;
  g.c = {Rat(1), Rat(3)};

  PCondition psi2 = associated_p_condition(g, 2);
  CHECK(psi2.p == 2);
  std::vector<Lit> lits;
  PCondition::walk(psi2.root, [&](const Lit& l) { lits.push_back(l); });
  REQUIRE(lits.size() == 2);
  CHECK(lits[0] == lit(true, {{"x", 2}}, 1, 4));  // level 2 + v_2(4)
  CHECK(lits[1] == lit(true, {{"x", 2}}, 3, 4));
  LocalCertificate c2 = p_satisfiable(g, 2, Theory::Z1);
  REQUIRE(c2.satisfiable);
  CHECK(*c2.residue == 0);  // 2x+1 and 2x+3 are odd, so every residue works
  CHECK(c2.modulus == 16);

  PCondition psi3 = associated_p_condition(g, 3);
  PCondition::walk(psi3.root, [&](const Lit& l) { CHECK(l.level == 2); });
  LocalCertificate c3 = p_satisfiable(g, 3, Theory::Z1);
  REQUIRE(c3.satisfiable);
  CHECK(*c3.residue == 0);
  CHECK(c3.modulus == 9);

  // Solutions of a formula satisfy every p-condition of its systems.
  for (const char* text : {"sqf(x) & sqf(x+2)", "x in U[2,3] & sqf(x)", "2*x+1 in P[1] & 3*x in P[1]"}) {
    Formula f = parse_formula(text, Theory::Z1);
    auto ds = to_gsystems(f, "x", Theory::Z1);
    for (long a = -200; a <= 200; ++a) {
      if (!oracle::eval(f, {{"x", Rat(Int(a))}}, Theory::Z1)) continue;
      bool in_some = false;
      for (const auto& d : ds) {
        if (!d.guard) continue;
        Boundary bd = boundary(d.system);
        bool all = true;
        auto ps = prime_table(static_cast<std::uint32_t>(bd.B.get_ui()));
        for (std::uint32_t pu : *ps) {
          if (Int(pu) > bd.B) break;
          PCondition psi = associated_p_condition(d.system, Int(pu));
          if (!eval_pcondition(psi, Rat(Int(a)))) all = false;
        }
        if (all) in_some = true;
      }
      CAPTURE(text, a);
      CHECK(in_some);
    }
  }
}

TEST_CASE("integer satisfiability matches exhaustive residue enumeration") {
  std::mt19937_64 rng(40117);
  const Int primes[] = {2, 3, 5, 7};
  for (int it = 0; it < 400; ++it) {
    const Int& p = primes[rng() % 4];
    PCondition cond = random_cond(rng, p);
    long L = std::max(cond.max_level(), 1L);
    Int pL = pow_int(p, static_cast<unsigned long>(L));

    Formula cf = formula_of_pcondition(cond);
    std::optional<Int> least;
    for (Int r = 0; r < pL; r += 1) {
      if (truth_at(cf, cond.var, Rat(r), Theory::Z1)) {
        least = r;
        break;
      }
    }

    LocalCertificate cert = p_condition_satisfiable(cond, Theory::Z1);
    CAPTURE(it, p.get_str());
    REQUIRE(cert.satisfiable == least.has_value());
    if (least) {
      REQUIRE(cert.residue.has_value());
      CHECK(*cert.residue == *least);
      CHECK(cert.modulus == pL);
      // The certificate names a full residue class.
      for (Int j : {Int(1), Int(2), Int(7)})
        CHECK(truth_at(cond, Rat(*cert.residue + j * cert.modulus), Theory::Z1));
    }
  }
}

TEST_CASE("rational satisfiability matches a complete sample grid") {
  // Every literal k x + c in U[p,l] with |k| <= 6, |c| <= 40, l in [-2,4]
  // describes a ball of level in [-4,4] whose center lies in p^-2 Z, so the
  // truth pattern at x = a/p^4 depends on a mod p^8 only, and one point of
  // valuation -5 represents everything below the deepest ball.
  std::mt19937_64 rng(40118);
  for (const Int& p : {Int(2), Int(3)}) {
    Int p4 = pow_int(p, 4), p8 = pow_int(p, 8);
    for (int it = 0; it < 60; ++it) {
      PCondition cond = random_cond(rng, p);
      Formula cf = formula_of_pcondition(cond);
      std::optional<Rat> sample;
      for (Int a = 0; a < p8 && !sample; a += 1) {
        Rat x(a, p4);
        x.canonicalize();
        if (truth_at(cf, cond.var, x, Theory::Q1)) sample = x;
      }
      if (!sample) {
        Rat far(1, pow_int(p, 5));
        if (truth_at(cf, cond.var, far, Theory::Q1)) sample = far;
      }

      LocalCertificate cert = p_condition_satisfiable(cond, Theory::Q1);
      CAPTURE(it, p.get_str());
      REQUIRE(cert.satisfiable == sample.has_value());
      if (cert.satisfiable) {
        REQUIRE(cert.point.has_value());
        CHECK(truth_at(cond, *cert.point, Theory::Q1));
      }

      // Integer solvability is at least as strong as rational solvability.
      LocalCertificate zcert = p_condition_satisfiable(cond, Theory::Z1);
      if (zcert.satisfiable) CHECK(cert.satisfiable);
    }
  }
}

TEST_CASE("pinned per-prime cases") {
  // U[2,0] with both half-classes removed is empty in either theory.
  PCondition cov = make_cond(2, Node::conj({Node::literal(lit(false, {{"x", 1}}, 0, 0)),
                                            Node::literal(lit(true, {{"x", 1}}, 0, 1)),
                                            Node::literal(lit(true, {{"x", 1}}, -1, 1))}));
  CHECK_FALSE(p_condition_satisfiable(cov, Theory::Z1).satisfiable);
  CHECK_FALSE(p_condition_satisfiable(cov, Theory::Q1).satisfiable);

  PCondition nsq = make_cond(2, Node::literal(lit(true, {{"x", 1}}, 0, 2)));
  LocalCertificate cert = p_condition_satisfiable(nsq, Theory::Z1);
  REQUIRE(cert.satisfiable);
  CHECK(*cert.residue == 1);
  CHECK(cert.modulus == 4);

  PCondition pair = make_cond(2, Node::conj({Node::literal(lit(true, {{"x", 1}}, 1, 2)),
                                             Node::literal(lit(true, {{"x", 1}}, 3, 2))}));
  cert = p_condition_satisfiable(pair, Theory::Z1);
  REQUIRE(cert.satisfiable);
  CHECK(*cert.residue == 0);
  CHECK(cert.modulus == 4);

  // Positive balls at incompatible centers cannot meet.
  PCondition disj = make_cond(2, Node::conj({Node::literal(lit(false, {{"x", 1}}, -1, 2)),
                                             Node::literal(lit(false, {{"x", 1}}, -2, 2))}));
  CHECK_FALSE(p_condition_satisfiable(disj, Theory::Z1).satisfiable);
  CHECK_FALSE(p_condition_satisfiable(disj, Theory::Q1).satisfiable);

  // Nested positives keep the deeper one.
  PCondition nest = make_cond(3, Node::conj({Node::literal(lit(false, {{"x", 1}}, 0, 1)),
                                             Node::literal(lit(false, {{"x", 1}}, 0, 3))}));
  cert = p_condition_satisfiable(nest, Theory::Q1);
  REQUIRE(cert.satisfiable);
  CHECK(truth_at(nest, *cert.point, Theory::Q1));

  // Pure non-membership constraints always have rational solutions, even at
  // negative levels where no integer qualifies.
  PCondition deep = make_cond(2, Node::literal(lit(true, {{"x", 1}}, 0, -2)));
  cert = p_condition_satisfiable(deep, Theory::Q1);
  REQUIRE(cert.satisfiable);
  CHECK(truth_at(deep, *cert.point, Theory::Q1));
  CHECK_FALSE(p_condition_satisfiable(deep, Theory::Z1).satisfiable);
}

TEST_CASE("oversized integer moduli fall back to ball subdivision") {
  PCondition big = make_cond(2, Node::conj({Node::literal(lit(true, {{"x", 1}}, 0, 21)),
                                            Node::literal(lit(false, {{"x", 1}}, 0, 1))}));
  LocalCertificate cert = p_condition_satisfiable(big, Theory::Z1);
  REQUIRE(cert.satisfiable);
  CHECK(cert.modulus == pow_int(2, 21));
  REQUIRE(cert.residue.has_value());
  CHECK(truth_at(big, Rat(*cert.residue), Theory::Z1));
  CHECK(truth_at(big, Rat(*cert.residue + cert.modulus), Theory::Z1));

  // Forcing the fallback on small conditions agrees with the residue scan.
  std::mt19937_64 rng(40119);
  const Int primes[] = {2, 3, 5, 7};
  for (int it = 0; it < 150; ++it) {
    PCondition cond = random_cond(rng, primes[rng() % 4]);
    LocalCertificate scan = p_condition_satisfiable(cond, Theory::Z1);
    LocalCertificate ball = p_condition_satisfiable(cond, Theory::Z1, Int(1));
    CAPTURE(it);
    REQUIRE(scan.satisfiable == ball.satisfiable);
    if (ball.satisfiable) {
      REQUIRE(ball.residue.has_value());
      CHECK(truth_at(cond, Rat(*ball.residue), Theory::Z1));
      CHECK(truth_at(cond, Rat(*ball.residue + ball.modulus), Theory::Z1));
    }
  }
}

TEST_CASE("primes above the boundary never refute") {
  std::vector<const char*> texts = {"sqf(x) & sqf(x+2)", "2*x+1 in P[1] & 3*x in P[1]",
                                    "x in U[2,3] & sqf(x) & !(sqf(x+5))"};
  for (const char* text : texts) {
    Formula f = parse_formula(text, Theory::Z1);
    for (const auto& d : to_gsystems(f, "x", Theory::Z1)) {
      if (!d.guard) continue;
      Boundary bd = boundary(d.system);
      AboveBoundarySkip skip = trivially_satisfiable_above_boundary(d.system, bd);
      CHECK(skip.B == bd.B);
      Int q = bd.B;
      while ((q = next_prime_above(q)) <= bd.B + 50) {
        CAPTURE(text, q.get_str());
        CHECK(p_satisfiable(d.system, q, Theory::Z1).satisfiable);
        CHECK(p_satisfiable(d.system, q, Theory::Q1).satisfiable);
      }
    }
  }

  GSystem g;
  g.shape.k = 5;
  CHECK_THROWS_AS(trivially_satisfiable_above_boundary(g, Boundary{3}), std::invalid_argument);
}

TEST_CASE("condensation packs the small primes into one class") {
  // The split branch with a positive P-constraint picks up exclusions at
  // every prime up to the boundary; the negative branch only keeps theta.
  Formula f = parse_formula("!(x in U[2,2])", Theory::Z1);
  auto ds = to_gsystems(f, "x", Theory::Z1);
  REQUIRE(ds.size() == 2);
  CondenseResult cr;
  for (const auto& d : ds) {
    REQUIRE(d.guard);
    cr = condense(d.system, Boundary{3});
    CHECK(cr.D == (d.system.shape.n == 1 ? 36 : 4));
    CHECK(cr.r == 1);
  }

  GSystem empty;
  cr = condense(empty, Boundary{1});
  CHECK(cr.D == 1);
  CHECK(cr.r == 0);
  cr = condense(empty, Boundary{5});
  CHECK(cr.D == 1);
  CHECK(cr.r == 0);

  f = parse_formula("sqf(x) & sqf(x+1)", Theory::Z1);
  ds = to_gsystems(f, "x", Theory::Z1);
  REQUIRE(ds.size() == 1);
  Boundary bd = boundary(ds[0].system);
  CHECK(bd.B == 3);
  cr = condense(ds[0].system, bd);
  CHECK(cr.D == 36);
  CHECK(cr.r == 1);

  // A contradictory theta refutes at p = 2 and condensation reports it.
  f = parse_formula("x in U[2,2] & sqf(x)", Theory::Z1);
  ds = to_gsystems(f, "x", Theory::Z1);
  REQUIRE(ds.size() == 1);
  CHECK_THROWS_AS(condense(ds[0].system, boundary(ds[0].system)), std::invalid_argument);

  // Soundness: every member of the class satisfies every small-prime condition.
  std::mt19937_64 rng(40120);
  std::vector<const char*> texts = {"sqf(x) & sqf(x+2) & sqf(x+6)", "2*x+1 in P[3] & !(x in U[3,1])",
                                    "x in U[5,1] & sqf(x+1)", "3*x in P[2] & sqf(x+7)"};
  for (const char* text : texts) {
    Formula f2 = parse_formula(text, Theory::Z1);
    for (const auto& d : to_gsystems(f2, "x", Theory::Z1)) {
      if (!d.guard) continue;
      Boundary b2 = boundary(d.system);
      CondenseResult pack;
      try {
        pack = condense(d.system, b2);
      } catch (const std::invalid_argument&) {
        continue;
      }
      auto ps = prime_table(static_cast<std::uint32_t>(b2.B.get_ui()));
      for (int j = 0; j < 100; ++j) {
        Int a = pack.r + Int(j) * pack.D;
        for (std::uint32_t pu : *ps) {
          if (Int(pu) > b2.B) break;
          CAPTURE(text, j, pu);
          CHECK(eval_pcondition(associated_p_condition(d.system, Int(pu)), Rat(a)));
        }
      }
    }
  }
}

TEST_CASE("eliminating the variable from a parametric condition") {
  // exists x: 2x + y in U[2,3]  ==  y in U[2,1] over Z, anything over Q.
  PCondition cond = make_cond(2, Node::literal(lit(false, {{"x", 2}, {"y", 1}}, 0, 3)));
  PCondition elim = eliminate_exists_local(cond, Theory::Z1);
  CHECK_FALSE(mentions_var(elim, "x"));
  for (long y = -20; y <= 20; ++y) {
    CAPTURE(y);
    bool got = oracle::eval(formula_of_pcondition(elim), {{"y", Rat(Int(y))}}, Theory::Z1);
    CHECK(got == is_in_U(2, 1, Rat(Int(y))));
  }
  CHECK(eliminate_exists_local(cond, Theory::Q1).trivially_true());

  // exists x: x not in U[2,1] holds for every integer parameter choice.
  PCondition neg = make_cond(2, Node::literal(lit(true, {{"x", 1}}, 0, 1)));
  CHECK(eliminate_exists_local(neg, Theory::Z1).trivially_true());
  CHECK(eliminate_exists_local(neg, Theory::Q1).trivially_true());

  // exists x: x in U[3,2] and x + y not in U[3,1]  ==  y not in U[3,1].
  PCondition mix = make_cond(3, Node::conj({Node::literal(lit(false, {{"x", 1}}, 0, 2)),
                                            Node::literal(lit(true, {{"x", 1}, {"y", 1}}, 0, 1))}));
  PCondition got = eliminate_exists_local(mix, Theory::Z1);
  for (long y = -30; y <= 30; ++y) {
    CAPTURE(y);
    CHECK(oracle::eval(formula_of_pcondition(got), {{"y", Rat(Int(y))}}, Theory::Z1) ==
          !is_in_U(3, 1, Rat(Int(y))));
  }
}

TEST_CASE("eliminated conditions agree with direct search") {
  std::mt19937_64 rng(40121);
  const Int primes[] = {2, 3};
  for (int it = 0; it < 120; ++it) {
    const Int& p = primes[rng() % 2];
    auto rnd = [&](long lo, long hi) {
      return lo + static_cast<long>(rng() % static_cast<unsigned long>(hi - lo + 1));
    };
    auto rnd_lit = [&] {
      long k = rnd(-4, 4);
      return Node::literal(Lit{rng() % 2 == 0,
                               Term::variable("x", Int(k)) + Term::variable("y", Int(rnd(-2, 2))) +
                                   Term(Rat(rnd(-12, 12))),
                               rnd(-1, 3)});
    };
    std::vector<Node> ls;
    long inner = rnd(1, 3);
    for (long j = 0; j < inner; ++j) ls.push_back(rnd_lit());
    PCondition cond = make_cond(p, rng() % 2 == 0 ? Node::conj(std::move(ls))
                                                  : Node::disj(std::move(ls)));

    for (Theory th : {Theory::Z1, Theory::Q1}) {
      PCondition elim = eliminate_exists_local(cond, th);
      CHECK_FALSE(mentions_var(elim, "x"));
      Formula ef = formula_of_pcondition(elim);
      std::vector<Rat> samples;
      for (long y = -12; y <= 12; ++y) samples.emplace_back(Int(y));
      if (th != Theory::Z1)
        for (long u : {-7L, -1L, 1L, 5L, 9L}) {
          samples.emplace_back(Int(u), Int(3));
          samples.back().canonicalize();
          samples.emplace_back(Int(u), Int(4));
          samples.back().canonicalize();
        }
      for (const Rat& y : samples) {
        PCondition grounded = subst_param(cond, "y", y);
        bool direct = p_condition_satisfiable(grounded, th).satisfiable;
        bool eliminated = oracle::eval(ef, {{"y", y}}, th);
        CAPTURE(it, p.get_str(), static_cast<int>(th), y.get_str());
        REQUIRE(eliminated == direct);
      }
    }
  }
}
