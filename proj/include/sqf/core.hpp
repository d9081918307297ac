#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sqf/ints.hpp"

namespace sqf {

// The three first-order settings the solver understands:
//   Z1: integers with the P_m predicates and integer constants,
//   Q1: rationals with the P_m predicates,
//   Q2: rationals with the P_m predicates and the ordering.
enum class Theory { Z1, Q1, Q2 };

inline const char* theory_name(Theory t) {
  switch (t) {
    case Theory::Z1: return "Z1";
    case Theory::Q1: return "Q1";
    default: return "Q2";
  }
}

class theory_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- terms -------------------------------------------------------------------

// Affine form: sum of integer-coefficient variables plus a rational constant.
// Coefficient maps hold no zero entries, so structural equality is canonical.
struct Term {
  std::map<std::string, Int> coeffs;
  Rat constant = Rat(0);

  Term() = default;
  explicit Term(Rat c) : constant(std::move(c)) { constant.canonicalize(); }
  static Term variable(const std::string& name, Int coeff = 1) {
    Term t;
    if (coeff != 0) t.coeffs[name] = std::move(coeff);
    return t;
  }

  bool is_constant() const { return coeffs.empty(); }

  Int coeff_of(const std::string& name) const {
    auto it = coeffs.find(name);
    return it == coeffs.end() ? Int(0) : it->second;
  }

  // The affine part that remains after deleting `name`.
  Term without(const std::string& name) const {
    Term t = *this;
    t.coeffs.erase(name);
    return t;
  }

  Term& operator+=(const Term& o) {
    for (const auto& [v, k] : o.coeffs) {
      Int s = coeff_of(v) + k;
      if (s == 0)
        coeffs.erase(v);
      else
        coeffs[v] = s;
    }
    constant += o.constant;
    return *this;
  }

  friend Term operator+(Term a, const Term& b) { return a += b; }

  Term operator-() const {
    Term t;
    for (const auto& [v, k] : coeffs) t.coeffs[v] = -k;
    t.constant = -constant;
    return t;
  }

  friend Term operator-(const Term& a, const Term& b) { return a + (-b); }

  // Scales every coefficient and the constant by the integer h.
  friend Term operator*(const Int& h, const Term& t) {
    Term r;
    if (h == 0) return r;
    for (const auto& [v, k] : t.coeffs) r.coeffs[v] = h * k;
    r.constant = t.constant * Rat(h);
    r.constant.canonicalize();
    return r;
  }

  Rat evaluate(const std::map<std::string, Rat>& assignment) const {
    Rat r = constant;
    for (const auto& [v, k] : coeffs) {
      auto it = assignment.find(v);
      if (it == assignment.end())
        throw std::invalid_argument("Term::evaluate: unbound variable " + v);
      r += Rat(k) * it->second;
    }
    r.canonicalize();
    return r;
  }

  // Replaces a variable by a rational value, folding it into the constant.
  Term substituted(const std::string& name, const Rat& value) const {
    auto it = coeffs.find(name);
    if (it == coeffs.end()) return *this;
    Term t = without(name);
    t.constant += Rat(it->second) * value;
    t.constant.canonicalize();
    return t;
  }

  friend bool operator==(const Term& a, const Term& b) {
    return a.coeffs == b.coeffs && a.constant == b.constant;
  }
  friend bool operator!=(const Term& a, const Term& b) { return !(a == b); }
};

// --- atoms and formulas --------------------------------------------------------

enum class AtomKind {
  InU,     // term in U[p,l]
  InP,     // term in P[m]
  EqZero,  // term = 0
  LtZero,  // term < 0 (only meaningful under Q2)
};

struct Atom {
  AtomKind kind;
  Term term;
  Int p = 0;  // InU only
  long l = 0; // InU only
  Int m = 0;  // InP only

  static Atom in_U(Term t, Int prime, long level) {
    return Atom{AtomKind::InU, std::move(t), std::move(prime), level, 0};
  }
  static Atom in_P(Term t, Int mm) {
    return Atom{AtomKind::InP, std::move(t), 0, 0, std::move(mm)};
  }
  static Atom eq_zero(Term t) { return Atom{AtomKind::EqZero, std::move(t), 0, 0, 0}; }
  static Atom lt_zero(Term t) { return Atom{AtomKind::LtZero, std::move(t), 0, 0, 0}; }

  friend bool operator==(const Atom& a, const Atom& b) {
    if (a.kind != b.kind || a.term != b.term) return false;
    switch (a.kind) {
      case AtomKind::InU: return a.p == b.p && a.l == b.l;
      case AtomKind::InP: return a.m == b.m;
      default: return true;
    }
  }
  friend bool operator!=(const Atom& a, const Atom& b) { return !(a == b); }
};

// Formula tree with value semantics.  And of zero children is the constant
// true; Or of zero children is the constant false.  Exists may appear only as
// the outermost node of a sentence-level formula; validate() enforces this.
struct Formula {
  enum class Kind { Atom, Not, And, Or, Exists };

  Kind kind = Kind::And;
  std::optional<sqf::Atom> atom;  // Kind::Atom
  std::vector<Formula> children;  // Not: 1, And/Or: n, Exists: 1 (body)
  std::string var;                // Kind::Exists

  static Formula make_atom(sqf::Atom a) {
    Formula f;
    f.kind = Kind::Atom;
    f.atom = std::move(a);
    return f;
  }
  static Formula make_not(Formula inner) {
    Formula f;
    f.kind = Kind::Not;
    f.children.push_back(std::move(inner));
    return f;
  }
  static Formula make_and(std::vector<Formula> kids) {
    if (kids.size() == 1) return std::move(kids.front());
    Formula f;
    f.kind = Kind::And;
    f.children = std::move(kids);
    return f;
  }
  static Formula make_or(std::vector<Formula> kids) {
    if (kids.size() == 1) return std::move(kids.front());
    Formula f;
    f.kind = Kind::Or;
    f.children = std::move(kids);
    return f;
  }
  static Formula make_exists(std::string v, Formula body) {
    Formula f;
    f.kind = Kind::Exists;
    f.var = std::move(v);
    f.children.push_back(std::move(body));
    return f;
  }
  static Formula make_true() { return make_and({}); }
  static Formula make_false() { return make_or({}); }

  bool is_true_constant() const { return kind == Kind::And && children.empty(); }
  bool is_false_constant() const { return kind == Kind::Or && children.empty(); }

  friend bool operator==(const Formula& a, const Formula& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
      case Kind::Atom: return *a.atom == *b.atom;
      case Kind::Exists:
        if (a.var != b.var) return false;
        [[fallthrough]];
      default:
        return a.children == b.children;
    }
  }
  friend bool operator!=(const Formula& a, const Formula& b) { return !(a == b); }
};

inline void collect_free_variables(const Formula& f, std::set<std::string>& out,
                                   std::set<std::string>& bound) {
  switch (f.kind) {
    case Formula::Kind::Atom:
      for (const auto& [v, k] : f.atom->term.coeffs)
        if (!bound.count(v)) out.insert(v);
      break;
    case Formula::Kind::Exists: {
      bool fresh = bound.insert(f.var).second;
      collect_free_variables(f.children[0], out, bound);
      if (fresh) bound.erase(f.var);
      break;
    }
    default:
      for (const auto& c : f.children) collect_free_variables(c, out, bound);
  }
}

inline std::set<std::string> free_variables(const Formula& f) {
  std::set<std::string> out, bound;
  collect_free_variables(f, out, bound);
  return out;
}

// Substitutes a concrete value for a free variable.  Under Z1 the value must
// be an integer.
inline Formula substitute(const Formula& f, const std::string& name, const Rat& value,
                          Theory theory) {
  if (theory == Theory::Z1 && !is_integral(value))
    throw theory_error("substitute: non-integer value under Z1");
  Formula r = f;
  switch (f.kind) {
    case Formula::Kind::Atom:
      r.atom->term = f.atom->term.substituted(name, value);
      break;
    case Formula::Kind::Exists:
      if (f.var == name) return r;  // shadowed
      r.children[0] = substitute(f.children[0], name, value, theory);
      break;
    default:
      for (auto& c : r.children) c = substitute(c, name, value, theory);
  }
  return r;
}

// --- per-prime conditions -------------------------------------------------------

// NNF boolean combination of U[p,l]-literals at a single prime p, over one
// distinguished variable plus parameter terms.
struct PCondition {
  struct Lit {
    bool negated = false;
    Term term;
    long level = 0;

    friend bool operator==(const Lit& a, const Lit& b) {
      return a.negated == b.negated && a.level == b.level && a.term == b.term;
    }
  };

  struct Node {
    enum class Kind { True, False, Lit, And, Or };
    Kind kind = Kind::True;
    Lit lit;                 // Kind::Lit
    std::vector<Node> kids;  // And / Or

    static Node truth() { return Node{}; }
    static Node falsity() {
      Node n;
      n.kind = Kind::False;
      return n;
    }
    static Node literal(Lit l) {
      Node n;
      n.kind = Kind::Lit;
      n.lit = std::move(l);
      return n;
    }
    static Node conj(std::vector<Node> kids) {
      if (kids.empty()) return truth();
      if (kids.size() == 1) return std::move(kids[0]);
      Node n;
      n.kind = Kind::And;
      n.kids = std::move(kids);
      return n;
    }
    static Node disj(std::vector<Node> kids) {
      if (kids.empty()) return falsity();
      if (kids.size() == 1) return std::move(kids[0]);
      Node n;
      n.kind = Kind::Or;
      n.kids = std::move(kids);
      return n;
    }
  };

  Int p = 2;
  std::string var = "x";  // the distinguished variable
  Node root;

  bool trivially_true() const { return root.kind == Node::Kind::True; }

  // Largest literal level occurring anywhere (0 when there are no literals).
  long max_level() const {
    long best = 0;
    bool seen = false;
    walk(root, [&](const Lit& l) {
      if (!seen || l.level > best) best = l.level;
      seen = true;
    });
    return seen ? std::max(best, 0L) : 0;
  }

  template <class F>
  static void walk(const Node& n, F&& visit) {
    if (n.kind == Node::Kind::Lit) {
      visit(n.lit);
      return;
    }
    for (const auto& k : n.kids) walk(k, visit);
  }
};

// --- special formulas and G-systems ------------------------------------------

// Shape of a normalized conjunction: per-prime conditions plus n positive and
// n' negative P_m-constraints, all sharing the x-coefficient k.
struct SpecialFormula {
  Int k = 1;                       // common coefficient of x, k != 0
  Int m = 1;                       // P-subscript, m >= 1
  std::map<Int, PCondition> theta; // nontrivial entries only
  int n = 0;                       // positive P-constraint count
  int nprime = 0;                  // negative P-constraint count
};

// A special formula instantiated with concrete, pairwise distinct parameters:
//   theta  and  /\_i  k x + c_i in P_m  and  /\_i  k x + cp_i not in P_m.
struct GSystem {
  SpecialFormula shape;
  std::vector<Rat> c;   // size shape.n
  std::vector<Rat> cp;  // size shape.nprime
};

namespace detail {

inline Formula formula_of_pnode(const PCondition::Node& n, const Int& p) {
  using K = PCondition::Node::Kind;
  switch (n.kind) {
    case K::True: return Formula::make_true();
    case K::False: return Formula::make_false();
    case K::Lit: {
      Formula a = Formula::make_atom(Atom::in_U(n.lit.term, p, n.lit.level));
      return n.lit.negated ? Formula::make_not(std::move(a)) : a;
    }
    case K::And: {
      std::vector<Formula> kk;
      for (const auto& k : n.kids) kk.push_back(formula_of_pnode(k, p));
      return Formula::make_and(std::move(kk));
    }
    default: {
      std::vector<Formula> kk;
      for (const auto& k : n.kids) kk.push_back(formula_of_pnode(k, p));
      return Formula::make_or(std::move(kk));
    }
  }
}

}  // namespace detail

// The defining formula of a per-prime condition (a combination of U-atoms).
inline Formula formula_of_pcondition(const PCondition& cond) {
  return detail::formula_of_pnode(cond.root, cond.p);
}

// The defining quantifier-free formula of a G-system in the variable `var`.
inline Formula gsystem_formula(const GSystem& g, const std::string& var = "x") {
  std::vector<Formula> kids;
  for (const auto& [p, cond] : g.shape.theta) kids.push_back(formula_of_pcondition(cond));
  for (const auto& ci : g.c) {
    Term t = Term::variable(var, g.shape.k);
    t += Term(ci);
    kids.push_back(Formula::make_atom(Atom::in_P(std::move(t), g.shape.m)));
  }
  for (const auto& ci : g.cp) {
    Term t = Term::variable(var, g.shape.k);
    t += Term(ci);
    kids.push_back(Formula::make_not(Formula::make_atom(Atom::in_P(std::move(t), g.shape.m))));
  }
  return Formula::make_and(std::move(kids));
}

// --- satisfiability results ----------------------------------------------------

enum class SatStatus { Sat, SatUnverified, Unsat };

inline const char* status_name(SatStatus s) {
  switch (s) {
    case SatStatus::Sat: return "sat";
    case SatStatus::SatUnverified: return "sat-unverified";
    default: return "unsat";
  }
}

struct SatCertificate {
  std::optional<Int> prime;  // failing prime for local refutations
  Int modulus = 1;           // residue modulus the refutation exhausted
  std::string analysis;
};

struct SearchStats {
  std::uint64_t candidates_tested = 0;
  std::uint64_t sieve_windows = 0;

  SearchStats& operator+=(const SearchStats& o) {
    candidates_tested += o.candidates_tested;
    sieve_windows += o.sieve_windows;
    return *this;
  }
};

struct SatResult {
  SatStatus status = SatStatus::Unsat;
  std::optional<Rat> witness;
  std::optional<SatCertificate> certificate;
  SearchStats stats;
};

// --- validation ----------------------------------------------------------------

namespace detail {

inline void validate_atom(const Atom& a, Theory theory) {
  switch (a.kind) {
    case AtomKind::InU:
      if (a.p < 2 || !is_prime(a.p))
        throw theory_error("U[p,l]: p must be prime, got " + a.p.get_str());
      break;
    case AtomKind::InP:
      if (a.m < 1) throw theory_error("P[m]: m must be a positive integer");
      break;
    case AtomKind::LtZero:
      if (theory != Theory::Q2)
        throw theory_error("order atoms require the ordered theory Q2");
      break;
    case AtomKind::EqZero:
      break;
  }
  if (theory == Theory::Z1 && !is_integral(a.term.constant))
    throw theory_error("non-integer constant under Z1");
}

inline void validate_rec(const Formula& f, Theory theory, bool outermost) {
  switch (f.kind) {
    case Formula::Kind::Atom:
      validate_atom(*f.atom, theory);
      break;
    case Formula::Kind::Exists:
      if (!outermost)
        throw theory_error("quantifiers are only allowed outermost, at depth <= 1");
      validate_rec(f.children[0], theory, false);
      break;
    default:
      for (const auto& c : f.children) validate_rec(c, theory, false);
  }
}

}  // namespace detail

// Checks theory constraints: order atoms only under Q2, integral constants
// under Z1, primes prime, P-subscripts positive, quantifier depth at most one
// and only outermost.
inline void validate(const Formula& f, Theory theory) {
  detail::validate_rec(f, theory, true);
}

}  // namespace sqf
