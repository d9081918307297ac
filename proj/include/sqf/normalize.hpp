#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sqf/core.hpp"
#include "sqf/ints.hpp"
#include "sqf/numtheory.hpp"

namespace sqf {

/** Thrown when DNF conversion (including case splits) exceeds the cap. */
class disjunct_limit_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kDefaultDisjunctCap = 4096;

/**
 * A prime threshold: B exceeds |k| and n, and every theta_p with p > B is
 * trivial.  Above B, local satisfiability is automatic, so solvers only
 * examine primes up to B.
 */
struct Boundary {
  Int B = 1;
};

/**
 * One disjunct of the normal form with parameters left as terms: the
 * conjunction of the guards, the system atoms at shared (k, m), and the
 * residual atoms is equivalent to the source disjunct.
 */
struct SymbolicDisjunct {
  bool guard = true;            // conjunction of the ground literals already decided
  std::vector<Formula> guards;  // parameter conditions not yet decidable
  Int k = 1;
  Int m = 1;
  std::map<Int, PCondition> theta;
  std::vector<Term> c;   // parameter terms of positive P-constraints
  std::vector<Term> cp;  // parameter terms of negative P-constraints
  std::vector<Formula> residual_eq;   // =0 literals in the variable
  std::vector<Formula> residual_ord;  // <0 literals in the variable
};

/** A disjunct with concrete parameters: guard ∧ system ∧ residuals. */
struct NormalizedDisjunct {
  bool guard = true;
  GSystem system;
  std::vector<Formula> residual_eq;
  std::vector<Formula> residual_ord;
};

// --- single-atom rewrites --------------------------------------------------

/**
 * Divides an InU atom by h: given h·a ∈ U[p,l], returns a ∈ U[p, l − v_p(h)].
 * Every coefficient of the term must be divisible by h.
 */
inline Atom rewrite_scale_U(const Int& h, const Atom& atom) {
  if (h == 0) throw std::invalid_argument("rewrite_scale_U: h must be nonzero");
  if (atom.kind != AtomKind::InU)
    throw std::invalid_argument("rewrite_scale_U: expected an InU atom");
  Term t;
  for (const auto& [v, k] : atom.term.coeffs) {
    if (k % h != 0)
      throw std::invalid_argument("rewrite_scale_U: term is not a multiple of h");
    t.coeffs[v] = k / h;
  }
  t.constant = atom.term.constant / Rat(h);
  t.constant.canonicalize();
  return Atom::in_U(std::move(t), atom.p, atom.l - vp(atom.p, abs_int(h)));
}

/**
 * Divides an InP atom by h: h·a ∈ P_m holds iff a ∈ P_m and, for every prime
 * p dividing h, a ∉ U[p, 2 + v_p(m) − v_p(h)].
 */
inline Formula rewrite_scale_P(const Int& h, const Atom& atom) {
  if (h == 0) throw std::invalid_argument("rewrite_scale_P: h must be nonzero");
  if (atom.kind != AtomKind::InP)
    throw std::invalid_argument("rewrite_scale_P: expected an InP atom");
  Term t;
  for (const auto& [v, k] : atom.term.coeffs) {
    if (k % h != 0)
      throw std::invalid_argument("rewrite_scale_P: term is not a multiple of h");
    t.coeffs[v] = k / h;
  }
  t.constant = atom.term.constant / Rat(h);
  t.constant.canonicalize();

  std::vector<Formula> kids;
  kids.push_back(Formula::make_atom(Atom::in_P(t, atom.m)));
  for (const auto& [p, e] : factor_fully(abs_int(h)).factors) {
    long level = 2 + vp(p, atom.m) - static_cast<long>(e);
    kids.push_back(Formula::make_not(Formula::make_atom(Atom::in_U(t, p, level))));
  }
  return Formula::make_and(std::move(kids));
}

/** Multiplies an InP atom by h: a ∈ P_m iff h·a ∈ P_{m·|h|}. */
inline Atom rewrite_lift_P(const Int& h, const Atom& atom) {
  if (h == 0) throw std::invalid_argument("rewrite_lift_P: h must be nonzero");
  if (atom.kind != AtomKind::InP)
    throw std::invalid_argument("rewrite_lift_P: expected an InP atom");
  return Atom::in_P(h * atom.term, atom.m * abs_int(h));
}

// --- ground evaluation -------------------------------------------------------

/**
 * Evaluates a quantifier-free formula whose atoms carry constant terms.
 * Throws std::invalid_argument if a variable remains.
 */
inline bool eval_ground(const Formula& f, Theory theory, const ExactnessPolicy& policy = {}) {
  switch (f.kind) {
    case Formula::Kind::Atom: {
      const Atom& a = *f.atom;
      if (!a.term.coeffs.empty())
        throw std::invalid_argument("eval_ground: term contains a variable");
      const Rat& v = a.term.constant;
      switch (a.kind) {
        case AtomKind::InU:
          return is_in_U(a.p, a.l, v);
        case AtomKind::InP:
          return is_in_Pm(a.m, v, policy);
        case AtomKind::EqZero:
          return v == 0;
        case AtomKind::LtZero:
          if (theory != Theory::Q2) throw theory_error("order atom outside q2");
          return v < 0;
      }
      return false;
    }
    case Formula::Kind::Not:
      return !eval_ground(f.children[0], theory, policy);
    case Formula::Kind::And:
      for (const auto& k : f.children)
        if (!eval_ground(k, theory, policy)) return false;
      return true;
    case Formula::Kind::Or:
      for (const auto& k : f.children)
        if (eval_ground(k, theory, policy)) return true;
      return false;
    default:
      throw std::invalid_argument("eval_ground: quantifier present");
  }
}

namespace detail {

// Negation-normal form: negations end up directly over atoms.
inline Formula to_nnf(const Formula& f, bool neg) {
  switch (f.kind) {
    case Formula::Kind::Atom:
      return neg ? Formula::make_not(f) : f;
    case Formula::Kind::Not:
      return to_nnf(f.children[0], !neg);
    case Formula::Kind::And:
    case Formula::Kind::Or: {
      std::vector<Formula> kids;
      kids.reserve(f.children.size());
      for (const auto& k : f.children) kids.push_back(to_nnf(k, neg));
      bool conj = (f.kind == Formula::Kind::And) != neg;
      return conj ? Formula::make_and(std::move(kids)) : Formula::make_or(std::move(kids));
    }
    default:
      throw std::invalid_argument("to_gsystems: formula must be quantifier-free");
  }
}

template <class Visit>
void walk_atoms(const Formula& f, Visit&& visit) {
  if (f.kind == Formula::Kind::Atom) {
    visit(*f.atom);
    return;
  }
  for (const auto& k : f.children) walk_atoms(k, visit);
}

// Rewrites one literal to the shared coefficient K and P-subscript M.
inline Formula rescale_literal(const Atom& a, bool neg, const std::string& var, const Int& K,
                               const Int& M, const Factorization& mfac) {
  auto wrap = [&](Atom b) {
    Formula g = Formula::make_atom(std::move(b));
    return neg ? Formula::make_not(std::move(g)) : g;
  };
  Int ka = a.term.coeff_of(var);
  if (ka == 0) return wrap(a);
  switch (a.kind) {
    case AtomKind::InU: {
      Int h = K / ka;
      if (h == 1) return wrap(a);
      return wrap(Atom::in_U(h * a.term, a.p, a.l + vp(a.p, abs_int(h))));
    }
    case AtomKind::InP: {
      Int h = K / ka;
      Int mlift = a.m * abs_int(h);
      Term t = h * a.term;
      std::vector<Formula> kids;
      Formula base = Formula::make_atom(Atom::in_P(t, M));
      kids.push_back(neg ? Formula::make_not(std::move(base)) : std::move(base));
      for (const auto& [p, e] : mfac.factors) {
        long have = vp(p, mlift);
        if (have < static_cast<long>(e)) {
          Formula u = Formula::make_atom(Atom::in_U(t, p, 2 + have));
          kids.push_back(neg ? std::move(u) : Formula::make_not(std::move(u)));
        }
      }
      return neg ? Formula::make_or(std::move(kids)) : Formula::make_and(std::move(kids));
    }
    default:
      return wrap(a);  // =0 and <0 stay at their own scale in the residuals
  }
}

inline Formula rescale_tree(const Formula& f, const std::string& var, const Int& K,
                            const Int& M, const Factorization& mfac) {
  switch (f.kind) {
    case Formula::Kind::Atom:
      return rescale_literal(*f.atom, false, var, K, M, mfac);
    case Formula::Kind::Not:
      return rescale_literal(*f.children[0].atom, true, var, K, M, mfac);
    case Formula::Kind::And:
    case Formula::Kind::Or: {
      std::vector<Formula> kids;
      kids.reserve(f.children.size());
      for (const auto& k : f.children) kids.push_back(rescale_tree(k, var, K, M, mfac));
      return f.kind == Formula::Kind::And ? Formula::make_and(std::move(kids))
                                          : Formula::make_or(std::move(kids));
    }
    default:
      throw std::invalid_argument("to_gsystems: formula must be quantifier-free");
  }
}

// DNF as lists of literals; throws past the cap.
inline std::vector<std::vector<Formula>> to_dnf(const Formula& f, std::size_t cap) {
  switch (f.kind) {
    case Formula::Kind::Atom:
    case Formula::Kind::Not:
      return {{f}};
    case Formula::Kind::Or: {
      std::vector<std::vector<Formula>> out;
      for (const auto& k : f.children) {
        auto sub = to_dnf(k, cap);
        for (auto& s : sub) out.push_back(std::move(s));
        if (out.size() > cap) throw disjunct_limit_error("disjunct cap exceeded");
      }
      return out;
    }
    case Formula::Kind::And: {
      std::vector<std::vector<Formula>> out{{}};
      for (const auto& k : f.children) {
        auto sub = to_dnf(k, cap);
        std::vector<std::vector<Formula>> next;
        next.reserve(std::min(out.size() * sub.size(), cap + 1));
        for (const auto& lhs : out)
          for (const auto& rhs : sub) {
            next.push_back(lhs);
            next.back().insert(next.back().end(), rhs.begin(), rhs.end());
            if (next.size() > cap) throw disjunct_limit_error("disjunct cap exceeded");
          }
        out = std::move(next);
      }
      return out;
    }
    default:
      throw std::invalid_argument("to_gsystems: formula must be quantifier-free");
  }
}

inline bool contains_term(const std::vector<Term>& list, const Term& t) {
  for (const auto& u : list)
    if (u == t) return true;
  return false;
}

}  // namespace detail

namespace detail {

// Shared pipeline; keeps disjuncts whose guard came out false.
inline std::vector<SymbolicDisjunct> normalize_pipeline(
    const Formula& f, const std::string& var, Theory theory, std::size_t max_disjuncts,
    const ExactnessPolicy& policy) {
  validate(f, theory);
  Formula nnf = detail::to_nnf(f, false);

  // Shared coefficient K: the lcm of the |coefficients| of `var` over the
  // membership atoms; then the shared subscript M over the lifted P-atoms.
  Int K = 1;
  detail::walk_atoms(nnf, [&](const Atom& a) {
    if (a.kind != AtomKind::InU && a.kind != AtomKind::InP) return;
    Int ka = a.term.coeff_of(var);
    if (ka != 0) K = lcm_int(K, abs_int(ka));
  });
  Int M = 1;
  detail::walk_atoms(nnf, [&](const Atom& a) {
    if (a.kind != AtomKind::InP) return;
    Int ka = a.term.coeff_of(var);
    if (ka != 0) M = lcm_int(M, a.m * (K / abs_int(ka)));
  });
  Factorization mfac = factor_fully(M);

  Formula scaled = detail::rescale_tree(nnf, var, K, M, mfac);
  auto disjuncts = detail::to_dnf(scaled, max_disjuncts);

  std::vector<SymbolicDisjunct> out;
  std::size_t total = 0;
  for (const auto& lits : disjuncts) {
    SymbolicDisjunct base;
    base.k = K;
    base.m = M;
    std::map<Int, std::vector<PCondition::Lit>> theta_lits;

    for (const Formula& lit : lits) {
      bool neg = lit.kind == Formula::Kind::Not;
      const Atom& a = neg ? *lit.children[0].atom : *lit.atom;
      bool has_x = a.term.coeff_of(var) != 0;
      if (!has_x) {
        if (a.term.coeffs.empty()) {
          if (base.guard) base.guard = eval_ground(lit, theory, policy);
        } else {
          base.guards.push_back(lit);
        }
        continue;
      }
      switch (a.kind) {
        case AtomKind::InU:
          theta_lits[a.p].push_back(PCondition::Lit{neg, a.term, a.l});
          break;
        case AtomKind::InP: {
          Term param = a.term.without(var);
          auto& side = neg ? base.cp : base.c;
          if (!detail::contains_term(side, param)) side.push_back(std::move(param));
          break;
        }
        case AtomKind::EqZero:
          base.residual_eq.push_back(lit);
          break;
        case AtomKind::LtZero:
          base.residual_ord.push_back(lit);
          break;
      }
    }

    // Deduplicate theta literals and assemble the per-prime conditions.
    for (auto& [p, ls] : theta_lits) {
      std::vector<PCondition::Node> nodes;
      std::vector<PCondition::Lit> seen;
      for (auto& l : ls) {
        bool dup = false;
        for (const auto& s : seen)
          if (s == l) {
            dup = true;
            break;
          }
        if (dup) continue;
        seen.push_back(l);
        nodes.push_back(PCondition::Node::literal(std::move(l)));
      }
      PCondition cond;
      cond.p = p;
      cond.var = var;
      cond.root = PCondition::Node::conj(std::move(nodes));
      base.theta.emplace(p, std::move(cond));
    }

    // Parameter terms that appear only inside theta must be classified: split
    // each disjunct on kx+s ∈ P_M versus kx+s ∉ P_M.
    std::vector<Term> split_terms;
    for (const auto& [p, cond] : base.theta)
      PCondition::walk(cond.root, [&](const PCondition::Lit& l) {
        Term s = l.term.without(var);
        if (!detail::contains_term(base.c, s) && !detail::contains_term(base.cp, s) &&
            !detail::contains_term(split_terms, s))
          split_terms.push_back(std::move(s));
      });

    std::vector<SymbolicDisjunct> branches{std::move(base)};
    for (const Term& s : split_terms) {
      std::vector<SymbolicDisjunct> next;
      next.reserve(branches.size() * 2);
      for (const auto& b : branches) {
        SymbolicDisjunct pos = b;
        pos.c.push_back(s);
        SymbolicDisjunct negb = b;
        negb.cp.push_back(s);
        next.push_back(std::move(pos));
        next.push_back(std::move(negb));
      }
      branches = std::move(next);
      if (total + branches.size() > max_disjuncts)
        throw disjunct_limit_error("disjunct cap exceeded");
    }

    for (auto& b : branches) {
      // Cross-polarity distinctness: a parameter in both c and cp makes the
      // disjunct false; symbolic pairs become explicit ≠ conditions.
      for (const auto& ci : b.c) {
        for (const auto& cj : b.cp) {
          Term diff = ci - cj;
          if (diff.coeffs.empty()) {
            if (diff.constant == 0) b.guard = false;
          } else {
            b.guards.push_back(
                Formula::make_not(Formula::make_atom(Atom::eq_zero(diff))));
          }
        }
      }
      ++total;
      out.push_back(std::move(b));
    }
    if (total > max_disjuncts) throw disjunct_limit_error("disjunct cap exceeded");
  }
  return out;
}

}  // namespace detail

/**
 * Reduces a quantifier-free formula to a disjunction of guarded systems that
 * share a single coefficient k of `var` and a single subscript m, with =0 and
 * <0 literals set aside as residuals.  Parameters (free variables other than
 * `var`) remain as terms; parameter conditions that cannot be decided yet are
 * collected in `guards`.  Disjuncts decided false are dropped.
 */
inline std::vector<SymbolicDisjunct> to_gsystems_symbolic(
    const Formula& f, const std::string& var, Theory theory,
    std::size_t max_disjuncts = kDefaultDisjunctCap, const ExactnessPolicy& policy = {}) {
  auto all = detail::normalize_pipeline(f, var, theory, max_disjuncts, policy);
  std::vector<SymbolicDisjunct> kept;
  kept.reserve(all.size());
  for (auto& d : all)
    if (d.guard) kept.push_back(std::move(d));
  return kept;
}

/**
 * Concrete normal form: requires every parameter to be a value, so each
 * disjunct carries an evaluated guard and a GSystem.  Disjuncts whose
 * parameters collide across c/cp are kept with guard = false.
 */
inline std::vector<NormalizedDisjunct> to_gsystems(
    const Formula& f, const std::string& var, Theory theory,
    std::size_t max_disjuncts = kDefaultDisjunctCap, const ExactnessPolicy& policy = {}) {
  for (const auto& v : free_variables(f))
    if (v != var)
      throw std::invalid_argument("to_gsystems: parameters must be concrete values");

  auto sym = detail::normalize_pipeline(f, var, theory, max_disjuncts, policy);
  std::vector<NormalizedDisjunct> out;
  out.reserve(sym.size());
  for (auto& d : sym) {
    NormalizedDisjunct nd;
    nd.guard = d.guard;
    for (const auto& g : d.guards) {
      if (!nd.guard) break;
      nd.guard = eval_ground(g, theory, policy);
    }
    nd.system.shape.k = std::move(d.k);
    nd.system.shape.m = std::move(d.m);
    nd.system.shape.theta = std::move(d.theta);
    nd.system.shape.n = static_cast<int>(d.c.size());
    nd.system.shape.nprime = static_cast<int>(d.cp.size());
    for (auto& t : d.c) nd.system.c.push_back(t.constant);
    for (auto& t : d.cp) nd.system.cp.push_back(t.constant);
    nd.residual_eq = std::move(d.residual_eq);
    nd.residual_ord = std::move(d.residual_ord);
    out.push_back(std::move(nd));
  }
  return out;
}

/** The defining formula of a symbolic disjunct, for evaluation in tests. */
inline Formula formula_of_symbolic_disjunct(const SymbolicDisjunct& d, const std::string& var) {
  std::vector<Formula> kids;
  if (!d.guard) return Formula::make_false();
  for (const auto& g : d.guards) kids.push_back(g);
  for (const auto& [p, cond] : d.theta) kids.push_back(formula_of_pcondition(cond));
  for (const auto& t : d.c) {
    Term full = Term::variable(var, d.k) + t;
    kids.push_back(Formula::make_atom(Atom::in_P(std::move(full), d.m)));
  }
  for (const auto& t : d.cp) {
    Term full = Term::variable(var, d.k) + t;
    kids.push_back(
        Formula::make_not(Formula::make_atom(Atom::in_P(std::move(full), d.m))));
  }
  for (const auto& g : d.residual_eq) kids.push_back(g);
  for (const auto& g : d.residual_ord) kids.push_back(g);
  return Formula::make_and(std::move(kids));
}

/** The defining formula of a concrete disjunct. */
inline Formula formula_of_disjunct(const NormalizedDisjunct& d, const std::string& var) {
  if (!d.guard) return Formula::make_false();
  std::vector<Formula> kids;
  Formula sys = gsystem_formula(d.system, var);
  if (sys.kind == Formula::Kind::And && !sys.is_true_constant()) {
    for (auto& k : sys.children) kids.push_back(std::move(k));
  } else if (!sys.is_true_constant()) {
    kids.push_back(std::move(sys));
  }
  for (const auto& g : d.residual_eq) kids.push_back(g);
  for (const auto& g : d.residual_ord) kids.push_back(g);
  return Formula::make_and(std::move(kids));
}

/** Disjunction over all disjuncts; evaluates identically to the source formula. */
inline Formula formula_of_disjuncts(const std::vector<NormalizedDisjunct>& ds,
                                    const std::string& var) {
  std::vector<Formula> kids;
  for (const auto& d : ds)
    if (d.guard) kids.push_back(formula_of_disjunct(d, var));
  return Formula::make_or(std::move(kids));
}

// --- conjugation and boundary ------------------------------------------------

/**
 * The h-conjugate system: k is unchanged, m becomes |h|·m, each theta level
 * shifts by v_p(h), and parameters scale by h.  Solutions correspond under
 * a ↦ h·a: eval(ψ, a) = eval(ψ^h, h·a).
 */
inline GSystem conjugate(const GSystem& g, const Int& h) {
  if (h == 0) throw std::invalid_argument("conjugate: h must be nonzero");
  GSystem r;
  r.shape.k = g.shape.k;
  r.shape.m = g.shape.m * abs_int(h);
  r.shape.n = g.shape.n;
  r.shape.nprime = g.shape.nprime;
  for (const auto& [p, cond] : g.shape.theta) {
    PCondition cc = cond;
    long shift = vp(p, abs_int(h));
    std::function<void(PCondition::Node&)> fix = [&](PCondition::Node& node) {
      if (node.kind == PCondition::Node::Kind::Lit) {
        // term k·x + s  ↦  k·x + h·s, level + v_p(h)
        Int kx = node.lit.term.coeff_of(cond.var);
        Term s = node.lit.term.without(cond.var);
        Term scaled = Term::variable(cond.var, kx) + h * s;
        node.lit.term = std::move(scaled);
        node.lit.level += shift;
        return;
      }
      for (auto& k : node.kids) fix(k);
    };
    fix(cc.root);
    r.shape.theta.emplace(p, std::move(cc));
  }
  for (const auto& ci : g.c) {
    Rat v = ci * Rat(h);
    v.canonicalize();
    r.c.push_back(std::move(v));
  }
  for (const auto& ci : g.cp) {
    Rat v = ci * Rat(h);
    v.canonicalize();
    r.cp.push_back(std::move(v));
  }
  return r;
}

/**
 * The least B with B > max(|k|, n) such that theta_p is trivial for every
 * prime p > B.  A boundary for ψ remains a boundary for every conjugate ψ^h.
 */
inline Boundary boundary(const GSystem& g) {
  Int B = std::max(abs_int(g.shape.k), Int(g.shape.n)) + 1;
  for (const auto& [p, cond] : g.shape.theta) {
    bool has_lit = false;
    PCondition::walk(cond.root, [&](const PCondition::Lit&) { has_lit = true; });
    if (has_lit && p > B) B = p;
  }
  return Boundary{std::move(B)};
}

}  // namespace sqf
