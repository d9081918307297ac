#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sqf/core.hpp"
#include "sqf/ints.hpp"
#include "sqf/normalize.hpp"
#include "sqf/numtheory.hpp"

namespace sqf {

/**
 * Outcome of a per-prime check.  A satisfiable certificate carries either an
 * integer residue class (over Z: every x ≡ residue mod modulus works) or a
 * rational point; refutations carry the exhausted modulus and a note.
 */
struct LocalCertificate {
  Int p = 2;
  bool satisfiable = false;
  std::optional<Int> residue;  // over Z: least witness residue
  Int modulus = 1;             // residue is taken modulo this power of p
  std::optional<Rat> point;    // over Q: an explicit witness
  std::string analysis;
};

/** CRT package: every a ≡ r (mod D) satisfies all per-prime conditions. */
struct CondenseResult {
  Int D = 1;
  Int r = 0;
};

/** Record that primes above the boundary need no local check. */
struct AboveBoundarySkip {
  Int B = 1;
};

// --- the p-condition of a system ----------------------------------------------

/**
 * The conjunction of theta_p with the exclusions kx+c_i ∉ U[p, 2+v_p(m)] for
 * the positive parameters c_i.  Satisfying it is necessary for solving the
 * system, and for p up to the boundary it is exactly what must be checked.
 */
inline PCondition associated_p_condition(const GSystem& g, const Int& p) {
  std::string var = g.shape.theta.empty() ? std::string("x") : g.shape.theta.begin()->second.var;
  std::vector<PCondition::Node> kids;
  auto it = g.shape.theta.find(p);
  if (it != g.shape.theta.end()) kids.push_back(it->second.root);
  long level = 2 + vp(p, g.shape.m);
  for (const auto& ci : g.c) {
    Term t = Term::variable(var, g.shape.k) + Term(ci);
    kids.push_back(PCondition::Node::literal(PCondition::Lit{true, std::move(t), level}));
  }
  PCondition cond;
  cond.p = p;
  cond.var = var;
  cond.root = PCondition::Node::conj(std::move(kids));
  return cond;
}

// --- evaluation of p-conditions at a point -------------------------------------

/** Truth of a p-condition at a concrete value of its variable. */
inline bool eval_pcondition(const PCondition& cond, const Rat& x) {
  std::function<bool(const PCondition::Node&)> go = [&](const PCondition::Node& n) -> bool {
    switch (n.kind) {
      case PCondition::Node::Kind::True:
        return true;
      case PCondition::Node::Kind::False:
        return false;
      case PCondition::Node::Kind::Lit: {
        Rat v = n.lit.term.evaluate({{cond.var, x}});
        bool in = is_in_U(cond.p, n.lit.level, v);
        return n.lit.negated ? !in : in;
      }
      case PCondition::Node::Kind::And:
        for (const auto& k : n.kids)
          if (!go(k)) return false;
        return true;
      case PCondition::Node::Kind::Or:
        for (const auto& k : n.kids)
          if (go(k)) return true;
        return false;
    }
    return false;
  };
  return go(cond.root);
}

namespace detail {

// v_p as an optional: nullopt encodes +infinity (the value 0).
inline std::optional<long> vp_opt(const Int& p, const Rat& a) {
  if (a == 0) return std::nullopt;
  return vp(p, a);
}

inline bool vp_at_least(const Int& p, const Rat& a, long l) {
  auto v = vp_opt(p, a);
  return !v.has_value() || *v >= l;
}

// A coset center + U_{p,level}; the fundamental region of the Q-side search.
struct Ball {
  Rat center;
  long level;
};

// Nested-or-disjoint: the intersection is empty or the deeper ball.
inline std::optional<Ball> intersect(const Int& p, const Ball& a, const Ball& b) {
  const Ball& shallow = a.level <= b.level ? a : b;
  const Ball& deep = a.level <= b.level ? b : a;
  if (vp_at_least(p, shallow.center - deep.center, shallow.level)) return deep;
  return std::nullopt;
}

// The residue of a p-integral rational modulo p^e.
inline Int residue_mod(const Rat& a, const Int& pe) {
  Int u = num(a), w = den(a);
  Int winv;
  if (mpz_invert(winv.get_mpz_t(), w.get_mpz_t(), pe.get_mpz_t()) == 0)
    throw std::domain_error("residue_mod: denominator not invertible");
  return mod_floor(u * winv, pe);
}

// First point of `region` outside every ball of `neg` (each strictly inside
// `region`), or nullopt when the negatives cover it.  Subdivision into the p
// children proceeds only where a negative ball overlaps.
inline std::optional<Rat> carve(const Int& p, const Ball& region, std::vector<Ball> neg) {
  if (neg.empty()) return region.center;
  Rat scale = region.level >= 0
                  ? Rat(pow_int(p, static_cast<unsigned long>(region.level)))
                  : Rat(1, pow_int(p, static_cast<unsigned long>(-region.level)));

  // Digit of each negative's offset at this depth.
  std::map<Int, std::vector<Ball>> by_digit;
  for (const auto& nb : neg) {
    if (nb.level <= region.level) return std::nullopt;  // covers the region
    Rat off = (nb.center - region.center) / scale;
    by_digit[residue_mod(off, p)].push_back(nb);
  }
  if (Int(static_cast<long>(by_digit.size())) < p) {
    // Some child is untouched; pick the smallest free digit.
    Int d = 0;
    while (by_digit.count(d)) d += 1;
    return region.center + Rat(d) * scale;
  }
  for (auto& [digit, kids] : by_digit) {
    Ball child{region.center + Rat(digit) * scale, region.level + 1};
    bool dead = false;
    std::vector<Ball> inner;
    for (auto& nb : kids) {
      if (nb.level <= child.level &&
          vp_at_least(p, nb.center - child.center, nb.level)) {
        dead = true;
        break;
      }
      inner.push_back(nb);
    }
    if (dead) continue;
    if (auto w = carve(p, child, std::move(inner))) return w;
  }
  return std::nullopt;
}

// One DNF conjunct of a p-condition as signed balls; ground literals fold in.
struct BallConjunct {
  bool ground_false = false;
  std::optional<Ball> positive;  // intersection of the positive balls
  std::vector<Ball> negatives;
};

inline std::optional<Rat> solve_ball_conjunct(const Int& p, BallConjunct cj) {
  if (cj.ground_false) return std::nullopt;
  if (!cj.positive.has_value()) {
    // No positive constraint: step below every negative ball's reach.
    if (cj.negatives.empty()) return Rat(0);
    long lo = cj.negatives.front().level;
    for (const auto& nb : cj.negatives) {
      lo = std::min(lo, nb.level);
      if (auto v = vp_opt(p, nb.center)) lo = std::min(lo, *v);
    }
    long e = lo - 1;
    Rat x = e >= 0 ? Rat(pow_int(p, static_cast<unsigned long>(e)))
                   : Rat(1, pow_int(p, static_cast<unsigned long>(-e)));
    return x;
  }
  // Keep only negatives meeting the region; a negative containing it refutes.
  Ball region = *cj.positive;
  std::vector<Ball> inside;
  for (const auto& nb : cj.negatives) {
    if (nb.level <= region.level) {
      if (vp_at_least(p, nb.center - region.center, nb.level)) return std::nullopt;
      continue;  // disjoint
    }
    if (vp_at_least(p, nb.center - region.center, region.level)) inside.push_back(nb);
  }
  return carve(p, region, std::move(inside));
}

// DNF of a PCondition body over its literals.
inline std::vector<std::vector<PCondition::Lit>> pcondition_dnf(const PCondition::Node& n) {
  using Node = PCondition::Node;
  switch (n.kind) {
    case Node::Kind::True:
      return {{}};
    case Node::Kind::False:
      return {};
    case Node::Kind::Lit:
      return {{n.lit}};
    case Node::Kind::Or: {
      std::vector<std::vector<PCondition::Lit>> out;
      for (const auto& k : n.kids)
        for (auto& c : pcondition_dnf(k)) out.push_back(std::move(c));
      return out;
    }
    case Node::Kind::And: {
      std::vector<std::vector<PCondition::Lit>> out{{}};
      for (const auto& k : n.kids) {
        auto sub = pcondition_dnf(k);
        std::vector<std::vector<PCondition::Lit>> next;
        for (const auto& a : out)
          for (const auto& b : sub) {
            next.push_back(a);
            next.back().insert(next.back().end(), b.begin(), b.end());
          }
        out = std::move(next);
      }
      return out;
    }
  }
  return {};
}

}  // namespace detail

/**
 * Satisfiability of a p-condition.  Over Z the residues modulo p^L are
 * enumerated, L being the largest positive literal level; over Q each literal
 * kx+t ∈ U[p,l] becomes the ball x ∈ −t/k + U[p, l−v_p(k)] and emptiness of
 * ball-minus-balls is decided by subdividing into the p children level by
 * level.  Z moduli beyond scan_limit fall back to the ball method on the
 * p-integral region, which is equivalent.
 */
inline LocalCertificate p_condition_satisfiable(const PCondition& cond, Theory theory,
                                                const Int& scan_limit = Int(1'000'000)) {
  LocalCertificate cert;
  cert.p = cond.p;
  const Int& p = cond.p;

  long L = std::max(cond.max_level(), 1L);
  Int pL = pow_int(p, static_cast<unsigned long>(L));

  if (theory == Theory::Z1 && pL <= scan_limit) {
    for (Int r = 0; r < pL; r += 1) {
      if (eval_pcondition(cond, Rat(r))) {
        cert.satisfiable = true;
        cert.residue = r;
        cert.modulus = pL;
        cert.analysis = "residue scan";
        return cert;
      }
    }
    cert.satisfiable = false;
    cert.modulus = pL;
    cert.analysis = "no residue modulo " + pL.get_str() + " satisfies the condition";
    return cert;
  }

  // Ball algebra over Q; over Z additionally require v_p(x) >= 0.
  auto conjuncts = detail::pcondition_dnf(cond.root);
  for (auto& lits : conjuncts) {
    detail::BallConjunct cj;
    if (theory == Theory::Z1) cj.positive = detail::Ball{Rat(0), 0};
    for (const auto& lit : lits) {
      Int k = lit.term.coeff_of(cond.var);
      Term rest = lit.term.without(cond.var);
      if (!rest.coeffs.empty())
        throw std::invalid_argument("p_condition_satisfiable: unbound parameter in literal");
      if (k == 0) {
        bool in = is_in_U(p, lit.level, rest.constant);
        if (in == lit.negated) cj.ground_false = true;
        continue;
      }
      Rat center = -rest.constant / Rat(k);
      center.canonicalize();
      detail::Ball b{std::move(center), lit.level - vp(p, k)};
      if (lit.negated) {
        cj.negatives.push_back(std::move(b));
      } else if (cj.positive.has_value()) {
        auto meet = detail::intersect(p, *cj.positive, b);
        if (!meet.has_value()) cj.ground_false = true;
        else cj.positive = *meet;
      } else {
        cj.positive = b;
      }
    }
    if (auto w = detail::solve_ball_conjunct(p, cj)) {
      cert.satisfiable = true;
      cert.point = *w;
      cert.analysis = "ball subdivision";
      if (theory == Theory::Z1) {
        // Lift the p-integral witness to a residue class.
        cert.modulus = pL;
        cert.residue = detail::residue_mod(*w, pL);
      }
      return cert;
    }
  }
  cert.satisfiable = false;
  cert.modulus = pL;
  cert.analysis = "the negative balls cover every admissible region";
  return cert;
}

/**
 * Local satisfiability of a system at p: builds the associated p-condition
 * and decides it.  Under Z1 the parameters must be integers.
 */
inline LocalCertificate p_satisfiable(const GSystem& g, const Int& p, Theory theory) {
  if (theory == Theory::Z1) {
    for (const auto& ci : g.c)
      if (!is_integral(ci)) throw theory_error("p_satisfiable: non-integer parameter under z1");
    for (const auto& ci : g.cp)
      if (!is_integral(ci)) throw theory_error("p_satisfiable: non-integer parameter under z1");
  }
  return p_condition_satisfiable(associated_p_condition(g, p), theory);
}

/**
 * Lemma-level skip record: above a valid boundary every prime is satisfiable,
 * so solvers check only p ≤ B.  Throws if B is not actually a boundary.
 */
inline AboveBoundarySkip trivially_satisfiable_above_boundary(const GSystem& g,
                                                              const Boundary& bound) {
  if (bound.B <= std::max(abs_int(g.shape.k), Int(g.shape.n)))
    throw std::invalid_argument("not a boundary: B must exceed |k| and n");
  for (const auto& [p, cond] : g.shape.theta) {
    bool has_lit = false;
    PCondition::walk(cond.root, [&](const PCondition::Lit&) { has_lit = true; });
    if (has_lit && p > bound.B)
      throw std::invalid_argument("not a boundary: theta is nontrivial above B");
  }
  return AboveBoundarySkip{bound.B};
}

/**
 * Combines the per-prime residue witnesses for p ≤ B into one class r mod D,
 * D = ∏ p^{l_p} with l_p the top level of the p-condition: every integer
 * a ≡ r (mod D) satisfies every p-condition up to the boundary.  The least
 * valid residue is chosen prime by prime.  Throws if some prime refutes.
 */
inline CondenseResult condense(const GSystem& g, const Boundary& bound,
                               Theory theory = Theory::Z1) {
  if (theory != Theory::Z1)
    throw theory_error("condense: defined over the integer theory");
  std::vector<std::pair<Int, Int>> parts;
  auto ps = prime_table(static_cast<std::uint32_t>(bound.B.get_ui()));
  for (std::uint32_t pu : *ps) {
    Int p(pu);
    if (p > bound.B) break;
    PCondition cond = associated_p_condition(g, p);
    long lp = cond.max_level();
    LocalCertificate cert = p_condition_satisfiable(cond, theory);
    if (!cert.satisfiable)
      throw std::invalid_argument("condense: locally unsatisfiable at p = " + p.get_str());
    if (lp == 0) continue;  // the condition is residue-independent
    Int plp = pow_int(p, static_cast<unsigned long>(lp));
    parts.emplace_back(mod_floor(*cert.residue, plp), plp);
  }
  auto [r, D] = crt(parts);
  return CondenseResult{D, r};
}

// --- one-variable elimination inside a p-condition ------------------------------

namespace detail {

// Sign-canonical literal term: leading coefficient (or the constant) positive.
inline Term sign_canonical(Term t) {
  bool flip = false;
  if (!t.coeffs.empty())
    flip = t.coeffs.begin()->second < 0;
  else
    flip = t.constant < 0;
  return flip ? -t : t;
}

inline PCondition::Node nconj(std::vector<PCondition::Node> kids) {
  std::vector<PCondition::Node> keep;
  for (auto& k : kids) {
    if (k.kind == PCondition::Node::Kind::True) continue;
    if (k.kind == PCondition::Node::Kind::False) return PCondition::Node::falsity();
    bool dup = false;
    if (k.kind == PCondition::Node::Kind::Lit)
      for (const auto& s : keep)
        if (s.kind == PCondition::Node::Kind::Lit && s.lit == k.lit) {
          dup = true;
          break;
        }
    if (!dup) keep.push_back(std::move(k));
  }
  return PCondition::Node::conj(std::move(keep));
}

inline PCondition::Node ndisj(std::vector<PCondition::Node> kids) {
  std::vector<PCondition::Node> keep;
  for (auto& k : kids) {
    if (k.kind == PCondition::Node::Kind::False) continue;
    if (k.kind == PCondition::Node::Kind::True) return PCondition::Node::truth();
    keep.push_back(std::move(k));
  }
  return PCondition::Node::disj(std::move(keep));
}

// A literal with the ground case folded to a truth value.
inline PCondition::Node eval_or_lit(const Int& p, bool negated, Term t, long level) {
  if (t.coeffs.empty()) {
    bool in = is_in_U(p, level, t.constant);
    return (in != negated) ? PCondition::Node::truth() : PCondition::Node::falsity();
  }
  return PCondition::Node::literal(
      PCondition::Lit{negated, sign_canonical(std::move(t)), level});
}

}  // namespace detail

/**
 * Eliminates the distinguished variable from a p-condition whose literal
 * terms may also mention parameter variables, returning an equivalent
 * p-condition on the parameters alone: ∃x cond(x, z) ⟺ result(z) over the
 * chosen theory.  Literals are scaled to a common coefficient of x, the
 * chosen positive literal is raised to the top level by a p^M-fold
 * disjunction over offsets, the remaining literals turn into conditions on
 * parameter differences, and the final one-literal step uses
 * t ∈ U[p, min(v_p(k), l)] over Z (truth over Q).
 */
inline PCondition eliminate_exists_local(const PCondition& cond, Theory theory,
                                         std::size_t max_branches = (1u << 16)) {
  using Node = PCondition::Node;
  const Int& p = cond.p;
  auto conjuncts = detail::pcondition_dnf(cond.root);

  std::vector<Node> out_disjuncts;
  for (auto& lits : conjuncts) {
    std::vector<PCondition::Lit> with_x;
    std::vector<Node> passthrough;
    for (auto& l : lits) {
      if (l.term.coeff_of(cond.var) == 0)
        passthrough.push_back(detail::eval_or_lit(p, l.negated, l.term, l.level));
      else
        with_x.push_back(l);
    }

    if (theory == Theory::Z1)
      with_x.push_back(PCondition::Lit{false, Term::variable(cond.var, 1), 0});

    bool any_positive = false;
    for (const auto& l : with_x)
      if (!l.negated) any_positive = true;

    if (with_x.empty() || !any_positive) {
      // Over Q a conjunction of non-memberships in x is always solvable.
      out_disjuncts.push_back(detail::nconj(std::move(passthrough)));
      continue;
    }

    // Common coefficient K of x across the literals.
    Int K = 1;
    for (const auto& l : with_x) K = lcm_int(K, abs_int(l.term.coeff_of(cond.var)));
    struct Scaled {
      bool negated;
      Term t;  // parameter part: literal is  K·x + t ∈ U[p, level]
      long level;
    };
    std::vector<Scaled> scaled;
    for (const auto& l : with_x) {
      Int h = K / l.term.coeff_of(cond.var);
      Term full = h * l.term;
      scaled.push_back(
          Scaled{l.negated, full.without(cond.var), l.level + vp(p, abs_int(h))});
    }

    // Choose the positive literal of greatest level and raise it to the top.
    std::size_t top = scaled.size();
    for (std::size_t i = 0; i < scaled.size(); ++i)
      if (!scaled[i].negated && (top == scaled.size() || scaled[i].level > scaled[top].level))
        top = i;
    long Lstar = scaled[top].level;
    for (const auto& s : scaled) Lstar = std::max(Lstar, s.level);
    long M = Lstar - scaled[top].level;

    Int branches = pow_int(p, static_cast<unsigned long>(M));
    if (branches > Int(static_cast<unsigned long>(max_branches)))
      throw disjunct_limit_error("level-raising branch cap exceeded");

    Int pl0 = pow_int(p, static_cast<unsigned long>(std::max(scaled[top].level, 0L)));
    Rat step = scaled[top].level >= 0
                   ? Rat(pl0)
                   : Rat(1, pow_int(p, static_cast<unsigned long>(-scaled[top].level)));

    for (Int i = 0; i < branches; i += 1) {
      Term t0 = scaled[top].t + Term(Rat(i) * step);
      std::vector<Node> kids = passthrough;
      for (std::size_t j = 0; j < scaled.size(); ++j) {
        if (j == top) continue;
        kids.push_back(
            detail::eval_or_lit(p, scaled[j].negated, scaled[j].t - t0, scaled[j].level));
      }
      if (theory == Theory::Z1) {
        long lvl = std::min(vp(p, K), Lstar);
        kids.push_back(detail::eval_or_lit(p, false, t0, lvl));
      }
      out_disjuncts.push_back(detail::nconj(std::move(kids)));
    }
  }

  PCondition result;
  result.p = p;
  result.var = "";
  result.root = detail::ndisj(std::move(out_disjuncts));
  return result;
}

}  // namespace sqf
