#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqf/core.hpp"
#include "sqf/numtheory.hpp"  // ExactnessPolicy / exactness_error only

namespace sqf::oracle {

/**
 * Reference semantics, kept deliberately separate from the solver: membership
 * is decided by factoring each value outright with plain ascending trial
 * division.  The solver's sieves and local analyses are validated against
 * these routines, so nothing here may call into normalize/localsolve/decide
 * or the numtheory membership tests.
 */

// v_p by repeated division.
inline long o_vp(const Int& p, Int a) {
  if (a == 0) throw std::domain_error("oracle: vp of zero");
  long e = 0;
  while (mpz_divisible_p(a.get_mpz_t(), p.get_mpz_t())) {
    a /= p;
    ++e;
  }
  return e;
}

inline bool in_U(const Int& p, long l, const Rat& a) {
  if (a == 0) return true;
  return o_vp(p, num(a)) - o_vp(p, den(a)) >= l;
}

// P_m membership by explicit factorization of the numerator.  Trial divisors
// run 2, 3, 5, 7, 9, ... without a prime table; once d^3 exceeds the cofactor
// the remaining shapes (1, q, q*r, q^2) are told apart by a square test.
inline bool in_Pm(const Int& m, const Rat& a, const ExactnessPolicy& policy = {}) {
  if (m <= 0) throw std::domain_error("oracle: m must be positive");
  if (a == 0) return false;
  Int n = abs_int(num(a));
  const std::uint64_t beta = policy.trial_bound;

  // Settle the primes of m first: each allows v_p(a) up to 1 + v_p(m).  Once
  // they are divided out, the rest of n must simply be square-free.
  Int mm = m;
  for (Int d = 2; d * d <= mm; d = (d == 2 ? Int(3) : d + 2)) {
    if (mm % d != 0) continue;
    long em = 0;
    while (mm % d == 0) mm /= d, ++em;
    long e = 0;
    while (n % d == 0) n /= d, ++e;
    if (e >= 2 + em) return false;
  }
  if (mm > 1) {  // leftover prime factor of m, multiplicity one
    long e = 0;
    while (n % mm == 0) n /= mm, ++e;
    if (e >= 3) return false;
  }
  if (n == 1) return true;

  if (n.fits_ulong_p()) {
    std::uint64_t v = n.get_ui();
    bool cube_exit = false;
    for (std::uint64_t d = 2; d <= beta; d = (d == 2 ? 3 : d + 2)) {
      if (d * d * d > v) {
        cube_exit = true;
        break;
      }
      if (v % d == 0) {
        long e = 0;
        while (v % d == 0) v /= d, ++e;
        if (e >= 2) return false;
      }
    }
    if (v == 1) return true;
    if (!cube_exit && Int(static_cast<unsigned long>(v)) >= Int(beta) * beta * beta)
      throw exactness_error("oracle: cofactor exceeds trial_bound^3");
    Int rest(static_cast<unsigned long>(v));
    return !(rest > 1 && is_perfect_square(rest));
  }

  bool cube_exit = false;
  for (std::uint64_t d = 2; d <= beta; d = (d == 2 ? 3 : d + 2)) {
    if (Int(static_cast<unsigned long>(d)) * d * d > n) {
      cube_exit = true;
      break;
    }
    if (mpz_divisible_ui_p(n.get_mpz_t(), d)) {
      long e = 0;
      while (mpz_divisible_ui_p(n.get_mpz_t(), d)) {
        mpz_divexact_ui(n.get_mpz_t(), n.get_mpz_t(), d);
        ++e;
      }
      if (e >= 2) return false;
    }
  }
  if (n == 1) return true;
  if (!cube_exit && n >= Int(beta) * beta * beta)
    throw exactness_error("oracle: cofactor exceeds trial_bound^3");
  return !(n > 1 && is_perfect_square(n));
}

// Direct evaluation of a quantifier-free formula at a full assignment.
inline bool eval(const Formula& f, const std::map<std::string, Rat>& assignment,
                 Theory theory, const ExactnessPolicy& policy = {}) {
  switch (f.kind) {
    case Formula::Kind::Atom: {
      const Atom& a = *f.atom;
      Rat v = a.term.evaluate(assignment);
      if (theory == Theory::Z1 && !is_integral(v))
        throw theory_error("oracle: non-integer value under Z1");
      switch (a.kind) {
        case AtomKind::InU: return in_U(a.p, a.l, v);
        case AtomKind::InP: return in_Pm(a.m, v, policy);
        case AtomKind::EqZero: return v == 0;
        case AtomKind::LtZero:
          if (theory != Theory::Q2) throw theory_error("oracle: order atom outside Q2");
          return v < 0;
      }
      return false;
    }
    case Formula::Kind::Not:
      return !eval(f.children[0], assignment, theory, policy);
    case Formula::Kind::And:
      for (const auto& c : f.children)
        if (!eval(c, assignment, theory, policy)) return false;
      return true;
    case Formula::Kind::Or:
      for (const auto& c : f.children)
        if (eval(c, assignment, theory, policy)) return true;
      return false;
    default:
      throw std::invalid_argument("oracle: eval requires a quantifier-free formula");
  }
}

// --- bounded witness search ----------------------------------------------------

struct SearchRange {
  Rat lo = Rat(0);
  Rat hi = Rat(0);
  unsigned long max_denominator = 1;  // 1: integer search
  bool open_ends = false;             // exclude the endpoints
};

namespace detail {

inline std::uint64_t gcd_u64(std::uint64_t a, std::uint64_t b) {
  while (b) {
    std::uint64_t t = a % b;
    a = b;
    b = t;
  }
  return a;
}

// Inverse of a modulo m (gcd(a, m) = 1), by the extended Euclid algorithm.
inline std::int64_t inv_mod_i64(std::int64_t a, std::int64_t m) {
  std::int64_t t = 0, nt = 1, r = m, nr = a % m;
  if (nr < 0) nr += m;
  while (nr != 0) {
    std::int64_t q = r / nr;
    std::int64_t tmp = t - q * nt;
    t = nt;
    nt = tmp;
    tmp = r - q * nr;
    r = nr;
    nr = tmp;
  }
  if (t < 0) t += m;
  return t;
}

// flags[t] = in_Pm(m, base + step * t) over int64 values, by marking multiples
// of p^(2 + v_p(m)); independent twin of the solver sieve used only here.
inline std::vector<char> pm_flags_i64(std::int64_t m, std::int64_t base, std::int64_t step,
                                      std::size_t count, const ExactnessPolicy& policy) {
  std::vector<char> flags(count, 1);
  if (count == 0) return flags;
  std::int64_t last = base + step * static_cast<std::int64_t>(count - 1);
  std::uint64_t maxabs =
      std::max<std::uint64_t>(std::max(std::llabs(base), std::llabs(last)), 1);
  std::uint64_t root = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(maxabs)));
  while (root * root > maxabs) --root;
  while ((root + 1) * (root + 1) <= maxabs) ++root;
  bool exact = root <= policy.trial_bound;
  std::uint64_t mark_to = exact ? root : policy.trial_bound;

  auto ps = prime_table(static_cast<std::uint32_t>(std::max<std::uint64_t>(mark_to, 2)));
  for (std::uint32_t p : *ps) {
    if (p > mark_to) break;
    std::int64_t q = static_cast<std::int64_t>(p) * p;
    std::int64_t mm = m;
    while (mm % p == 0) {
      mm /= p;
      if (q > static_cast<std::int64_t>(maxabs) / p) {
        q = -1;  // overflow-safe: modulus already exceeds every |value|
        break;
      }
      q *= p;
    }
    if (q < 0) continue;
    // step * t = -base (mod q)
    std::int64_t g = static_cast<std::int64_t>(
        gcd_u64(static_cast<std::uint64_t>(std::llabs(step)), static_cast<std::uint64_t>(q)));
    if (base % g != 0) continue;
    std::int64_t qr = q / g;
    std::int64_t s = (step / g) % qr;
    if (s < 0) s += qr;
    std::int64_t b = (-(base / g)) % qr;
    if (b < 0) b += qr;
    std::int64_t t0 = qr == 1 ? 0 : static_cast<std::int64_t>(
                                        (static_cast<__int128>(b) * inv_mod_i64(s, qr)) % qr);
    for (std::uint64_t t = static_cast<std::uint64_t>(t0); t < count;
         t += static_cast<std::uint64_t>(qr))
      flags[t] = 0;
  }
  if (base % step == 0) {
    std::int64_t t0 = -(base / step);
    if (t0 >= 0 && static_cast<std::uint64_t>(t0) < count) flags[t0] = 0;
  }
  if (!exact) {
    for (std::size_t t = 0; t < count; ++t) {
      if (!flags[t]) continue;
      flags[t] = in_Pm(m, Rat(Int(base) + Int(step) * Int(static_cast<unsigned long>(t))),
                       policy)
                     ? 1
                     : 0;
    }
  }
  return flags;
}

struct AtomTable {
  std::vector<const Atom*> atoms;
  static void collect(const Formula& f, std::vector<const Atom*>& out) {
    if (f.kind == Formula::Kind::Atom) {
      out.push_back(&*f.atom);
      return;
    }
    for (const auto& c : f.children) collect(c, out);
  }
};

inline bool eval_with_table(const Formula& f, const std::vector<char>& truth, std::size_t& i) {
  switch (f.kind) {
    case Formula::Kind::Atom:
      return truth[i++] != 0;
    case Formula::Kind::Not:
      return !eval_with_table(f.children[0], truth, i);
    case Formula::Kind::And: {
      bool r = true;
      for (const auto& c : f.children) r = eval_with_table(c, truth, i) && r;
      return r;
    }
    case Formula::Kind::Or: {
      bool r = false;
      for (const auto& c : f.children) r = eval_with_table(c, truth, i) || r;
      return r;
    }
    default:
      throw std::invalid_argument("oracle: quantifier in quantifier-free evaluation");
  }
}

}  // namespace detail

/**
 * Scans an integer block [lo, lo+count) for solutions of f in `var`, calling
 * `emit(x)` for each hit in ascending order; emit returns false to stop.
 * Membership atoms are evaluated in bulk when the whole block fits in 64-bit
 * arithmetic, otherwise value by value.
 */
template <class Emit>
void scan_block(const Formula& f, const std::string& var, const Int& lo, std::size_t count,
                Theory theory, Emit&& emit, const ExactnessPolicy& policy = {}) {
  std::vector<const Atom*> atoms;
  detail::AtomTable::collect(f, atoms);

  Int hi = lo + Int(static_cast<unsigned long>(count));
  bool fits = lo.fits_slong_p() && hi.fits_slong_p();
  std::vector<std::vector<char>> bulk;
  if (fits) {
    bool ok = true;
    for (const Atom* a : atoms) {
      if (!is_integral(a->term.constant) || !a->term.constant.get_num().fits_slong_p() ||
          !a->term.coeff_of(var).fits_slong_p() || a->term.coeffs.size() > 1 ||
          (a->kind == AtomKind::InP && !a->m.fits_slong_p())) {
        ok = false;
        break;
      }
    }
    if (ok) {
      std::int64_t x0 = lo.get_si();
      for (const Atom* a : atoms) {
        std::int64_t k = a->term.coeff_of(var).get_si();
        std::int64_t c = a->term.constant.get_num().get_si();
        // Guard |k * x + c| within int64 across the block.
        double worst = std::abs(static_cast<double>(k)) *
                           (std::abs(static_cast<double>(x0)) + static_cast<double>(count)) +
                       std::abs(static_cast<double>(c));
        if (worst > 4.0e18) {
          ok = false;
          break;
        }
      }
      if (ok) {
        std::int64_t x0 = lo.get_si();
        for (const Atom* a : atoms) {
          std::int64_t k = a->term.coeff_of(var).get_si();
          std::int64_t c = a->term.constant.get_num().get_si();
          std::vector<char> t(count);
          std::int64_t v = k * x0 + c;
          switch (a->kind) {
            case AtomKind::InP:
              if (k == 0)
                std::fill(t.begin(), t.end(), in_Pm(a->m, Rat(Int(v)), policy) ? 1 : 0);
              else
                t = detail::pm_flags_i64(a->m.get_si(), v, k, count, policy);
              break;
            case AtomKind::InU: {
              for (std::size_t i = 0; i < count; ++i, v += k)
                t[i] = in_U(a->p, a->l, Rat(Int(v))) ? 1 : 0;
              break;
            }
            case AtomKind::EqZero:
              for (std::size_t i = 0; i < count; ++i, v += k) t[i] = (v == 0);
              break;
            case AtomKind::LtZero:
              for (std::size_t i = 0; i < count; ++i, v += k) t[i] = (v < 0);
              break;
          }
          bulk.push_back(std::move(t));
        }
        std::vector<char> truth(atoms.size());
        for (std::size_t i = 0; i < count; ++i) {
          for (std::size_t a = 0; a < atoms.size(); ++a) truth[a] = bulk[a][i];
          std::size_t cursor = 0;
          if (detail::eval_with_table(f, truth, cursor))
            if (!emit(Int(lo + Int(static_cast<unsigned long>(i))))) return;
        }
        return;
      }
    }
  }

  // General path: value-by-value evaluation.
  std::map<std::string, Rat> asg;
  for (std::size_t i = 0; i < count; ++i) {
    Int x = lo + Int(static_cast<unsigned long>(i));
    asg[var] = Rat(x);
    if (eval(f, asg, theory, policy))
      if (!emit(x)) return;
  }
}

// Least witness of f in the range, or nullopt if the range holds none.
// Integer ranges scan ascending; rational ranges enumerate denominators
// ascending, then numerators ascending within each denominator.
inline std::optional<Rat> search(const Formula& f, const std::string& var,
                                 const SearchRange& range, Theory theory,
                                 const ExactnessPolicy& policy = {}) {
  auto extra = free_variables(f);
  extra.erase(var);
  if (!extra.empty())
    throw std::invalid_argument("oracle: search formula has unbound parameters");

  if (range.max_denominator <= 1 || theory == Theory::Z1) {
    Int lo = ceil_div(num(range.lo), den(range.lo));
    Int hi = floor_div(num(range.hi), den(range.hi));
    if (range.open_ends) {
      if (Rat(lo) == range.lo) lo += 1;
      if (Rat(hi) == range.hi) hi -= 1;
    }
    std::optional<Rat> found;
    for (Int blo = lo; blo <= hi; blo += static_cast<unsigned long>(kSieveWindow)) {
      std::size_t count = kSieveWindow;
      if (Int(static_cast<unsigned long>(count)) > hi - blo + 1)
        count = static_cast<std::size_t>(Int(hi - blo + 1).get_ui());
      scan_block(f, var, blo, count, theory,
                 [&](const Int& x) {
                   found = Rat(x);
                   return false;
                 },
                 policy);
      if (found) return found;
    }
    return std::nullopt;
  }

  // Rational search: denominator-major order.
  std::map<std::string, Rat> asg;
  for (unsigned long q = 1; q <= range.max_denominator; ++q) {
    Rat qlo = range.lo * Rat(static_cast<unsigned long>(q));
    Rat qhi = range.hi * Rat(static_cast<unsigned long>(q));
    Int alo = ceil_div(num(qlo), den(qlo));
    Int ahi = floor_div(num(qhi), den(qhi));
    for (Int a = alo; a <= ahi; ++a) {
      Rat cand(a, Int(static_cast<unsigned long>(q)));
      cand.canonicalize();
      if (den(cand) != Int(static_cast<unsigned long>(q))) continue;  // already tried
      if (range.open_ends && (cand == range.lo || cand == range.hi)) continue;
      if (cand < range.lo || cand > range.hi) continue;
      asg[var] = cand;
      if (eval(f, asg, theory, policy)) return cand;
    }
  }
  return std::nullopt;
}

// Number of solutions in the integer range [lo, hi].
inline std::uint64_t count_solutions(const Formula& f, const std::string& var, const Int& lo,
                                     const Int& hi, Theory theory,
                                     const ExactnessPolicy& policy = {}) {
  std::uint64_t total = 0;
  for (Int blo = lo; blo <= hi; blo += static_cast<unsigned long>(kSieveWindow)) {
    std::size_t count = kSieveWindow;
    if (Int(static_cast<unsigned long>(count)) > hi - blo + 1)
      count = static_cast<std::size_t>(Int(hi - blo + 1).get_ui());
    scan_block(f, var, blo, count, theory,
               [&](const Int&) {
                 ++total;
                 return true;
               },
               policy);
  }
  return total;
}

}  // namespace sqf::oracle
