#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sqf/ints.hpp"

namespace sqf {

// Raised when a membership query cannot be decided exactly within the trial
// division budget: after stripping all prime factors <= trial_bound the
// remaining cofactor is >= trial_bound^3, so its square-part is unknown.
class exactness_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// beta in the exactness contract: membership tests are exact whenever the
// cofactor surviving trial division stays below trial_bound^3.
struct ExactnessPolicy {
  std::uint32_t trial_bound = 1'000'000;
};

// --- p-adic valuation -------------------------------------------------------

// v_p(a) for nonzero integer a.
inline long vp(const Int& p, const Int& a) {
  if (a == 0) throw std::domain_error("vp: valuation of zero is +infinity");
  if (p < 2) throw std::domain_error("vp: p must be a prime >= 2");
  Int rest;
  return static_cast<long>(mpz_remove(rest.get_mpz_t(), a.get_mpz_t(), p.get_mpz_t()));
}

// v_p(a) for nonzero rational a; v_p(n/d) = v_p(n) - v_p(d).
inline long vp(const Int& p, const Rat& a) {
  if (a == 0) throw std::domain_error("vp: valuation of zero is +infinity");
  return vp(p, num(a)) - vp(p, den(a));
}

// Membership in U[p,l] = { a : v_p(a) >= l }.  Zero belongs to every U[p,l]
// because its valuation is +infinity.
inline bool is_in_U(const Int& p, long l, const Rat& a) {
  if (a == 0) return true;
  return vp(p, a) >= l;
}

// --- full factorization of small auxiliary integers -------------------------

struct Factorization {
  std::vector<std::pair<Int, unsigned long>> factors;  // ascending primes
};

// Complete factorization by trial division; intended for moduli, coefficients
// and step sizes, which stay small.  Throws exactness_error for inputs whose
// square root exceeds the 64-bit trial range.
inline Factorization factor_fully(Int n) {
  if (n <= 0) throw std::domain_error("factor_fully: argument must be positive");
  Factorization f;
  if (n == 1) return f;
  if (!n.fits_ulong_p()) {
    // Strip small factors first; if the remainder is still too large to root
    // within 64 bits we cannot finish.
    for (unsigned long d = 2; d < (1ul << 32); d = (d == 2 ? 3 : d + 2)) {
      if (Int(d) * d > n) break;
      unsigned long e = 0;
      while (mpz_divisible_ui_p(n.get_mpz_t(), d)) {
        mpz_divexact_ui(n.get_mpz_t(), n.get_mpz_t(), d);
        ++e;
      }
      if (e) f.factors.emplace_back(d, e);
      if (n.fits_ulong_p()) break;
    }
    if (!n.fits_ulong_p()) {
      if (is_prime(n)) {
        f.factors.emplace_back(n, 1);
        return f;
      }
      throw exactness_error("factor_fully: composite too large for trial division");
    }
  }
  unsigned long v = n.get_ui();
  for (unsigned long d = 2; d * d <= v; d = (d == 2 ? 3 : d + 2)) {
    if (v % d == 0) {
      unsigned long e = 0;
      while (v % d == 0) {
        v /= d;
        ++e;
      }
      // Merge with a factor found during the big-number phase, if any.
      if (!f.factors.empty() && f.factors.back().first == Int(d))
        f.factors.back().second += e;
      else
        f.factors.emplace_back(d, e);
    }
  }
  if (v > 1) f.factors.emplace_back(v, 1);
  return f;
}

inline unsigned long exponent_in(const Factorization& f, const Int& p) {
  for (const auto& [q, e] : f.factors)
    if (q == p) return e;
  return 0;
}

// --- membership in P_m -------------------------------------------------------

namespace detail {

// Decides whether the positive integer n, all of whose prime factors exceed
// every prime <= `divided_to`, has a repeated prime factor.  Valid when
// n < divided_to^3: the only possible shapes are 1, q, q*r and q^2.
inline bool tail_has_square(const Int& n) { return n > 1 && is_perfect_square(n); }

// Strips p from n completely, returning the exponent.
inline unsigned long strip(Int& n, const Int& p) {
  Int rest;
  unsigned long e = mpz_remove(rest.get_mpz_t(), n.get_mpz_t(), p.get_mpz_t());
  n = rest;
  return e;
}

}  // namespace detail

/**
 * Membership in P_m = { a : v_p(a) < 2 + v_p(m) for every prime p }.
 * P_1 is the set of square-free rationals.  Denominator primes never disqualify
 * a value (their valuations are negative), so only the numerator is factored.
 *
 * Exact for every value whose post-trial-division cofactor is below
 * trial_bound^3; otherwise throws exactness_error.
 */
inline bool is_in_Pm(const Int& m, const Rat& a, const ExactnessPolicy& policy = {}) {
  if (m <= 0) throw std::domain_error("is_in_Pm: m must be a positive integer");
  if (a == 0) return false;  // v_p(0) = +infinity exceeds every bound
  Int n = abs_int(num(a));
  if (n == 1) return true;

  // Primes dividing m carry a raised exponent budget of 2 + v_p(m).
  if (m > 1) {
    Factorization mf = factor_fully(m);
    for (const auto& [p, e] : mf.factors) {
      unsigned long got = detail::strip(n, p);
      if (got >= 2 + e) return false;
    }
  }
  if (n == 1) return true;

  // Away from m the budget is v_p < 2: the remaining part must be square-free.
  // After dividing out all primes <= p, a cofactor below p^3 can only be
  // 1, q, q*r or q^2 with q, r distinct primes > p; only the q^2 shape has a
  // repeated factor, and it is recognized as a perfect square.
  const std::uint32_t beta = policy.trial_bound;
  bool cube_exit = false;
  if (n.fits_ulong_p()) {
    std::uint64_t v = n.get_ui();
    auto ps = prime_table(beta);
    for (std::uint32_t p : *ps) {
      if (p > beta) break;
      std::uint64_t p3 = static_cast<std::uint64_t>(p) * p * p;
      if (p3 / p / p != p) p3 = std::numeric_limits<std::uint64_t>::max();
      if (p3 > v) {
        cube_exit = true;
        break;
      }
      if (v % p == 0) {
        int e = 0;
        while (v % p == 0) {
          v /= p;
          ++e;
        }
        if (e >= 2) return false;
      }
    }
    if (v == 1) return true;
    Int rest(static_cast<unsigned long>(v));
    if (!cube_exit && rest >= Int(beta) * beta * beta)
      throw exactness_error("is_in_Pm: cofactor exceeds trial_bound^3");
    return !detail::tail_has_square(rest);
  }

  auto ps = prime_table(beta);
  for (std::uint32_t p : *ps) {
    if (p > beta) break;
    if (Int(p) * p * p > n) {
      cube_exit = true;
      break;
    }
    if (mpz_divisible_ui_p(n.get_mpz_t(), p)) {
      unsigned long e = detail::strip(n, Int(p));
      if (e >= 2) return false;
    }
  }
  if (n == 1) return true;
  if (!cube_exit && n >= Int(beta) * beta * beta)
    throw exactness_error("is_in_Pm: cofactor exceeds trial_bound^3");
  return !detail::tail_has_square(n);
}

// --- Chinese remainder theorem ----------------------------------------------

// Combines congruences x = r_i (mod m_i) with pairwise coprime positive moduli
// into (r, M).  Non-coprime moduli are rejected.
inline std::pair<Int, Int> crt(const std::vector<std::pair<Int, Int>>& congruences) {
  Int r = 0, M = 1;
  for (const auto& [ri, mi] : congruences) {
    if (mi <= 0) throw std::invalid_argument("crt: moduli must be positive");
    if (gcd_int(M, mi) != 1) throw std::invalid_argument("crt: moduli not pairwise coprime");
    // r' = r (mod M), r' = ri (mod mi)
    Int inv;
    if (mpz_invert(inv.get_mpz_t(), M.get_mpz_t(), mi.get_mpz_t()) == 0)
      throw std::invalid_argument("crt: moduli not pairwise coprime");
    Int t = mod_floor((ri - r) * inv, mi);
    r += M * t;
    M *= mi;
  }
  return {r, M};
}

// --- segmented membership sieves ---------------------------------------------

inline constexpr std::size_t kSieveWindow = std::size_t(1) << 20;

namespace detail {

// Marks flags[t] = 0 for every t in [0, count) with value(t) = 0 mod q,
// where value(t) = base + step * t and gcd-reduction decides solvability.
inline void mark_progression(std::vector<char>& flags, const Int& base, const Int& step,
                             const Int& q) {
  const std::size_t count = flags.size();
  Int g = gcd_int(step, q);
  if (mod_floor(base, g) != 0) return;  // no t solves the congruence
  Int qr = q / g;
  Int idx0;
  if (qr == 1) {
    idx0 = 0;
  } else {
    Int inv;
    Int s = mod_floor(step / g, qr);
    if (mpz_invert(inv.get_mpz_t(), s.get_mpz_t(), qr.get_mpz_t()) == 0) return;
    idx0 = mod_floor(-(base / g) * inv, qr);
  }
  if (idx0 >= Int(static_cast<unsigned long>(count))) return;
  if (qr.fits_ulong_p()) {
    std::size_t stride = std::max<std::size_t>(1, qr.get_ui());
    for (std::size_t t = idx0.get_ui(); t < count; t += stride) flags[t] = 0;
    return;
  }
  flags[idx0.get_ui()] = 0;  // stride exceeds the window: single hit
}

}  // namespace detail

/**
 * flags[t] = is_in_Pm(m, base + step * t) for t in [0, count).
 *
 * Strategy: mark multiples of p^(2 + v_p(m)) for every prime p with
 * p^2 <= max |value|.  When that prime range fits the trial bound the sieve is
 * exact on its own; otherwise surviving positions fall back to the per-value
 * test (which enforces the exactness contract).
 */
inline std::vector<char> sieve_Pm_progression(const Int& m, const Int& base, const Int& step,
                                              std::size_t count,
                                              const ExactnessPolicy& policy = {}) {
  if (m <= 0) throw std::domain_error("sieve_Pm_progression: m must be positive");
  if (step == 0) throw std::domain_error("sieve_Pm_progression: step must be nonzero");
  std::vector<char> flags(count, 1);
  if (count == 0) return flags;

  Int last = base + step * Int(static_cast<unsigned long>(count - 1));
  Int maxabs = std::max(abs_int(base), abs_int(last));
  if (maxabs == 0) maxabs = 1;
  Int root = isqrt(maxabs);
  bool exact = root <= Int(policy.trial_bound);
  std::uint32_t mark_to =
      exact ? static_cast<std::uint32_t>(root.get_ui()) : policy.trial_bound;

  Factorization mf = m > 1 ? factor_fully(m) : Factorization{};
  auto ps = prime_table(std::max<std::uint32_t>(mark_to, 2));
  for (std::uint32_t p : *ps) {
    if (p > mark_to) break;
    Int q = pow_int(Int(p), 2 + exponent_in(mf, Int(p)));
    detail::mark_progression(flags, base, step, q);
  }

  // A zero value never belongs to P_m.
  if (mod_floor(base, abs_int(step)) == 0) {
    Int t0 = -base / step;
    if (t0 >= 0 && t0 < Int(static_cast<unsigned long>(count))) flags[t0.get_ui()] = 0;
  }

  if (!exact) {
    for (std::size_t t = 0; t < count; ++t) {
      if (!flags[t]) continue;
      Rat v(base + step * Int(static_cast<unsigned long>(t)));
      flags[t] = is_in_Pm(m, v, policy) ? 1 : 0;
    }
  }
  return flags;
}

// flags[i] = is_in_Pm(m, start + i) for i in [0, length).
inline std::vector<char> sieve_Pm_window(const Int& m, const Int& start, std::size_t length,
                                         const ExactnessPolicy& policy = {}) {
  return sieve_Pm_progression(m, start, 1, length, policy);
}

// Number of square-free integers in [1, n].
inline Int count_squarefree_upto(const Int& n, const ExactnessPolicy& policy = {}) {
  Int total = 0;
  Int lo = 1;
  while (lo <= n) {
    std::size_t len = kSieveWindow;
    if (Int(static_cast<unsigned long>(len)) > n - lo + 1)
      len = static_cast<std::size_t>(Int(n - lo + 1).get_ui());
    auto flags = sieve_Pm_window(1, lo, len, policy);
    for (char f : flags) total += f;
    lo += static_cast<unsigned long>(len);
  }
  return total;
}

}  // namespace sqf
