#pragma once

#include <gmpxx.h>

#include <algorithm>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace sqf {

// All quantities that can grow with the input are exact: arbitrary-precision
// integers and rationals, never floating point.
using Int = mpz_class;
using Rat = mpq_class;

inline Int num(const Rat& a) { return Int(a.get_num()); }
inline Int den(const Rat& a) { return Int(a.get_den()); }

inline bool is_integral(const Rat& a) { return a.get_den() == 1; }

inline Int pow_int(const Int& base, unsigned long e) {
  Int r;
  mpz_pow_ui(r.get_mpz_t(), base.get_mpz_t(), e);
  return r;
}

inline Int isqrt(const Int& a) {
  if (a < 0) throw std::domain_error("isqrt: negative argument");
  Int r;
  mpz_sqrt(r.get_mpz_t(), a.get_mpz_t());
  return r;
}

inline bool is_perfect_square(const Int& a) {
  return a >= 0 && mpz_perfect_square_p(a.get_mpz_t()) != 0;
}

inline Int gcd_int(const Int& a, const Int& b) {
  Int r;
  mpz_gcd(r.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
  return r;
}

inline Int lcm_int(const Int& a, const Int& b) {
  Int r;
  mpz_lcm(r.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
  return r;
}

inline Int abs_int(const Int& a) { return a < 0 ? Int(-a) : a; }

// Canonical nonnegative representative of a mod m (m > 0).
inline Int mod_floor(const Int& a, const Int& m) {
  if (m <= 0) throw std::domain_error("mod_floor: modulus must be positive");
  Int r;
  mpz_fdiv_r(r.get_mpz_t(), a.get_mpz_t(), m.get_mpz_t());
  return r;
}

inline Int floor_div(const Int& a, const Int& b) {
  Int q;
  mpz_fdiv_q(q.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
  return q;
}

inline Int ceil_div(const Int& a, const Int& b) {
  Int q;
  mpz_cdiv_q(q.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
  return q;
}

// Smallest prime strictly greater than a.
inline Int next_prime_above(const Int& a) {
  Int r;
  mpz_nextprime(r.get_mpz_t(), a.get_mpz_t());
  return r;
}

inline bool is_prime(const Int& a) {
  return mpz_probab_prime_p(a.get_mpz_t(), 40) != 0;
}

/**
 * Shared ascending prime table, grown on demand.  Returns a snapshot that may
 * extend past `limit`; iterate while p <= limit.  Snapshots are immutable, so
 * holding one across a concurrent regrow is safe.
 */
inline std::shared_ptr<const std::vector<std::uint32_t>> prime_table(std::uint32_t limit) {
  static std::mutex mu;
  static std::shared_ptr<const std::vector<std::uint32_t>> table;
  static std::uint32_t sieved_to = 0;
  std::lock_guard<std::mutex> lock(mu);
  if (limit > sieved_to || !table) {
    std::uint32_t target = std::max<std::uint32_t>(limit, 1u << 16);
    std::vector<bool> composite(static_cast<std::size_t>(target) + 1, false);
    auto fresh = std::make_shared<std::vector<std::uint32_t>>();
    for (std::uint64_t i = 2; i <= target; ++i) {
      if (!composite[i]) {
        fresh->push_back(static_cast<std::uint32_t>(i));
        for (std::uint64_t j = i * i; j <= target; j += i) composite[j] = true;
      }
    }
    table = std::move(fresh);
    sieved_to = target;
  }
  return table;
}

}  // namespace sqf
