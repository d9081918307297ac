#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sqf/core.hpp"
#include "sqf/decide.hpp"
#include "sqf/ints.hpp"
#include "sqf/localsolve.hpp"
#include "sqf/normalize.hpp"
#include "sqf/numtheory.hpp"
#include "sqf/oracle.hpp"
#include "sqf/parallel.hpp"

namespace sqf {

/**
 * Thrown when a prescribed pattern is already impossible modulo some prime
 * power, so no amount of searching can realize it (e.g. four consecutive
 * square-free integers fail modulo 4).
 */
class locally_unsatisfiable_error : public std::runtime_error {
 public:
  locally_unsatisfiable_error(Int prime_, const std::string& what)
      : std::runtime_error(what), prime(std::move(prime_)) {}
  Int prime;
};

/**
 * Thrown when a semidecidable membership test exhausts its witness search
 * bound: the answer is "not found up to the bound", which is weaker than
 * "false".
 */
class witness_bound_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * A prescribed square-free pattern along an arithmetic progression: a start
 * value a realizes the pattern when a + o*step is square-free for every o in
 * `offsets` and not square-free for every o in `complementary`.
 */
struct PatternSpec {
  std::vector<Int> offsets;        // strictly increasing, forced square-free
  std::vector<Int> complementary;  // strictly increasing, forced non-square-free
  Int step = 1;
};

/**
 * The step-1 pattern whose window is completely specified: the square-free
 * integers in [a + offsets.front(), a + offsets.back()] must be exactly the
 * a + o.  Positions in the window that are not offsets become complementary.
 */
inline PatternSpec consecutive_pattern(std::vector<Int> offsets) {
  if (offsets.empty()) throw std::invalid_argument("consecutive_pattern: need at least one offset");
  PatternSpec spec;
  std::set<Int> have(offsets.begin(), offsets.end());
  for (Int o = offsets.front(); o <= offsets.back(); ++o)
    if (!have.count(o)) spec.complementary.push_back(o);
  spec.offsets = std::move(offsets);
  return spec;
}

namespace detail {

constexpr std::size_t kPatternBlock = std::size_t{1} << 16;
constexpr unsigned long kWheelLimit = 1ul << 20;

inline void validate_pattern(const PatternSpec& spec) {
  if (spec.step <= 0) throw std::invalid_argument("pattern: step must be positive");
  for (std::size_t i = 1; i < spec.offsets.size(); ++i)
    if (!(spec.offsets[i - 1] < spec.offsets[i]))
      throw std::invalid_argument("pattern: offsets must be strictly increasing");
  for (std::size_t i = 1; i < spec.complementary.size(); ++i)
    if (!(spec.complementary[i - 1] < spec.complementary[i]))
      throw std::invalid_argument("pattern: complementary offsets must be strictly increasing");
  std::set<Int> have(spec.offsets.begin(), spec.offsets.end());
  for (const Int& o : spec.complementary)
    if (have.count(o))
      throw std::invalid_argument("pattern: an offset cannot be both square-free and not");
}

/** The pattern as a one-variable formula, used for the final re-verification. */
inline Formula pattern_formula(const PatternSpec& spec) {
  std::vector<Formula> parts;
  for (const Int& o : spec.offsets)
    parts.push_back(
        Formula::make_atom(Atom::in_P(Term::variable("x") + Term(Rat(o * spec.step)), 1)));
  for (const Int& o : spec.complementary)
    parts.push_back(Formula::make_not(
        Formula::make_atom(Atom::in_P(Term::variable("x") + Term(Rat(o * spec.step)), 1))));
  return Formula::make_and(std::move(parts));
}

inline GSystem pattern_system(const PatternSpec& spec) {
  GSystem g;
  g.shape.k = 1;
  g.shape.m = 1;
  g.shape.n = static_cast<int>(spec.offsets.size());
  g.shape.nprime = static_cast<int>(spec.complementary.size());
  for (const Int& o : spec.offsets) g.c.push_back(Rat(o * spec.step));
  for (const Int& o : spec.complementary) g.cp.push_back(Rat(o * spec.step));
  return g;
}

/**
 * Acceptance table modulo the product of the small prime squares: a candidate
 * whose residue is rejected here cannot satisfy the forced square-free
 * positions.  Pruning only; the sieve remains the ground truth.  Primes whose
 * square would push the table past the size limit are simply left out.
 */
struct ResidueWheel {
  unsigned long modulus = 1;
  std::vector<char> ok;  // empty when modulus == 1
};

inline ResidueWheel build_wheel(const GSystem& g, const Int& B) {
  ResidueWheel wheel;
  if (g.c.empty()) return wheel;
  auto primes = prime_table(static_cast<std::uint32_t>(std::min<unsigned long>(
      B.fits_ulong_p() ? B.get_ui() : kWheelLimit, kWheelLimit)));
  std::vector<std::pair<unsigned long, std::vector<char>>> tables;
  unsigned long product = 1;
  for (std::uint32_t p : *primes) {
    if (Int(p) > B) break;
    unsigned long pe = p * static_cast<unsigned long>(p);
    if (product > kWheelLimit / pe) break;
    PCondition cond = associated_p_condition(g, Int(p));
    std::vector<char> table(pe);
    for (unsigned long r = 0; r < pe; ++r) table[r] = eval_pcondition(cond, Rat(r)) ? 1 : 0;
    product *= pe;
    tables.emplace_back(pe, std::move(table));
  }
  if (tables.empty()) return wheel;
  wheel.modulus = product;
  wheel.ok.assign(product, 1);
  for (unsigned long r = 0; r < product; ++r)
    for (const auto& [pe, table] : tables)
      if (!table[r % pe]) {
        wheel.ok[r] = 0;
        break;
      }
  return wheel;
}

}  // namespace detail

/**
 * Least a in [0, search_bound] such that a + o*step is square-free exactly at
 * the prescribed offsets.  The congruence conditions are checked for every
 * prime up to the boundary first, so impossible patterns fail fast with the
 * offending prime; a pattern that passes that check is realized by some a
 * (though not necessarily within the bound).  The returned start is
 * re-verified position by position with the trial-division evaluator rather
 * than the sieve that found it.
 */
inline Int find_pattern_run(const PatternSpec& spec, const Int& search_bound, int jobs = 1,
                            const ExactnessPolicy& policy = {}) {
  detail::validate_pattern(spec);
  if (search_bound < 0) throw std::invalid_argument("find_pattern_run: negative search bound");

  GSystem g = detail::pattern_system(spec);
  Int B = boundary(g).B;
  {
    auto primes = prime_table(static_cast<std::uint32_t>(
        B.fits_ulong_p() && B.get_ui() <= 0xffffffffUL ? B.get_ui() : 0xffffffffUL));
    for (std::uint32_t p : *primes) {
      if (Int(p) > B) break;
      LocalCertificate cert = p_satisfiable(g, Int(p), Theory::Z1);
      if (!cert.satisfiable)
        throw locally_unsatisfiable_error(
            Int(p), "find_pattern_run: impossible modulo " + cert.modulus.get_str() + ": " +
                        cert.analysis);
    }
  }
  detail::ResidueWheel wheel = detail::build_wheel(g, B);

  const std::uint64_t total = Int(search_bound + 1).get_ui();
  const std::uint64_t nblocks =
      (total + detail::kPatternBlock - 1) / detail::kPatternBlock;

  auto block_mask = [&](std::uint64_t idx) {
    std::uint64_t lo = idx * detail::kPatternBlock;
    std::size_t len = static_cast<std::size_t>(
        std::min<std::uint64_t>(detail::kPatternBlock, total - lo));
    std::vector<char> mask(len, 1);
    if (wheel.modulus > 1) {
      std::size_t r = static_cast<std::size_t>(lo % wheel.modulus);
      for (std::size_t i = 0; i < len; ++i) {
        mask[i] &= wheel.ok[r];
        if (++r == wheel.modulus) r = 0;
      }
    }
    Int base(static_cast<unsigned long>(lo));
    for (const Int& o : spec.offsets) {
      auto flags = sieve_Pm_progression(1, base + o * spec.step, 1, len, policy);
      for (std::size_t i = 0; i < len; ++i) mask[i] &= flags[i];
    }
    for (const Int& o : spec.complementary) {
      auto flags = sieve_Pm_progression(1, base + o * spec.step, 1, len, policy);
      for (std::size_t i = 0; i < len; ++i) mask[i] &= !flags[i];
    }
    return mask;
  };

  Formula verify = detail::pattern_formula(spec);
  std::optional<Int> found;
  chunked_parallel<std::vector<char>>(
      0, nblocks, jobs, block_mask,
      [&](std::uint64_t idx, std::vector<char>&& mask) {
        std::uint64_t lo = idx * detail::kPatternBlock;
        for (std::size_t i = 0; i < mask.size(); ++i) {
          if (!mask[i]) continue;
          Int a(static_cast<unsigned long>(lo + i));
          if (!oracle::eval(verify, {{"x", Rat(a)}}, Theory::Z1, policy))
            throw std::logic_error("find_pattern_run: sieve and evaluator disagree at " +
                                   a.get_str());
          found = a;
          return false;
        }
        return true;
      });
  if (!found)
    throw budget_error("find_pattern_run: no start value up to " + search_bound.get_str());
  return *found;
}

/**
 * Least a in [0, search_bound] such that the square-free integers in
 * (a, a + n^2] are exactly a+1, a+4, ..., a+n^2: successive square-free gaps
 * grow by two, the hallmark of consecutive squares.  "Consecutive square-free
 * integers" is read as consecutive elements of the square-free sequence; the
 * all-integers-in-a-row reading is impossible for runs of four or more, since
 * any four consecutive integers contain a multiple of 4.
 */
inline Int consecutive_squarefree_squares_run(const Int& n, const Int& search_bound, int jobs = 1,
                                              const ExactnessPolicy& policy = {}) {
  if (n < 1) throw std::invalid_argument("consecutive_squarefree_squares_run: need n >= 1");
  std::vector<Int> offsets;
  for (Int i = 1; i <= n; ++i) offsets.push_back(i * i);
  return find_pattern_run(consecutive_pattern(std::move(offsets)), search_bound, jobs, policy);
}

/**
 * Membership in T = {(a, a + n^2) : the square-free integers in (a, a+n^2]
 * are exactly a+1, a+4, ..., a+n^2}.  Checked directly by sieving the window
 * and comparing against the square positions.
 */
inline bool is_in_T(const Int& a, const Int& b, const ExactnessPolicy& policy = {}) {
  if (a < 0) throw std::invalid_argument("is_in_T: arguments must be natural numbers");
  if (b <= a) return false;
  Int width = b - a;
  if (!width.fits_ulong_p() || width.get_ui() > (1ul << 24))
    throw std::invalid_argument("is_in_T: window too wide to sieve");
  std::size_t len = width.get_ui();
  auto flags = sieve_Pm_window(1, a + 1, len, policy);
  Int next = 1;  // next expected square offset
  for (std::size_t i = 0; i < len; ++i) {
    bool expected = Int(static_cast<unsigned long>(i + 1)) == next * next;
    if (flags[i] != (expected ? 1 : 0)) return false;
    if (expected) ++next;
  }
  // The window must end on a square position, i.e. b itself is the last one.
  return is_perfect_square(width);
}

/**
 * Membership in S = {n^2 : n in N}, via its characterization c = 0 or
 * c = b - a for some (a, b) in T.  A non-square is refuted immediately (the
 * gap pattern forces a square difference); a positive square launches a
 * witness search, and exhausting the bound raises witness_bound_error rather
 * than answering false.
 */
inline bool is_in_S(const Int& c, const Int& witness_bound = Int(10'000'000), int jobs = 1,
                    const ExactnessPolicy& policy = {}) {
  if (c < 0) return false;
  if (c == 0) return true;
  if (!is_perfect_square(c)) return false;
  try {
    consecutive_squarefree_squares_run(isqrt(c), witness_bound, jobs, policy);
    return true;
  } catch (const budget_error&) {
    throw witness_bound_error("is_in_S: no witness pair with difference " + c.get_str() +
                              " found up to " + witness_bound.get_str());
  }
}

namespace detail {

/** Decide s in S by the characterization alone: zero or a perfect square. */
inline bool in_S_decision(const Int& s) { return s == 0 || (s > 0 && is_perfect_square(s)); }

/**
 * The square map through consecutive elements of S: x^2 is the unique s in S
 * whose successor in S lies 2x+1 above it.  Scans S upward; membership along
 * the way uses the immediate decision, since a full witness search per
 * element is far beyond desk scale for squares past 16 (see is_in_S).
 */
inline Int square_via_S(const Int& x) {
  if (x < 0) throw std::invalid_argument("square_via_S: need a natural number");
  std::optional<Int> prev;
  for (Int s = 0; s <= (x + 1) * (x + 1); ++s) {
    if (!in_S_decision(s)) continue;
    if (prev && s - *prev == 2 * x + 1) return *prev;
    prev = s;
  }
  throw std::logic_error("square_via_S: gap 2x+1 not found below (x+1)^2");
}

}  // namespace detail

/**
 * Multiplication recovered from the square map by the polarization identity
 * 2c = (a+b)^2 - a^2 - b^2, with each square produced by walking consecutive
 * elements of S.
 */
inline Int mult_via_definability(const Int& a, const Int& b) {
  if (a < 0 || b < 0)
    throw std::invalid_argument("mult_via_definability: defined on natural numbers");
  Int twoc = detail::square_via_S(a + b) - detail::square_via_S(a) - detail::square_via_S(b);
  if (mod_floor(twoc, 2) != 0)
    throw std::logic_error("mult_via_definability: polarization identity gave an odd value");
  return twoc / 2;
}

/**
 * A start a and difference d with a + t*d square-free exactly for t in S,
 * t ranging over 0..l-1.  When d is not supplied it defaults to (|S|!)^2,
 * which keeps every small prime square away from the forced positions.
 */
inline std::pair<Int, Int> pattern_progression(long l, const std::set<long>& S,
                                               std::optional<Int> d = std::nullopt,
                                               const Int& search_bound = Int(10'000'000),
                                               int jobs = 1, const ExactnessPolicy& policy = {}) {
  if (l < 1) throw std::invalid_argument("pattern_progression: need l >= 1");
  for (long t : S)
    if (t < 0 || t >= l)
      throw std::invalid_argument("pattern_progression: S must be a subset of {0..l-1}");
  Int step;
  if (d) {
    step = *d;
    if (step <= 0) throw std::invalid_argument("pattern_progression: d must be positive");
  } else {
    step = 1;
    for (Int i = 2; i <= Int(static_cast<long>(S.size())); ++i) step *= i;
    step *= step;
  }
  PatternSpec spec;
  spec.step = step;
  for (long t = 0; t < l; ++t)
    (S.count(t) ? spec.offsets : spec.complementary).push_back(Int(t));
  Int a = find_pattern_run(spec, search_bound, jobs, policy);
  return {a, step};
}

/**
 * Witness family for the k-tuple independence property: integers a_Delta (one
 * per subset Delta of the tuple space {0..n-1}^k) and b_{ij} such that
 * a_Delta + b_{0,j_0} + ... + b_{k-1,j_{k-1}} is square-free exactly when
 * (j_0,...,j_{k-1}) lies in Delta.  Tuples are coded in lexicographic order,
 * g(j_0,...,j_{k-1}) = j_0 n^{k-1} + ... + j_{k-1}, and a subset is the
 * bitmask over those codes; a_delta is indexed by that bitmask.
 */
struct IPkWitness {
  int k = 1;
  int n = 1;
  Int start = 0;              // patterned progression c_t = start + t*step
  Int step = 1;
  std::vector<Int> a_delta;   // size 2^(n^k), indexed by subset bitmask
  std::vector<std::vector<Int>> b;  // b[i][j] for i < k, j < n
};

/**
 * Constructs the witness family by finding one long arithmetic progression
 * whose square-free positions spell out every subset in sequence, then
 * reading off a_Delta and b_{ij}.  The progression has length n^k * 2^(n^k),
 * so only desk-scale shapes (n^k <= 2) are accepted.  Every claimed
 * equivalence is re-verified with the trial-division evaluator.
 */
inline IPkWitness ipk_witness(int k, int n, const Int& search_bound = Int(10'000'000),
                              int jobs = 1, const ExactnessPolicy& policy = {}) {
  if (k < 1 || n < 1) throw std::invalid_argument("ipk_witness: need k, n >= 1");
  long nk = 1;
  for (int i = 0; i < k; ++i) {
    nk *= n;
    if (nk > 2) throw std::invalid_argument("ipk_witness: n^k > 2 is beyond desk scale");
  }
  const long subsets = 1l << nk;      // number of Delta
  const long l = nk * subsets;        // progression length
  std::set<long> S;
  for (long f = 0; f < subsets; ++f)
    for (long gcode = 0; gcode < nk; ++gcode)
      if ((f >> gcode) & 1) S.insert(f * nk + gcode);

  auto [a, d] = pattern_progression(l, S, std::nullopt, search_bound, jobs, policy);

  IPkWitness w;
  w.k = k;
  w.n = n;
  w.start = a;
  w.step = d;
  for (long f = 0; f < subsets; ++f) w.a_delta.push_back(a + Int(f) * Int(nk) * d);
  for (int i = 0; i < k; ++i) {
    std::vector<Int> row;
    Int weight = 1;  // n^(k-i-1)
    for (int e = 0; e < k - i - 1; ++e) weight *= n;
    for (int j = 0; j < n; ++j) row.push_back(d * j * weight);
    w.b.push_back(std::move(row));
  }

  // Exhaustive re-verification of the defining equivalence.
  for (long f = 0; f < subsets; ++f)
    for (long gcode = 0; gcode < nk; ++gcode) {
      Int sum = w.a_delta[static_cast<std::size_t>(f)];
      long rest = gcode;
      for (int i = k - 1; i >= 0; --i) {
        int j = static_cast<int>(rest % n);
        rest /= n;
        sum += w.b[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
      bool want = (f >> gcode) & 1;
      if (oracle::in_Pm(1, Rat(sum), policy) != want)
        throw std::logic_error("ipk_witness: verification failed at subset " +
                               std::to_string(f) + ", tuple " + std::to_string(gcode));
    }
  return w;
}

}  // namespace sqf
