#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "ints.hpp"
#include "localsolve.hpp"
#include "normalize.hpp"
#include "numtheory.hpp"
#include "parallel.hpp"

namespace sqf {

/** Thrown when a search budget runs out before an enumeration is complete. */
class budget_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/** An open interval constraint; either side may be absent. */
struct Interval {
  std::optional<Rat> lower;
  std::optional<Rat> upper;
};

inline void validate_interval(const Interval& iv) {
  if (iv.lower && iv.upper && !(*iv.lower < *iv.upper))
    throw std::invalid_argument("interval: lower bound must lie below the upper bound");
}

/**
 * How witnesses avoid the negative membership constraints.  Factorize tests
 * each surviving candidate directly; Constructive restricts the search to an
 * arithmetic progression that forces a fresh squared prime into every avoided
 * value, so the constraints hold by construction.
 */
enum class WitnessMode { Factorize, Constructive };

struct SolveOptions {
  std::uint64_t budget = 10'000'000;  ///< candidate positions scanned per search
  int jobs = 1;                       ///< worker threads; output is identical for any value
  WitnessMode mode = WitnessMode::Factorize;
  int escalation_limit = 64;          ///< denominator ladder steps for interval searches
  ExactnessPolicy policy{};
  std::size_t max_disjuncts = kDefaultDisjunctCap;
};

/**
 * A certified lower bound on how often a system is solved on a long integer
 * range: for T large enough, the count of solutions in [1, T] is at least
 * epsilon*T minus explicit lower-order terms plus the (negative) correction
 * constant.  The correction multiplies prime powers up to `cutoff`; past the
 * exactness threshold only a bit-length bound on |correction| is reported.
 */
struct DensityEstimate {
  Rat epsilon;
  Int modulus = 1;            ///< combined residue modulus from the local conditions
  Int cutoff = 1;             ///< prime cutoff for the correction constant
  Int correction = 0;         ///< exact value when correction_exact, else 0
  bool correction_exact = true;
  Int correction_bits = 0;    ///< |correction| <= 2^correction_bits always
  std::vector<Int> distinguished;  ///< one fresh prime per negative constraint
  Int boundary = 1;
};

namespace detail {

constexpr std::uint64_t kScanBlock = std::uint64_t{1} << 16;
constexpr std::uint64_t kResidueTableLimit = std::uint64_t{1} << 16;

inline Int inv_mod(const Int& a, const Int& m) {
  Int r;
  if (mpz_invert(r.get_mpz_t(), a.get_mpz_t(), m.get_mpz_t()) == 0)
    throw std::domain_error("inv_mod: argument is not invertible");
  return r;
}

/** Precomputed acceptance data for scanning integers against one system. */
struct ZPlan {
  GSystem g;
  Int k = 1, m = 1;
  std::vector<Int> c, cp;
  struct ResidueTable {
    std::uint64_t modulus = 1;
    std::vector<char> ok;
  };
  std::vector<ResidueTable> tables;           // small local moduli, full residue map
  std::vector<std::pair<Int, Int>> classes;   // oversized moduli: x = first (mod second)
  std::optional<std::pair<Int, Int>> lattice; // constructive progression, same encoding
  std::vector<Int> excluded;                  // individual barred points
  bool dead = false;
  SatCertificate refutation{};
};

/**
 * Builds the scan plan: local residue filters for every prime up to the
 * boundary, and in constructive mode the progression that forces a fresh
 * squared prime into each negatively constrained value.  A locally refuted
 * prime marks the plan dead and records the certificate.
 */
inline ZPlan build_zplan(const GSystem& g, const SolveOptions& opt) {
  ZPlan plan;
  plan.g = g;
  plan.k = g.shape.k;
  plan.m = g.shape.m;
  for (const Rat& ci : g.c) {
    if (!is_integral(ci)) throw theory_error("integer search requires integral parameters");
    plan.c.push_back(num(ci));
  }
  for (const Rat& ci : g.cp) {
    if (!is_integral(ci)) throw theory_error("integer search requires integral parameters");
    plan.cp.push_back(num(ci));
  }
  // A value required to be both a member and a non-member never succeeds, and
  // no local condition can see it; refute up front.
  for (const Int& ci : plan.c)
    for (const Int& di : plan.cp)
      if (ci == di) {
        plan.dead = true;
        plan.refutation = SatCertificate{std::nullopt, Int(1),
                                         "a value is constrained to be both a member and a non-member"};
        return plan;
      }

  Int B = boundary(g).B;
  if (!B.fits_ulong_p() || B.get_ui() > 0xffffffffUL)
    throw std::invalid_argument("build_zplan: boundary too large");
  auto primes = prime_table(static_cast<std::uint32_t>(B.get_ui()));
  for (std::uint32_t pu : *primes) {
    Int p(pu);
    if (p > B) break;
    PCondition cond = associated_p_condition(g, p);
    long lp = cond.max_level();
    LocalCertificate cert = p_condition_satisfiable(cond, Theory::Z1);
    if (!cert.satisfiable) {
      plan.dead = true;
      plan.refutation = SatCertificate{p, pow_int(p, static_cast<unsigned long>(std::max(lp, 1L))),
                                       cert.analysis};
      return plan;
    }
    if (lp <= 0) continue;  // the condition is constant on every residue
    Int pe = pow_int(p, static_cast<unsigned long>(lp));
    if (pe <= Int(static_cast<unsigned long>(kResidueTableLimit))) {
      ZPlan::ResidueTable tab;
      tab.modulus = pe.get_ui();
      tab.ok.assign(tab.modulus, 0);
      for (std::uint64_t r = 0; r < tab.modulus; ++r)
        tab.ok[r] = eval_pcondition(cond, Rat(Int(r))) ? 1 : 0;
      plan.tables.push_back(std::move(tab));
    } else {
      // An oversized local modulus collapses to the one verified residue
      // class; the scan stays sound but can miss witnesses outside it.
      if (!cert.residue)
        throw exactness_error("build_zplan: no residue class available for an oversized modulus");
      plan.classes.emplace_back(mod_floor(*cert.residue, pe), pe);
    }
  }

  if (opt.mode == WitnessMode::Constructive && !plan.cp.empty()) {
    Int floor_q = std::max(B, plan.m);
    floor_q = std::max(floor_q, abs_int(plan.k));
    for (const Int& ci : plan.c)
      for (const Int& di : plan.cp) floor_q = std::max(floor_q, abs_int(ci - di));
    for (const Int& ci : plan.cp)
      for (const Int& di : plan.cp) floor_q = std::max(floor_q, abs_int(ci - di));
    std::vector<std::pair<Int, Int>> parts;
    Int q = floor_q;
    for (const Int& di : plan.cp) {
      do q = next_prime_above(q);
      while (plan.k % q == 0);
      Int q2 = q * q;
      parts.emplace_back(mod_floor(-di * inv_mod(mod_floor(plan.k, q2), q2), q2), q2);
    }
    plan.lattice = crt(parts);
  }
  return plan;
}

/** The combined residue modulus covered by the plan's local filters. */
inline Int plan_modulus(const ZPlan& plan) {
  Int d = 1;
  for (const auto& tab : plan.tables) d *= Int(static_cast<unsigned long>(tab.modulus));
  for (const auto& [r, mod] : plan.classes) d *= mod;
  return d;
}

/** Flags the candidates in [lo, lo+len) that pass every sieveable filter. */
inline std::vector<char> plan_block_mask(const ZPlan& plan, const Int& lo, std::uint64_t len,
                                         const ExactnessPolicy& policy) {
  std::vector<char> mask(len, 1);
  auto keep_stride = [&](const Int& res, const Int& mod) {
    std::vector<char> keep(len, 0);
    for (Int pos = mod_floor(res - lo, mod); pos < Int(len); pos += mod) {
      std::uint64_t i = pos.get_ui();
      keep[i] = mask[i];
    }
    mask.swap(keep);
  };
  if (plan.lattice) keep_stride(plan.lattice->first, plan.lattice->second);
  for (const auto& [res, mod] : plan.classes) keep_stride(res, mod);
  for (const auto& tab : plan.tables) {
    std::uint64_t r = mod_floor(lo, Int(static_cast<unsigned long>(tab.modulus))).get_ui();
    for (std::uint64_t i = 0; i < len; ++i) {
      if (!tab.ok[r]) mask[i] = 0;
      if (++r == tab.modulus) r = 0;
    }
  }
  for (const Int& ci : plan.c) {
    std::vector<char> flags = sieve_Pm_progression(plan.m, plan.k * lo + ci, plan.k, len, policy);
    for (std::uint64_t i = 0; i < len; ++i) mask[i] = mask[i] && flags[i];
  }
  return mask;
}

/** Per-candidate checks that do not sieve: barred points and non-membership. */
inline bool plan_accepts(const ZPlan& plan, const Int& a, const ExactnessPolicy& policy) {
  for (const Int& e : plan.excluded)
    if (a == e) return false;
  // The constructive lattice already forces a squared prime larger than m
  // into every avoided value, so the factorization test is redundant there.
  if (!plan.lattice)
    for (const Int& di : plan.cp)
      if (is_in_Pm(plan.m, Rat(plan.k * a + di), policy)) return false;
  return true;
}

enum class ScanOrder {
  LeastAbs,    // 0, 1, -1, 2, -2, ...
  Ascending,   // start, start+1, ...
  Descending,  // start, start-1, ...
  Window,      // start..stop ascending, both inclusive
};

struct ScanSpec {
  ScanOrder order = ScanOrder::LeastAbs;
  Int start = 0;
  Int stop = 0;
};

struct ScanOutcome {
  bool stopped = false;     // the sink asked to stop
  bool budget_out = false;  // ran out of candidate budget
};

/**
 * Scans integers in the requested order, visiting every candidate accepted by
 * at least one live plan.  Blocks are sieved on worker threads but consumed in
 * order, so the visit sequence never depends on the job count.  The budget
 * counts scanned positions and is decremented in place.
 */
inline ScanOutcome z_scan(const std::vector<const ZPlan*>& plans, const ScanSpec& spec,
                          const SolveOptions& opt, std::uint64_t& budget, SearchStats& stats,
                          const std::function<bool(const Int&)>& sink) {
  ScanOutcome out;
  std::vector<const ZPlan*> live;
  for (const ZPlan* pl : plans)
    if (pl && !pl->dead) live.push_back(pl);
  if (live.empty()) return out;

  const std::uint64_t W = kScanBlock;
  std::uint64_t block_count = UINT64_MAX - 1;
  if (spec.order == ScanOrder::Window) {
    if (spec.start > spec.stop) return out;
    Int nblocks = ceil_div(spec.stop - spec.start + 1, Int(W));
    if (nblocks.fits_ulong_p()) block_count = nblocks.get_ui();
  }

  auto block_lo = [&](std::uint64_t j) -> Int {
    switch (spec.order) {
      case ScanOrder::LeastAbs:
      case ScanOrder::Ascending:
      case ScanOrder::Window:
        break;
      case ScanOrder::Descending:
        return spec.start - Int(j + 1) * Int(W) + 1;
    }
    Int base = spec.order == ScanOrder::LeastAbs ? Int(0) : spec.start;
    return base + Int(j) * Int(W);
  };
  auto block_len = [&](std::uint64_t j) -> std::uint64_t {
    if (spec.order != ScanOrder::Window) return W;
    Int width = spec.stop - block_lo(j) + 1;
    return width >= Int(W) ? W : width.get_ui();
  };

  struct BlockMasks {
    std::vector<std::vector<char>> fore, mirror;
    std::uint64_t scanned = 0, sieves = 0;
  };

  std::function<BlockMasks(std::uint64_t)> work = [&](std::uint64_t j) {
    BlockMasks bm;
    Int lo = block_lo(j);
    std::uint64_t len = block_len(j);
    for (const ZPlan* pl : live) {
      bm.fore.push_back(plan_block_mask(*pl, lo, len, opt.policy));
      bm.sieves += pl->c.size();
    }
    bm.scanned += len;
    if (spec.order == ScanOrder::LeastAbs) {
      Int nlo = -Int(j + 1) * Int(W) + 1;
      for (const ZPlan* pl : live) {
        bm.mirror.push_back(plan_block_mask(*pl, nlo, W, opt.policy));
        bm.sieves += pl->c.size();
      }
      bm.scanned += W;
    }
    return bm;
  };

  auto visit = [&](const Int& a, const std::vector<std::vector<char>>& masks,
                   std::uint64_t idx) -> bool {
    for (std::size_t t = 0; t < live.size(); ++t)
      if (masks[t][idx] && plan_accepts(*live[t], a, opt.policy)) return sink(a);
    return true;
  };

  std::function<bool(std::uint64_t, BlockMasks&&)> consume = [&](std::uint64_t j,
                                                                 BlockMasks&& bm) {
    if (budget < bm.scanned) {
      out.budget_out = true;
      return false;
    }
    budget -= bm.scanned;
    stats.candidates_tested += bm.scanned;
    stats.sieve_windows += bm.sieves;
    Int lo = block_lo(j);
    std::uint64_t len = block_len(j);
    if (spec.order == ScanOrder::LeastAbs) {
      for (std::uint64_t i = 0; i < len; ++i) {
        Int a = lo + i;
        if (!visit(a, bm.fore, i)) {
          out.stopped = true;
          return false;
        }
        if (a != 0 && !visit(-a, bm.mirror, W - 1 - i)) {
          out.stopped = true;
          return false;
        }
      }
    } else if (spec.order == ScanOrder::Descending) {
      for (std::uint64_t i = len; i-- > 0;) {
        if (!visit(lo + i, bm.fore, i)) {
          out.stopped = true;
          return false;
        }
      }
    } else {
      for (std::uint64_t i = 0; i < len; ++i) {
        if (!visit(lo + i, bm.fore, i)) {
          out.stopped = true;
          return false;
        }
      }
    }
    return true;
  };

  chunked_parallel<BlockMasks>(0, block_count, opt.jobs, work, consume);
  return out;
}

/**
 * Local solvability over the rationals plus the conjugation factor that clears
 * every parameter denominator and every locally required negative valuation.
 */
struct QLocalScan {
  bool dead = false;
  SatCertificate refutation{};
  Int h = 1;
};

inline QLocalScan q_local_scan(const GSystem& g, Theory theory) {
  QLocalScan out;
  Int h = 1;
  for (const Rat& ci : g.c) h = lcm_int(h, den(ci));
  for (const Rat& ci : g.cp) h = lcm_int(h, den(ci));
  for (const auto& [p, cond] : g.shape.theta)
    PCondition::walk(cond.root,
                     [&](const PCondition::Lit& l) { h = lcm_int(h, den(l.term.constant)); });

  Int B = boundary(g).B;
  if (!B.fits_ulong_p() || B.get_ui() > 0xffffffffUL)
    throw std::invalid_argument("q_local_scan: boundary too large");
  auto primes = prime_table(static_cast<std::uint32_t>(B.get_ui()));
  for (std::uint32_t pu : *primes) {
    Int p(pu);
    if (p > B) break;
    LocalCertificate cert = p_satisfiable(g, p, theory);
    if (!cert.satisfiable) {
      out.dead = true;
      out.refutation = SatCertificate{p, cert.modulus, cert.analysis};
      return out;
    }
    if (cert.point && *cert.point != 0) {
      long v = vp(p, *cert.point);
      if (v < 0) {
        long have = vp(p, h);
        if (have < -v) h *= pow_int(p, static_cast<unsigned long>(-v - have));
      }
    }
  }
  out.h = h;
  return out;
}

/** Least integer strictly above h*b, and greatest strictly below. */
inline Int scaled_lower(const Rat& b, const Int& h) {
  Rat s = Rat(h) * b;
  return floor_div(num(s), den(s)) + 1;
}
inline Int scaled_upper(const Rat& b, const Int& h) {
  Rat s = Rat(h) * b;
  return ceil_div(num(s), den(s)) - 1;
}

/**
 * Satisfiability search over the rationals, optionally confined to an open
 * window.  The system is conjugated so integer scans apply; for a two-sided
 * window the conjugation factor is escalated until the scaled window is wide
 * enough to contain an integer solution.
 */
inline SatResult search_rational(const GSystem& g, Theory theory, const std::optional<Rat>& lo,
                                 const std::optional<Rat>& up, const std::vector<Rat>& excluded,
                                 const SolveOptions& opt) {
  SatResult res;
  QLocalScan locals = q_local_scan(g, theory);
  if (locals.dead) {
    res.status = SatStatus::Unsat;
    res.certificate = locals.refutation;
    return res;
  }
  std::uint64_t budget = opt.budget;
  const int ladder = lo && up ? opt.escalation_limit : 1;
  for (int t = 1; t <= ladder && budget > 0; ++t) {
    Int ht = locals.h * t;
    GSystem conj = conjugate(g, ht);
    ZPlan plan = build_zplan(conj, opt);
    if (plan.dead) break;  // cannot happen once the local scan passed
    for (const Rat& e : excluded) {
      Rat se = Rat(ht) * e;
      if (is_integral(se)) plan.excluded.push_back(num(se));
    }
    ScanSpec spec;
    if (lo && up) {
      spec.order = ScanOrder::Window;
      spec.start = scaled_lower(*lo, ht);
      spec.stop = scaled_upper(*up, ht);
      if (spec.start > spec.stop) continue;
    } else if (lo) {
      spec.order = ScanOrder::Ascending;
      spec.start = scaled_lower(*lo, ht);
    } else if (up) {
      spec.order = ScanOrder::Descending;
      spec.start = scaled_upper(*up, ht);
    }
    std::optional<Int> hit;
    ScanOutcome sc = z_scan({&plan}, spec, opt, budget, res.stats, [&](const Int& a) {
      hit = a;
      return false;
    });
    if (hit) {
      res.status = SatStatus::Sat;
      res.witness = Rat(*hit) / Rat(ht);
      return res;
    }
    if (sc.budget_out) break;
  }
  res.status = SatStatus::SatUnverified;
  res.certificate =
      SatCertificate{std::nullopt, Int(1),
                     "local conditions hold at every prime up to the boundary; "
                     "the search budget ran out before an explicit witness appeared"};
  return res;
}

}  // namespace detail

/**
 * Decides satisfiability of a concrete system.  Local refutation yields Unsat
 * with a prime certificate; a found witness yields Sat; otherwise the answer
 * is SatUnverified, which by the local-global principle still means the system
 * is satisfiable — only the explicit witness is missing.  Interval constraints
 * are meaningful under the ordered theory only.
 */
inline SatResult check_sat(const GSystem& g, Theory theory,
                           std::optional<Interval> interval = std::nullopt,
                           const SolveOptions& opt = {}) {
  if (interval) {
    if (theory != Theory::Q2)
      throw std::invalid_argument("check_sat: interval constraints require the ordered theory");
    validate_interval(*interval);
  }
  if (theory == Theory::Z1) {
    SatResult res;
    detail::ZPlan plan = detail::build_zplan(g, opt);
    if (plan.dead) {
      res.status = SatStatus::Unsat;
      res.certificate = plan.refutation;
      return res;
    }
    std::uint64_t budget = opt.budget;
    detail::ScanSpec spec;
    std::optional<Int> hit;
    detail::z_scan({&plan}, spec, opt, budget, res.stats, [&](const Int& a) {
      hit = a;
      return false;
    });
    if (hit) {
      res.status = SatStatus::Sat;
      res.witness = Rat(*hit);
      return res;
    }
    res.status = SatStatus::SatUnverified;
    res.certificate =
        SatCertificate{std::nullopt, detail::plan_modulus(plan),
                       "local conditions hold at every prime up to the boundary; "
                       "the search budget ran out before an explicit witness appeared"};
    return res;
  }
  std::optional<Rat> lo, up;
  if (interval) {
    lo = interval->lower;
    up = interval->upper;
  }
  return detail::search_rational(g, theory, lo, up, {}, opt);
}

namespace detail {

/** Ascending positive witnesses of one integral system, inserted into acc. */
inline void z_enumerate_into(const GSystem& g, const std::vector<Int>& excluded,
                             std::size_t count, const SolveOptions& opt, std::set<Rat>& acc,
                             bool& starved) {
  ZPlan plan = build_zplan(g, opt);
  if (plan.dead) return;
  plan.excluded.insert(plan.excluded.end(), excluded.begin(), excluded.end());
  std::uint64_t budget = opt.budget;
  SearchStats stats;
  ScanSpec spec{ScanOrder::Ascending, Int(1), Int(0)};
  std::size_t got = 0;
  z_scan({&plan}, spec, opt, budget, stats, [&](const Int& a) {
    acc.insert(Rat(a));
    return ++got < count;
  });
  if (got < count) starved = true;
}

/** Rational witnesses of one system within an optional window, into acc. */
inline void q_enumerate_into(const GSystem& g, Theory theory, const std::optional<Rat>& lo,
                             const std::optional<Rat>& up, const std::vector<Rat>& excluded,
                             std::size_t count, const SolveOptions& opt, std::set<Rat>& acc,
                             bool& starved) {
  QLocalScan locals = q_local_scan(g, theory);
  if (locals.dead) return;
  std::uint64_t budget = opt.budget;
  std::set<Rat> mine;
  const bool two_sided = lo && up;
  const int ladder = two_sided ? opt.escalation_limit : 1;
  for (int t = 1; t <= ladder && mine.size() < count && budget > 0; ++t) {
    Int ht = locals.h * t;
    GSystem conj = conjugate(g, ht);
    ZPlan plan = build_zplan(conj, opt);
    if (plan.dead) break;
    for (const Rat& e : excluded) {
      Rat se = Rat(ht) * e;
      if (is_integral(se)) plan.excluded.push_back(num(se));
    }
    ScanSpec spec;
    if (two_sided) {
      spec.order = ScanOrder::Window;
      spec.start = scaled_lower(*lo, ht);
      spec.stop = scaled_upper(*up, ht);
      if (spec.start > spec.stop) continue;
    } else if (up) {
      spec.order = ScanOrder::Descending;
      spec.start = scaled_upper(*up, ht);
    } else if (lo) {
      spec.order = ScanOrder::Ascending;
      spec.start = scaled_lower(*lo, ht);
    } else {
      spec.order = ScanOrder::Ascending;
      spec.start = Int(1);
    }
    SearchStats stats;
    ScanOutcome sc = z_scan({&plan}, spec, opt, budget, stats, [&](const Int& a) {
      mine.insert(Rat(a) / Rat(ht));
      return mine.size() < count;
    });
    if (sc.budget_out) break;
    if (!two_sided) break;  // a single directional pass either finished or starved
  }
  if (mine.size() < count) starved = true;
  acc.insert(mine.begin(), mine.end());
}

}  // namespace detail

/**
 * Returns up to `count` distinct verified witnesses in ascending order:
 * positive integers scanned from 1 under the integer theory, rationals on a
 * denominator ladder otherwise.  Throws budget_error when the search budget
 * runs out with witnesses still missing; a genuinely finite solution set
 * (pinned by an interval that closes) simply returns fewer.
 */
inline std::vector<Rat> enumerate_witnesses(const GSystem& g, Theory theory,
                                            std::optional<Interval> interval, std::size_t count,
                                            const SolveOptions& opt = {}) {
  if (interval) {
    if (theory != Theory::Q2)
      throw std::invalid_argument(
          "enumerate_witnesses: interval constraints require the ordered theory");
    validate_interval(*interval);
  }
  std::vector<Rat> out;
  if (count == 0) return out;
  std::set<Rat> acc;
  bool starved = false;
  if (theory == Theory::Z1) {
    detail::z_enumerate_into(g, {}, count, opt, acc, starved);
  } else {
    std::optional<Rat> lo, up;
    if (interval) {
      lo = interval->lower;
      up = interval->upper;
    }
    detail::q_enumerate_into(g, theory, lo, up, {}, count, opt, acc, starved);
  }
  if (acc.size() < count && starved)
    throw budget_error("enumerate_witnesses: search budget exhausted before finding " +
                       std::to_string(count) + " witnesses");
  for (const Rat& w : acc) {
    out.push_back(w);
    if (out.size() == count) break;
  }
  return out;
}

/**
 * Exhaustively counts integer solutions in [lo, hi].  Requires the integer
 * theory and enough budget to scan the whole window; oversized local moduli
 * would make the count unreliable, so they raise instead.
 */
inline Int count_solutions(const GSystem& g, Theory theory, const Int& lo, const Int& hi,
                           const SolveOptions& opt = {}) {
  if (theory != Theory::Z1)
    throw std::invalid_argument("count_solutions: window counting is defined over the integers");
  if (lo > hi) return 0;
  SolveOptions scan_opt = opt;
  scan_opt.mode = WitnessMode::Factorize;  // a restricted lattice would undercount
  detail::ZPlan plan = detail::build_zplan(g, scan_opt);
  if (plan.dead) return 0;
  if (!plan.classes.empty())
    throw exactness_error("count_solutions: a local modulus is too large for exhaustive counting");
  std::uint64_t budget = scan_opt.budget;
  SearchStats stats;
  detail::ScanSpec spec{detail::ScanOrder::Window, lo, hi};
  Int total = 0;
  detail::ScanOutcome sc =
      detail::z_scan({&plan}, spec, scan_opt, budget, stats, [&](const Int&) {
        ++total;
        return true;
      });
  if (sc.budget_out)
    throw budget_error("count_solutions: budget exhausted before the window was fully scanned");
  return total;
}

namespace detail {

inline Int product_tree(const std::vector<Int>& v, std::size_t lo, std::size_t hi) {
  if (lo >= hi) return Int(1);
  if (hi - lo == 1) return v[lo];
  std::size_t mid = lo + (hi - lo) / 2;
  return product_tree(v, lo, mid) * product_tree(v, mid, hi);
}

}  // namespace detail

/**
 * Certified density data for an integral system: a positive rational epsilon
 * with solution-count(1..T) >= epsilon*T - lower-order terms + correction.
 * Raises invalid_argument when the system is locally unsatisfiable (its
 * density is zero and the bound would be vacuous).
 */
inline DensityEstimate density_estimate(const GSystem& g, const SolveOptions& opt = {}) {
  (void)opt;
  DensityEstimate est;
  for (const Rat& ci : g.c)
    if (!is_integral(ci)) throw theory_error("density_estimate: non-integer parameter");
  for (const Rat& ci : g.cp)
    if (!is_integral(ci)) throw theory_error("density_estimate: non-integer parameter");
  Int B = boundary(g).B;
  est.boundary = B;
  CondenseResult cr = condense(g, Boundary{B});  // raises when locally unsatisfiable
  est.modulus = cr.D;

  Int base = B;
  for (const Rat& ci : g.c) base = std::max(base, abs_int(num(ci)));
  for (const Rat& ci : g.cp) base = std::max(base, abs_int(num(ci)));
  Int q = base;
  for (int i = 0; i < g.shape.nprime; ++i) {
    q = next_prime_above(q);
    est.distinguished.push_back(q);
  }

  auto level_of = [&](const Int& p) {
    return static_cast<unsigned long>(2 + vp(p, g.shape.m));
  };
  Rat eps = Rat(1) / (Rat(2) * Rat(cr.D));
  for (const Int& pq : est.distinguished) eps /= Rat(pow_int(pq, level_of(pq)));
  const Int n(g.shape.n);
  if (n > 0) {
    Int P0 = std::max(base, Int(4096));
    if (!est.distinguished.empty()) P0 = std::max(P0, est.distinguished.back());
    P0 = std::max(P0, Int(2 * n + 1));
    if (!P0.fits_ulong_p() || P0.get_ui() > 0xffffffffUL)
      throw std::invalid_argument("density_estimate: tail cutoff too large");
    auto primes = prime_table(static_cast<std::uint32_t>(P0.get_ui()));
    for (std::uint32_t pu : *primes) {
      Int p(pu);
      if (p > P0) break;
      if (p <= B) continue;
      if (std::find(est.distinguished.begin(), est.distinguished.end(), p) !=
          est.distinguished.end())
        continue;
      eps *= Rat(1) - Rat(n) / Rat(pow_int(p, level_of(p)));
    }
    // Primes beyond the cutoff each cost a factor >= 1 - n/p^2, and the sum of
    // 1/p^2 past P0 stays below 1/P0.
    eps *= Rat(1) - Rat(n) / Rat(P0);
  }
  est.epsilon = eps;

  Int kn = abs_int(g.shape.k) * n;
  est.cutoff = kn == 0 ? Int(1) : floor_div(2 * kn * den(eps), num(eps)) + 1;
  const Int kExactCorrectionLimit(2'000'000);
  if (est.cutoff <= kExactCorrectionLimit) {
    std::vector<Int> factors;
    if (est.cutoff >= 2) {
      auto primes = prime_table(static_cast<std::uint32_t>(est.cutoff.get_ui()));
      for (std::uint32_t pu : *primes) {
        Int p(pu);
        if (p > est.cutoff) break;
        factors.push_back(pow_int(p, level_of(p)));
      }
    }
    Int magnitude = detail::product_tree(factors, 0, factors.size());
    est.correction = -magnitude;
    est.correction_exact = true;
    est.correction_bits = Int(static_cast<unsigned long>(mpz_sizeinbase(magnitude.get_mpz_t(), 2)));
  } else {
    // The prime product up to N has at most ~2.8855*N bits; report the bound
    // instead of materializing an astronomically large constant.
    est.correction = 0;
    est.correction_exact = false;
    est.correction_bits = floor_div(est.cutoff * 2885473, Int(1'000'000)) +
                          Int(static_cast<unsigned long>(mpz_sizeinbase(g.shape.m.get_mpz_t(), 2))) + 8;
  }
  return est;
}

/** Evaluates every variable-free atom and prunes constant subformulas. */
inline Formula fold_constants(const Formula& f, Theory theory, const ExactnessPolicy& policy = {}) {
  switch (f.kind) {
    case Formula::Kind::Atom: {
      if (!f.atom->term.coeffs.empty()) return f;
      try {
        return eval_ground(f, theory, policy) ? Formula::make_true() : Formula::make_false();
      } catch (const exactness_error&) {
        return f;  // too expensive to decide now; leave it in place
      }
    }
    case Formula::Kind::Not: {
      Formula c = fold_constants(f.children[0], theory, policy);
      if (c.is_true_constant()) return Formula::make_false();
      if (c.is_false_constant()) return Formula::make_true();
      return Formula::make_not(std::move(c));
    }
    case Formula::Kind::And: {
      std::vector<Formula> kids;
      for (const Formula& ch : f.children) {
        Formula c = fold_constants(ch, theory, policy);
        if (c.is_false_constant()) return Formula::make_false();
        if (!c.is_true_constant()) kids.push_back(std::move(c));
      }
      return Formula::make_and(std::move(kids));
    }
    case Formula::Kind::Or: {
      std::vector<Formula> kids;
      for (const Formula& ch : f.children) {
        Formula c = fold_constants(ch, theory, policy);
        if (c.is_true_constant()) return Formula::make_true();
        if (!c.is_false_constant()) kids.push_back(std::move(c));
      }
      return Formula::make_or(std::move(kids));
    }
    case Formula::Kind::Exists: {
      Formula body = fold_constants(f.children[0], theory, policy);
      if (body.is_true_constant() || body.is_false_constant()) return body;
      return Formula::make_exists(f.var, std::move(body));
    }
  }
  return f;  // unreachable
}

namespace detail {

/** The variable pinned to -te/ke by a positive equation (or closed endpoint). */
struct Pivot {
  Int ke;
  Term te;
};

/** ke * (value of k*x + rest at the pivot point); keeps terms integral. */
inline Term scaled_at_pivot(const Pivot& pv, const Int& kcoef, const Term& rest) {
  return pv.ke * rest - kcoef * pv.te;
}

inline Formula pivot_unode(const PCondition::Node& nd, const std::string& var, const Pivot& pv,
                           const Int& p) {
  using K = PCondition::Node::Kind;
  switch (nd.kind) {
    case K::True:
      return Formula::make_true();
    case K::False:
      return Formula::make_false();
    case K::Lit: {
      Term sc = sign_canonical(
          scaled_at_pivot(pv, nd.lit.term.coeff_of(var), nd.lit.term.without(var)));
      long lev = nd.lit.level + vp(p, abs_int(pv.ke));
      Formula a = Formula::make_atom(Atom::in_U(std::move(sc), p, lev));
      return nd.lit.negated ? Formula::make_not(std::move(a)) : a;
    }
    case K::And: {
      std::vector<Formula> kids;
      for (const auto& ch : nd.kids) kids.push_back(pivot_unode(ch, var, pv, p));
      return Formula::make_and(std::move(kids));
    }
    case K::Or: {
      std::vector<Formula> kids;
      for (const auto& ch : nd.kids) kids.push_back(pivot_unode(ch, var, pv, p));
      return Formula::make_or(std::move(kids));
    }
  }
  return Formula::make_true();  // unreachable
}

/**
 * Substitutes the pivot point into an entire disjunct, multiplying every
 * constraint through by ke so the result stays in the language: membership
 * levels shift by v_p(ke), subscripts scale by |ke|, and under the integer
 * theory divisibility conditions force the point to be integral.
 */
inline Formula disjunct_at_pivot(const SymbolicDisjunct& d, const std::string& var,
                                 const Pivot& pv, Theory theory,
                                 std::optional<std::size_t> skip_eq) {
  std::vector<Formula> kids = d.guards;
  if (theory == Theory::Z1)
    for (const auto& [qp, e] : factor_fully(abs_int(pv.ke)).factors)
      kids.push_back(
          Formula::make_atom(Atom::in_U(sign_canonical(pv.te), qp, static_cast<long>(e))));
  for (const auto& [p, cond] : d.theta) kids.push_back(pivot_unode(cond.root, var, pv, p));
  Int msub = d.m * abs_int(pv.ke);
  for (const Term& ci : d.c)
    kids.push_back(
        Formula::make_atom(Atom::in_P(sign_canonical(scaled_at_pivot(pv, d.k, ci)), msub)));
  for (const Term& ci : d.cp)
    kids.push_back(Formula::make_not(
        Formula::make_atom(Atom::in_P(sign_canonical(scaled_at_pivot(pv, d.k, ci)), msub))));
  for (std::size_t i = 0; i < d.residual_eq.size(); ++i) {
    if (skip_eq && *skip_eq == i) continue;
    const Formula& lit = d.residual_eq[i];
    bool neg = lit.kind == Formula::Kind::Not;
    const Atom& a = neg ? *lit.children[0].atom : *lit.atom;
    Term sc = sign_canonical(scaled_at_pivot(pv, a.term.coeff_of(var), a.term.without(var)));
    Formula eq = Formula::make_atom(Atom::eq_zero(std::move(sc)));
    kids.push_back(neg ? Formula::make_not(std::move(eq)) : std::move(eq));
  }
  for (const Formula& lit : d.residual_ord) {
    bool neg = lit.kind == Formula::Kind::Not;
    const Atom& a = neg ? *lit.children[0].atom : *lit.atom;
    Term sc = scaled_at_pivot(pv, a.term.coeff_of(var), a.term.without(var));
    if (pv.ke < 0) sc = -sc;  // dividing by a negative pivot flips the order
    Formula lt = Formula::make_atom(Atom::lt_zero(std::move(sc)));
    kids.push_back(neg ? Formula::make_not(std::move(lt)) : std::move(lt));
  }
  return Formula::make_and(std::move(kids));
}

/** A one-sided order constraint with endpoint -t/k. */
struct SymBound {
  Int k;
  Term t;
  bool closed;
};

inline void classify_bounds(const SymbolicDisjunct& d, const std::string& var,
                            std::vector<SymBound>& lowers, std::vector<SymBound>& uppers) {
  for (const Formula& lit : d.residual_ord) {
    bool neg = lit.kind == Formula::Kind::Not;
    const Atom& a = neg ? *lit.children[0].atom : *lit.atom;
    Int kc = a.term.coeff_of(var);
    if (kc == 0) continue;  // variable-free literals live in the guards
    Term rest = a.term.without(var);
    if (!neg) {
      if (kc > 0)
        uppers.push_back({kc, rest, false});
      else
        lowers.push_back({kc, rest, false});
    } else {
      if (kc > 0)
        lowers.push_back({kc, rest, true});
      else
        uppers.push_back({kc, rest, true});
    }
  }
}

/** endpoint(A) < endpoint(B) as a strict order condition on the parameters. */
inline Formula endpoint_less(const SymBound& A, const SymBound& B) {
  Term cross = B.k * A.t - A.k * B.t;
  bool same_sign = (A.k > 0) == (B.k > 0);
  return Formula::make_atom(Atom::lt_zero(same_sign ? -cross : cross));
}

inline Int symbolic_boundary(const SymbolicDisjunct& d) {
  Int B = std::max(abs_int(d.k), Int(static_cast<unsigned long>(d.c.size()))) + 1;
  for (const auto& [p, cond] : d.theta) {
    bool has_lit = false;
    PCondition::walk(cond.root, [&](const PCondition::Lit&) { has_lit = true; });
    if (has_lit && p > B) B = p;
  }
  return B;
}

/** theta_p together with the membership exclusions, kept symbolic. */
inline PCondition symbolic_local_condition(const SymbolicDisjunct& d, const std::string& var,
                                           const Int& p) {
  std::vector<PCondition::Node> kids;
  auto it = d.theta.find(p);
  if (it != d.theta.end()) kids.push_back(it->second.root);
  long level = 2 + vp(p, d.m);
  for (const Term& ci : d.c)
    kids.push_back(
        PCondition::Node::literal(PCondition::Lit{true, Term::variable(var, d.k) + ci, level}));
  PCondition cond;
  cond.p = p;
  cond.var = var;
  cond.root = PCondition::Node::conj(std::move(kids));
  return cond;
}

}  // namespace detail

/**
 * Eliminates the outermost existential quantifier, returning an equivalent
 * quantifier-free formula in the parameters.  A positive equation pins the
 * variable and turns into a substitution; otherwise negated equations drop
 * (finitely many barred points cannot exhaust the solution set), order
 * constraints reduce to nonempty-interior conditions plus the pinched cases
 * where a closed lower endpoint meets a closed upper endpoint, and each prime
 * up to the boundary contributes its local elimination.
 */
inline Formula eliminate_exists(const Formula& f, Theory theory, const SolveOptions& opt = {}) {
  if (f.kind != Formula::Kind::Exists)
    throw std::invalid_argument("eliminate_exists: expected an outermost existential quantifier");
  validate(f, theory);
  const std::string& var = f.var;
  auto disjuncts = to_gsystems_symbolic(f.children[0], var, theory, opt.max_disjuncts, opt.policy);

  std::vector<Formula> branches;
  for (const auto& d : disjuncts) {
    std::optional<std::size_t> pivot_at;
    for (std::size_t i = 0; i < d.residual_eq.size(); ++i) {
      const Formula& lit = d.residual_eq[i];
      if (lit.kind == Formula::Kind::Not) continue;
      if (lit.atom->term.coeff_of(var) != 0) {
        pivot_at = i;
        break;
      }
    }
    if (pivot_at) {
      const Atom& a = *d.residual_eq[*pivot_at].atom;
      detail::Pivot pv{a.term.coeff_of(var), a.term.without(var)};
      branches.push_back(detail::disjunct_at_pivot(d, var, pv, theory, pivot_at));
      continue;
    }

    std::vector<detail::SymBound> lowers, uppers;
    detail::classify_bounds(d, var, lowers, uppers);

    std::vector<Formula> kids = d.guards;
    for (const auto& L : lowers)
      for (const auto& U : uppers) kids.push_back(detail::endpoint_less(L, U));
    Int B = detail::symbolic_boundary(d);
    auto primes = prime_table(static_cast<std::uint32_t>(B.get_ui()));
    for (std::uint32_t pu : *primes) {
      Int p(pu);
      if (p > B) break;
      PCondition local = detail::symbolic_local_condition(d, var, p);
      kids.push_back(formula_of_pcondition(eliminate_exists_local(local, theory)));
    }
    branches.push_back(Formula::make_and(std::move(kids)));

    // A closed lower endpoint meeting a closed upper endpoint admits exactly
    // that point; substitute it, negated equations and all.
    for (const auto& L : lowers) {
      if (!L.closed) continue;
      for (const auto& U : uppers) {
        if (!U.closed) continue;
        Term cross = U.k * L.t - L.k * U.t;
        std::vector<Formula> pin;
        pin.push_back(Formula::make_atom(Atom::eq_zero(detail::sign_canonical(cross))));
        pin.push_back(detail::disjunct_at_pivot(d, var, detail::Pivot{L.k, L.t}, theory,
                                                std::nullopt));
        branches.push_back(Formula::make_and(std::move(pin)));
      }
    }
  }
  return fold_constants(Formula::make_or(std::move(branches)), theory, opt.policy);
}

/** Truth value of a sentence: eliminate the quantifier if present, then fold. */
inline bool decide_sentence(const Formula& f, Theory theory, const SolveOptions& opt = {}) {
  validate(f, theory);
  if (!free_variables(f).empty())
    throw std::invalid_argument("decide_sentence: the formula has free variables");
  if (f.kind == Formula::Kind::Exists)
    return eval_ground(eliminate_exists(f, theory, opt), theory, opt.policy);
  return eval_ground(f, theory, opt.policy);
}

namespace detail {

/** Residual structure of one normalized disjunct in a single free variable. */
struct DisjunctShape {
  bool pinned = false;           // positive equations confine x to eq_points
  std::vector<Rat> eq_points;
  std::vector<Rat> excluded;     // points barred by negated equations
  std::vector<Rat> ord_pinned;   // closed endpoints worth testing directly
  std::optional<Rat> lo, up;     // open interior window
  bool window_empty = false;
};

inline DisjunctShape analyze_disjunct(const NormalizedDisjunct& d, const std::string& var,
                                      const std::optional<Interval>& iv) {
  DisjunctShape ctx;
  for (const Formula& lit : d.residual_eq) {
    bool neg = lit.kind == Formula::Kind::Not;
    const Atom& a = neg ? *lit.children[0].atom : *lit.atom;
    Int kc = a.term.coeff_of(var);
    if (kc == 0) continue;
    Rat pt = -a.term.without(var).constant / Rat(kc);
    if (neg)
      ctx.excluded.push_back(pt);
    else {
      ctx.pinned = true;
      ctx.eq_points.push_back(pt);
    }
  }
  auto add_lower = [&](const Rat& pt, bool closed) {
    if (!ctx.lo || pt > *ctx.lo) ctx.lo = pt;
    if (closed) ctx.ord_pinned.push_back(pt);
  };
  auto add_upper = [&](const Rat& pt, bool closed) {
    if (!ctx.up || pt < *ctx.up) ctx.up = pt;
    if (closed) ctx.ord_pinned.push_back(pt);
  };
  for (const Formula& lit : d.residual_ord) {
    bool neg = lit.kind == Formula::Kind::Not;
    const Atom& a = neg ? *lit.children[0].atom : *lit.atom;
    Int kc = a.term.coeff_of(var);
    if (kc == 0) continue;
    Rat pt = -a.term.without(var).constant / Rat(kc);
    if (!neg) {
      if (kc > 0)
        add_upper(pt, false);
      else
        add_lower(pt, false);
    } else {
      if (kc > 0)
        add_lower(pt, true);
      else
        add_upper(pt, true);
    }
  }
  if (iv) {
    if (iv->lower) add_lower(*iv->lower, false);
    if (iv->upper) add_upper(*iv->upper, false);
  }
  if (ctx.lo && ctx.up && !(*ctx.lo < *ctx.up)) ctx.window_empty = true;
  return ctx;
}

/** Full check of a single candidate point against one disjunct. */
inline bool admissible_point(const NormalizedDisjunct& d, const std::string& var, Theory theory,
                             const std::optional<Interval>& iv, const Rat& pt,
                             const ExactnessPolicy& policy) {
  if (theory == Theory::Z1 && !is_integral(pt)) return false;
  if (iv) {
    if (iv->lower && !(*iv->lower < pt)) return false;
    if (iv->upper && !(pt < *iv->upper)) return false;
  }
  try {
    return eval_ground(substitute(formula_of_disjunct(d, var), var, pt, theory), theory, policy);
  } catch (const exactness_error&) {
    return false;  // cannot certify the point, so it is not offered as a witness
  }
}

inline SatResult solve_normalized(const NormalizedDisjunct& d, const std::string& var,
                                  Theory theory, const std::optional<Interval>& iv,
                                  const SolveOptions& opt) {
  SatResult res;
  DisjunctShape ctx = analyze_disjunct(d, var, iv);
  if (ctx.pinned) {
    for (const Rat& pt : ctx.eq_points)
      if (admissible_point(d, var, theory, iv, pt, opt.policy)) {
        res.status = SatStatus::Sat;
        res.witness = pt;
        return res;
      }
    res.status = SatStatus::Unsat;
    res.certificate = SatCertificate{
        std::nullopt, Int(1), "equations pin the variable to points failing the other constraints"};
    return res;
  }
  for (const Rat& pt : ctx.ord_pinned)
    if (admissible_point(d, var, theory, iv, pt, opt.policy)) {
      res.status = SatStatus::Sat;
      res.witness = pt;
      return res;
    }
  if (ctx.window_empty) {
    res.status = SatStatus::Unsat;
    res.certificate =
        SatCertificate{std::nullopt, Int(1), "order constraints leave no open interior"};
    return res;
  }
  if (theory == Theory::Z1) {
    ZPlan plan = build_zplan(d.system, opt);
    if (plan.dead) {
      res.status = SatStatus::Unsat;
      res.certificate = plan.refutation;
      return res;
    }
    for (const Rat& e : ctx.excluded)
      if (is_integral(e)) plan.excluded.push_back(num(e));
    std::uint64_t budget = opt.budget;
    ScanSpec spec;
    std::optional<Int> hit;
    z_scan({&plan}, spec, opt, budget, res.stats, [&](const Int& a) {
      hit = a;
      return false;
    });
    if (hit) {
      res.status = SatStatus::Sat;
      res.witness = Rat(*hit);
      return res;
    }
    res.status = SatStatus::SatUnverified;
    res.certificate =
        SatCertificate{std::nullopt, plan_modulus(plan),
                       "local conditions hold at every prime up to the boundary; "
                       "the search budget ran out before an explicit witness appeared"};
    return res;
  }
  SatResult qr = search_rational(d.system, theory, ctx.lo, ctx.up, ctx.excluded, opt);
  return qr;
}

}  // namespace detail

/**
 * Satisfiability of a quantifier-free formula in one free variable (an
 * outermost existential is unwrapped first).  Each normalized disjunct is
 * solved in turn; the statuses combine as Sat > SatUnverified > Unsat.
 */
inline SatResult check_sat_formula(const Formula& f, const std::string& var, Theory theory,
                                   std::optional<Interval> interval = std::nullopt,
                                   const SolveOptions& opt = {}) {
  if (interval) {
    if (theory != Theory::Q2)
      throw std::invalid_argument(
          "check_sat_formula: interval constraints require the ordered theory");
    validate_interval(*interval);
  }
  if (f.kind == Formula::Kind::Exists)
    return check_sat_formula(f.children[0], f.var, theory, interval, opt);
  validate(f, theory);
  auto fv = free_variables(f);
  if (fv.empty()) {
    SatResult res;
    bool truth = eval_ground(f, theory, opt.policy);
    res.status = truth ? SatStatus::Sat : SatStatus::Unsat;
    if (truth) {
      // The formula does not mention the variable, so any admissible value
      // serves as a witness; stay inside the interval when one is given.
      Rat w(0);
      if (interval) {
        if (interval->lower && interval->upper)
          w = (*interval->lower + *interval->upper) / 2;
        else if (interval->lower)
          w = *interval->lower + 1;
        else if (interval->upper)
          w = *interval->upper - 1;
      }
      res.witness = w;
    } else {
      res.certificate = SatCertificate{std::nullopt, Int(1), "ground formula evaluates to false"};
    }
    return res;
  }
  if (fv.size() != 1 || !fv.count(var))
    throw std::invalid_argument("check_sat_formula: expected exactly the free variable '" + var +
                                "'");
  auto ds = to_gsystems(f, var, theory, opt.max_disjuncts, opt.policy);
  SatResult agg;
  bool saw_unverified = false;
  std::optional<SatCertificate> first_cert;
  for (const auto& d : ds) {
    if (!d.guard) continue;
    SatResult r = detail::solve_normalized(d, var, theory, interval, opt);
    agg.stats += r.stats;
    if (r.status == SatStatus::Sat) {
      r.stats = agg.stats;
      return r;
    }
    if (r.status == SatStatus::SatUnverified)
      saw_unverified = true;
    else if (!first_cert && r.certificate)
      first_cert = r.certificate;
  }
  if (saw_unverified) {
    agg.status = SatStatus::SatUnverified;
    agg.certificate =
        SatCertificate{std::nullopt, Int(1),
                       "a branch is satisfiable by its local conditions; no witness within budget"};
  } else {
    agg.status = SatStatus::Unsat;
    agg.certificate = first_cert ? *first_cert
                                 : SatCertificate{std::nullopt, Int(1),
                                                  "no disjunct survives normalization"};
  }
  return agg;
}

/**
 * Distinct verified witnesses of a one-variable formula, ascending, at most
 * `count` of them.  A finite solution set may return fewer; running out of
 * search budget with witnesses still owed raises budget_error.
 */
inline std::vector<Rat> enumerate_witnesses_formula(const Formula& f, const std::string& var,
                                                    Theory theory,
                                                    std::optional<Interval> interval,
                                                    std::size_t count,
                                                    const SolveOptions& opt = {}) {
  if (interval) {
    if (theory != Theory::Q2)
      throw std::invalid_argument(
          "enumerate_witnesses_formula: interval constraints require the ordered theory");
    validate_interval(*interval);
  }
  if (f.kind == Formula::Kind::Exists)
    return enumerate_witnesses_formula(f.children[0], f.var, theory, interval, count, opt);
  validate(f, theory);
  auto fv = free_variables(f);
  if (fv.size() != 1 || !fv.count(var))
    throw std::invalid_argument("enumerate_witnesses_formula: expected exactly the free variable '" +
                                var + "'");
  std::vector<Rat> out;
  if (count == 0) return out;
  auto ds = to_gsystems(f, var, theory, opt.max_disjuncts, opt.policy);
  std::set<Rat> acc;
  bool starved = false;
  for (const auto& d : ds) {
    if (!d.guard) continue;
    detail::DisjunctShape ctx = detail::analyze_disjunct(d, var, interval);
    if (ctx.pinned) {
      for (const Rat& pt : ctx.eq_points)
        if (detail::admissible_point(d, var, theory, interval, pt, opt.policy)) acc.insert(pt);
      continue;
    }
    for (const Rat& pt : ctx.ord_pinned)
      if (detail::admissible_point(d, var, theory, interval, pt, opt.policy)) acc.insert(pt);
    if (ctx.window_empty) continue;
    if (theory == Theory::Z1) {
      std::vector<Int> excl;
      for (const Rat& e : ctx.excluded)
        if (is_integral(e)) excl.push_back(num(e));
      detail::z_enumerate_into(d.system, excl, count, opt, acc, starved);
    } else {
      detail::q_enumerate_into(d.system, theory, ctx.lo, ctx.up, ctx.excluded, count, opt, acc,
                               starved);
    }
  }
  if (acc.size() < count && starved)
    throw budget_error("enumerate_witnesses_formula: search budget exhausted before finding " +
                       std::to_string(count) + " witnesses");
  for (const Rat& w : acc) {
    out.push_back(w);
    if (out.size() == count) break;
  }
  return out;
}

}  // namespace sqf
