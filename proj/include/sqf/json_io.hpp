#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sqf/constructions.hpp"
#include "sqf/core.hpp"
#include "sqf/decide.hpp"

namespace sqf {

/**
 * JSON renderings of solver results.  All exact numbers are emitted as
 * strings ("badRational" truncation never happens), keys appear in a fixed
 * order, and nothing here depends on worker count or timing, so equal inputs
 * produce byte-identical documents.
 */
using Json = nlohmann::ordered_json;

namespace detail {

inline std::string num_str(const Int& v) { return v.get_str(); }
inline std::string num_str(const Rat& v) { return v.get_str(); }

}  // namespace detail

inline std::string status_string(SatStatus s) {
  switch (s) {
    case SatStatus::Sat:
      return "sat";
    case SatStatus::SatUnverified:
      return "sat_unverified";
    case SatStatus::Unsat:
      return "unsat";
  }
  return "unsat";
}

inline Json json_of_certificate(const SatCertificate& c) {
  Json j;
  j["prime"] = c.prime ? Json(detail::num_str(*c.prime)) : Json(nullptr);
  j["modulus"] = detail::num_str(c.modulus);
  j["analysis"] = c.analysis;
  return j;
}

inline Json json_of_stats(const SearchStats& s) {
  Json j;
  j["candidates_tested"] = s.candidates_tested;
  j["sieve_windows"] = s.sieve_windows;
  return j;
}

inline Json json_of_result(const SatResult& r) {
  Json j;
  j["status"] = status_string(r.status);
  if (r.witness) j["witness"] = detail::num_str(*r.witness);
  if (r.certificate) j["certificate"] = json_of_certificate(*r.certificate);
  j["stats"] = json_of_stats(r.stats);
  return j;
}

inline Json json_of_witnesses(const std::vector<Rat>& ws) {
  Json j;
  j["status"] = ws.empty() ? "unsat" : "sat";
  Json arr = Json::array();
  for (const Rat& w : ws) arr.push_back(detail::num_str(w));
  j["witnesses"] = std::move(arr);
  return j;
}

inline Json json_of_density(const DensityEstimate& d) {
  Json j;
  j["status"] = "ok";
  j["epsilon"] = detail::num_str(d.epsilon);
  j["modulus"] = detail::num_str(d.modulus);
  j["cutoff"] = detail::num_str(d.cutoff);
  j["correction"] = detail::num_str(d.correction);
  j["correction_exact"] = d.correction_exact;
  j["correction_bits"] = detail::num_str(d.correction_bits);
  Json dist = Json::array();
  for (const Int& p : d.distinguished) dist.push_back(detail::num_str(p));
  j["distinguished"] = std::move(dist);
  j["boundary"] = detail::num_str(d.boundary);
  return j;
}

inline Json json_of_ipk(const IPkWitness& w) {
  Json j;
  j["status"] = "ok";
  j["k"] = w.k;
  j["n"] = w.n;
  j["start"] = detail::num_str(w.start);
  j["step"] = detail::num_str(w.step);
  Json ad = Json::array();
  for (const Int& a : w.a_delta) ad.push_back(detail::num_str(a));
  j["a_delta"] = std::move(ad);
  Json bb = Json::array();
  for (const auto& row : w.b) {
    Json r = Json::array();
    for (const Int& v : row) r.push_back(detail::num_str(v));
    bb.push_back(std::move(r));
  }
  j["b"] = std::move(bb);
  return j;
}

}  // namespace sqf
