#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

namespace sqf {

/**
 * Deterministic chunked parallel map over an index range.
 *
 * Indices begin, begin+1, ... are processed in chunks of `jobs`; each chunk is
 * computed on worker threads (inline when jobs <= 1) and the results are handed
 * to `consume` strictly in index order.  `consume` returns false to stop early;
 * the function then returns false, and true once the range is exhausted.
 *
 * `work` must be a pure function of its index: callers rely on the output being
 * byte-identical no matter how many jobs run.  Exceptions thrown by `work` are
 * rethrown on the calling thread, again in index order.
 */
template <class Result>
inline bool chunked_parallel(std::uint64_t begin, std::uint64_t end, int jobs,
                             const std::function<Result(std::uint64_t)>& work,
                             const std::function<bool(std::uint64_t, Result&&)>& consume) {
  const std::uint64_t stride = jobs > 1 ? static_cast<std::uint64_t>(jobs) : 1;
  for (std::uint64_t base = begin; base < end; base += stride) {
    const std::uint64_t m = std::min<std::uint64_t>(stride, end - base);
    if (m == 1) {
      if (!consume(base, work(base))) return false;
      continue;
    }
    std::vector<std::optional<Result>> slots(m);
    std::vector<std::exception_ptr> errors(m);
    std::vector<std::thread> pool;
    pool.reserve(m);
    for (std::uint64_t t = 0; t < m; ++t)
      pool.emplace_back([&, t] {
        try {
          slots[t] = work(base + t);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (std::uint64_t t = 0; t < m; ++t) {
      if (errors[t]) std::rethrow_exception(errors[t]);
      if (!consume(base + t, std::move(*slots[t]))) return false;
    }
    if (end - base <= stride) break;
  }
  return true;
}

}  // namespace sqf
