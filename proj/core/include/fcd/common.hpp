#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fcd {

// Scalar type used by the production pipeline. Numerical tests instantiate
// the templated kernels with double where tighter tolerances are needed.
using Real = float;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline void check_arg(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Resolves a worker-count setting: 0 means "use the hardware count".
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Static-partition parallel for. Worker t owns the contiguous index range
// [t*chunk, ...), so any per-index work is reproducible regardless of
// scheduling. Callers that reduce must combine per-worker results in worker
// order to stay bit-deterministic for a fixed worker count.
inline void parallel_for(int64_t n, int threads,
                         const std::function<void(int64_t, int64_t, int)>& body) {
  threads = resolve_threads(threads);
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    body(0, n, 0);
    return;
  }
  int workers = static_cast<int>(std::min<int64_t>(threads, n));
  int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    int64_t lo = t * chunk;
    int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi, t] { body(lo, hi, t); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace fcd
