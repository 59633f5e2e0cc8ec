// include/iqstream/parallel.hpp

// Copyright 2026 The iqstream Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IQSTREAM_PARALLEL_HPP_
#define IQSTREAM_PARALLEL_HPP_

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace iqstream {

// Process-wide worker budget, set once by the CLI from --jobs. Results must
// never depend on this value: parallel sections write to disjoint slots and
// all reductions happen afterwards in index order.
inline int& job_count() {
  static int jobs = static_cast<int>(
      std::max(1u, std::thread::hardware_concurrency()));
  return jobs;
}

inline void set_jobs(int n) { job_count() = n < 1 ? 1 : n; }

// Runs func(i) for i in [0, n). Each index must touch only its own data.
template <typename Func>
void parallel_for(std::size_t n, Func&& func) {
  const int jobs = std::min<int>(job_count(), static_cast<int>(n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) func(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs) - 1);
  const std::size_t chunk = (n + static_cast<std::size_t>(jobs) - 1) /
                            static_cast<std::size_t>(jobs);
  auto run_range = [&func](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) func(i);
  };
  for (int t = 1; t < jobs; ++t) {
    const std::size_t lo = static_cast<std::size_t>(t) * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back(run_range, lo, hi);
  }
  run_range(0, std::min(n, chunk));
  for (auto& w : workers) w.join();
}

}  // namespace iqstream

#endif  // IQSTREAM_PARALLEL_HPP_
