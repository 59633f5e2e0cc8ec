// include/iqstream/rng.hpp

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

#ifndef IQSTREAM_RNG_HPP_
#define IQSTREAM_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace iqstream {

// splitmix64 (Steele, Lea, Flood). Used both as a seed mixer and as the
// core generator; all randomness in the repo flows through this so results
// are bit-identical across standard libraries and platforms.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t s = a;
  uint64_t x = splitmix64(s);
  s = x ^ b;
  return splitmix64(s);
}

// Small deterministic generator with the handful of distributions the repo
// needs. Not cryptographic; period and quality of splitmix64 are plenty for
// corpus synthesis and weight init.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double next_real01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [lo, hi] inclusive. Modulo bias is negligible for the
  // tiny ranges used here and keeps the draw count fixed (one per call).
  int64_t next_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_real01();
  }

  // Standard normal via Box-Muller. Consumes exactly two draws per value so
  // the stream position stays a pure function of the call count.
  double next_gaussian() {
    double u1 = next_real01();
    double u2 = next_real01();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace iqstream

#endif  // IQSTREAM_RNG_HPP_
