// Copyright 2026 The dmnloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DMNLOC_RNG_HPP
#define DMNLOC_RNG_HPP

#include <cmath>
#include <cstdint>

namespace dmnloc {

constexpr std::uint64_t fnv1a(const char* s) {
  std::uint64_t h = 1469598103934665603ull;
  while (*s) {
    h ^= static_cast<std::uint64_t>(*s++);
    h *= 1099511628211ull;
  }
  return h;
}

// Counter-based generator: output i of stream (seed, stream) is a pure
// function of (seed, stream, i). Streams derived by tag never collide with
// the parent sequence, so environments, renders and episode sampling stay
// independently reproducible under any evaluation order or thread count.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed ^ mix(stream ^ 0x9e3779b97f4a7c15ull))), ctr_(0) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
    return mix(seed ^ mix(tag));
  }

  Rng fork(std::uint64_t tag) const { return Rng(key_, mix(tag) ^ 0x517cc1b727220a95ull); }

  std::uint64_t next_u64() { return mix(key_ + 0xd1342543de82ef95ull * ++ctr_); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Box-Muller; consumes two uniforms per draw, no cached spare.
  double gauss() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double gauss(double mu, double sigma) { return mu + sigma * gauss(); }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_;
};

}  // namespace dmnloc

#endif  // DMNLOC_RNG_HPP
