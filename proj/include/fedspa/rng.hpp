// Copyright 2025 The fedspa simulator authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDSPA_RNG_HPP_
#define FEDSPA_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace fedspa {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// splitmix64 finalizer. Used both as the generator step and to derive child
// stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Seeds for child streams along a labeled path, e.g.
// derive_seed(master, round, agent, purpose). Each label is folded through
// mix64 so that sibling streams are statistically independent. The layout is
// part of the reproducibility contract: runs are a pure function of the
// master seed, so the fold order must never change.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = base;
  h = mix64(h ^ (a + 0x1ULL) * kGoldenGamma);
  h = mix64(h ^ (b + 0x2ULL) * kGoldenGamma);
  h = mix64(h ^ (c + 0x3ULL) * kGoldenGamma);
  return h;
}

// Deterministic seeded stream (splitmix64). Every simulated agent owns its
// own streams; a stream is never shared across concurrent callers.
// Draws are reproducible for a fixed seed on a fixed platform; Gaussian
// values go through libm and are not bit-portable across platforms.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return mix64(state_ += kGoldenGamma); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound), unbiased via rejection. bound >= 1.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t limit = bound * ((~std::uint64_t{0}) / bound);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
  }

  // One draw from N(0, sigma^2) via Box-Muller (cosine branch only, so each
  // draw consumes exactly two uniforms).
  double next_gaussian(double sigma) {
    const double u1 =
        static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    return sigma * r * std::cos(kTwoPi * u2);
  }

  // Child stream derived from the current state without advancing it.
  RngStream split(std::uint64_t key) const {
    return RngStream(derive_seed(state_, key));
  }

 private:
  std::uint64_t state_;
};

}  // namespace fedspa

#endif  // FEDSPA_RNG_HPP_
