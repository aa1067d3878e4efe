// Copyright 2026 The CuteMaxVar Authors. All Rights Reserved.
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
// =============================================================================

// Counter-based random streams. A stream is identified by (seed, domain,
// round, channel) and the i-th draw is a pure function of that key and i, so
// results never depend on thread scheduling or call order.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace cmv {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Purpose tags keep streams for different consumers disjoint.
enum class Domain : std::uint64_t {
  Quantizer = 1,
  Minibatch = 2,
  Init = 3,
  DataGen = 4,
  Test = 5,
};

// Channel value reserved for the server's downlink quantizer.
inline constexpr std::uint64_t kDownlinkChannel = 0xffffffffffffffffULL;

class CounterRng {
 public:
  CounterRng() = default;
  CounterRng(std::uint64_t seed, Domain domain, std::uint64_t round,
             std::uint64_t channel)
      : key_(splitmix64(splitmix64(splitmix64(seed ^ splitmix64(
                static_cast<std::uint64_t>(domain))) ^ round) ^ channel)) {}

  std::uint64_t bits(std::uint64_t index) const {
    return splitmix64(key_ ^ splitmix64(index));
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t index) const {
    return static_cast<double>(bits(index) >> 11) * 0x1.0p-53;
  }

  // Sequential interface for consumers that need an open-ended stream.
  std::uint64_t next_bits() { return bits(counter_++); }
  double next_uniform() { return uniform(counter_++); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = ~0ULL - (~0ULL % n);
    for (;;) {
      const std::uint64_t x = next_bits();
      if (x < limit) return x % n;
    }
  }

  // Standard normal via Box-Muller (one value per two uniforms).
  double next_normal() {
    double u1 = next_uniform();
    const double u2 = next_uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace cmv
