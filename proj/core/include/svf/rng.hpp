#pragma once

#include <cmath>
#include <cstdint>

namespace svf {

// Counter-based RNG: every draw is a pure hash of (seed, stream, counter),
// so results do not depend on evaluation order or thread count.
uint64_t hash_counter(uint64_t seed, uint64_t stream, uint64_t counter);

inline double u64_to_unit_double(uint64_t bits) {
  // 53 high bits -> [0, 1)
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

struct CounterRng {
  uint64_t seed = 0;
  uint64_t stream = 0;
  uint64_t counter = 0;

  CounterRng() = default;
  CounterRng(uint64_t seed_, uint64_t stream_, uint64_t counter_ = 0)
      : seed(seed_), stream(stream_), counter(counter_) {}

  uint64_t next_u64() { return hash_counter(seed, stream, counter++); }
  double uniform() { return u64_to_unit_double(next_u64()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  uint64_t uniform_index(uint64_t n) { return n ? next_u64() % n : 0; }

  double normal() {
    // Box-Muller; consumes two counters.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.28318530717958647692 * u2);
  }
};

// Stream ids keep independent uses of the same seed decorrelated.
namespace rng_stream {
constexpr uint64_t kParamInit = 1;
constexpr uint64_t kRayPick = 2;
constexpr uint64_t kCoarseJitter = 3;
constexpr uint64_t kFineJitter = 4;
constexpr uint64_t kPixelJitter = 5;
constexpr uint64_t kScene = 6;
constexpr uint64_t kMisc = 7;
constexpr uint64_t kBake = 8;
constexpr uint64_t kDistill = 9;
} // namespace rng_stream

} // namespace svf
