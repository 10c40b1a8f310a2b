// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

namespace maediff {

// SplitMix64 (Steele, Lea, Flood 2014). All randomness in the project is
// derived from this generator so runs are reproducible across platforms for
// every integer-valued draw. Floating-point draws additionally depend on
// libm's log/cos/sin, which are stable within one toolchain.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform integer in [lo, hi] via rejection (no modulo bias).
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
        uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        uint64_t v;
        do {
            v = next();
        } while (v >= limit);
        return lo + static_cast<int64_t>(v % range);
    }

    // Standard normal via Box-Muller, one value per call (pair cached).
    double gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

private:
    uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

// One SplitMix64 scramble round applied to a bare value.
inline uint64_t mix64(uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Deterministic derivation of sub-stream seeds: every consumer of randomness
// names its stream by (seed, tag, index) so resuming a run mid-stream is
// bit-identical to never having stopped.
inline uint64_t derive_seed(uint64_t seed, uint64_t tag, uint64_t index = 0) {
    return mix64(seed ^ mix64(tag ^ 0xA0761D6478BD642FULL) ^ mix64(index * 0xE7037ED1A0B428DBULL + 1));
}

// Stream tags for counter-based seed derivation. Every random decision in a
// run is a pure function of (run seed, tag, index), which makes resuming from
// a checkpoint bit-identical to an uninterrupted run.
namespace seed_tag {
inline constexpr uint64_t kTimestep = 1;
inline constexpr uint64_t kNoise = 2;
inline constexpr uint64_t kPatch = 3;
inline constexpr uint64_t kBatch = 4;
inline constexpr uint64_t kValPair = 5;
inline constexpr uint64_t kValNoise = 6;
inline constexpr uint64_t kPhantom = 7;
inline constexpr uint64_t kLesion = 8;
inline constexpr uint64_t kReconNoise = 9;
inline constexpr uint64_t kInit = 10;
} // namespace seed_tag

} // namespace maediff
