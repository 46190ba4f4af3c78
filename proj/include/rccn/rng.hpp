#pragma once

#include <cstdint>
#include <random>

namespace rccn {

/// Deterministic RNG wrapper. std::mt19937_64's output sequence is fixed by
/// the standard; the distribution helpers below avoid the
/// implementation-defined std::uniform_* distributions so streams are
/// reproducible bitwise across compilers.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    /// Derives an independent substream, e.g. per sample index.
    static Rng substream(uint64_t seed, uint64_t index) {
        return Rng(splitmix64(seed ^ splitmix64(index + 0x9e3779b97f4a7c15ULL)));
    }

    uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), n >= 1. Rejection-free modulo bias is
    /// negligible for the small n used here, but reject anyway to keep the
    /// stream exactly uniform.
    uint64_t uniform_int(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    static uint64_t splitmix64(uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace rccn
