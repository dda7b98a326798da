#pragma once

// Reproducible random streams.
//
// Engine: std::mt19937_64, whose output sequence is fixed by the standard.
// Seeding: every logical substream (population, one user-day, one user-match
// ...) gets its own engine seeded with a SplitMix64 chain over
// (seed, tag, a, b), so results do not depend on generation order or thread
// count.
// Distributions: the std:: distribution classes are implementation-defined,
// so the few needed here are written out explicitly:
//   uniform01      (x >> 11) * 2^-53
//   uniform_below  Lemire multiply-shift with rejection
//   bernoulli(p)   uniform01 < p
//   poisson(mean)  Knuth product of uniforms, split into chunks of mean <= 16

#include <cmath>
#include <cstdint>
#include <random>

namespace cdrmob {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t x = splitmix64(seed);
    x = splitmix64(x ^ tag);
    x = splitmix64(x ^ a);
    return splitmix64(x ^ b);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, std::uint64_t tag, std::uint64_t a = 0, std::uint64_t b = 0)
        : engine_(derive_seed(seed, tag, a, b)) {}

    std::uint64_t next() { return engine_(); }

    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n), n > 0.
    std::uint64_t uniform_below(std::uint64_t n) {
        unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    std::uint64_t poisson(double mean) {
        std::uint64_t total = 0;
        while (mean > 0.0) {
            const double chunk = std::min(mean, 16.0);
            mean -= chunk;
            const double limit = std::exp(-chunk);
            double prod = uniform01();
            while (prod > limit) {
                ++total;
                prod *= uniform01();
            }
        }
        return total;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace cdrmob
