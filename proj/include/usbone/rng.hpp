#pragma once

#include <cmath>
#include <cstdint>
#include <random>

// Deterministic random draws. std::mt19937_64 has a portable, standardized
// output sequence; the mappings below avoid std::*_distribution, whose
// algorithms differ between standard libraries.
namespace usbone::rng {

class Engine {
public:
    explicit Engine(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, bound), bound >= 1. Rejection sampling keeps
    // the draw unbiased.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % bound;
    }

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Standard normal via Box-Muller; one spare cached per pair.
    double next_normal();

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline double Engine::next_normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = next_double();
    } while (u1 <= 0.0);
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(two_pi * u2);
    has_spare_ = true;
    return r * std::cos(two_pi * u2);
}

// Derives an independent stream seed from a base seed and a stream tag.
// SplitMix64 finalizer; good avalanche, stable across platforms.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace usbone::rng
