#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace afnet {

// Counter-based RNG (splitmix64 mix of seed and counter). Identical
// (seed, counter) pairs produce identical draw sequences on every platform,
// which is what checkpoint resume and the determinism tests rely on.
struct RngState {
    uint64_t seed = 0;
    uint64_t counter = 0;

    static uint64_t mix(uint64_t x) {
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    uint64_t next_u64() {
        uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (++counter);
        return mix(x);
    }

    // [0, 1)
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // (0, 1), never returns an endpoint so log(u) and log(-log(u)) are finite
    double next_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double next_normal() {
        const double u1 = next_open();
        const double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // G = -log(-log U), U ~ Unif(0,1)
    double next_gumbel() {
        return -std::log(-std::log(next_open()));
    }

    // Independent stream; derived streams with distinct tags never collide
    // with the parent or with each other in practice.
    RngState derive(uint64_t tag) const {
        return RngState{mix(seed ^ (0x9E3779B97F4A7C15ULL * (tag + 1))), 0};
    }

    template <class S>
    std::vector<S> normal_vec(size_t n, double stddev = 1.0, double mean = 0.0) {
        std::vector<S> out(n);
        for (size_t i = 0; i < n; ++i)
            out[i] = static_cast<S>(mean + stddev * next_normal());
        return out;
    }

    template <class S>
    std::vector<S> uniform_vec(size_t n, double lo = 0.0, double hi = 1.0) {
        std::vector<S> out(n);
        for (size_t i = 0; i < n; ++i)
            out[i] = static_cast<S>(lo + (hi - lo) * next_uniform());
        return out;
    }
};

}  // namespace afnet
