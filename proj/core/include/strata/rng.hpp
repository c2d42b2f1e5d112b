#pragma once

#include <cmath>
#include <cstdint>

namespace strata {

/// splitmix64. Small, fast, and identical on every platform, which is what
/// keeps sampled datasets and seeded builds reproducible bit for bit.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, n). Rejection-free multiply-shift; the modulo bias is
    /// below 2^-32 for every n used here.
    std::uint64_t bounded(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller.
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
};

/// Derives an independent stream from (seed, tag). Used to hand each child
/// task its own generator so parallel work stays order-independent.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    Rng r(seed ^ (0x9e3779b97f4a7c15ull + tag * 0xd1b54a32d192ed03ull));
    r.next();
    return r.next();
}

} // namespace strata
