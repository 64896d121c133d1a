#pragma once

#include <cstdint>
#include <initializer_list>

namespace hetrl::rng {

// splitmix64 finalizer. Full-period bijection on 64-bit state increments.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Counter-based generator. A stream is keyed by (seed, path...) and draws
// are a pure function of (key, counter), so draw k of stream s is the same
// number no matter how many threads run or in what order streams are
// consumed. Simulation code keys one stream per (trajectory, purpose).
class Stream {
public:
    Stream() = default;

    Stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
        key_ = splitmix64(seed);
        for (std::uint64_t p : path) key_ = splitmix64(key_ ^ (p + 0x9E3779B97F4A7C15ULL));
    }

    std::uint64_t next_u64() { return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

    // Uniform on (0, 1]; never returns 0 so log() below is safe.
    double next_u01() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    // Standard normal via Box-Muller. The second value of each pair is
    // cached, so draws come in a fixed order per stream.
    double next_normal();

    // Uniform integer in {0, ..., n-1} via 64x64 -> high-64 multiply.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Inverse standard normal CDF (Acklam's rational approximation polished by
// one Halley step; |rel err| < 1e-15 over (0,1)). Throws nothing; p must be
// strictly inside (0,1), callers validate.
double normal_quantile(double p);

} // namespace hetrl::rng
