#pragma once

#include <cstddef>
#include <cstdint>
#include <iterator>
#include <random>
#include <utility>

namespace volta {

/// Seeded generator whose output is identical on every conforming platform.
///
/// The engine is std::mt19937_64, seeded through std::seed_seq with the words
/// {seed_lo, seed_hi, stream_lo, stream_hi}; both are fully specified by the
/// standard. Distributions are hand-rolled because the standard library ones
/// are implementation-defined:
///   uniform()   = (next_u64() >> 11) * 2^-53
///   below(n)    = rejection sampling on next_u64() (no modulo bias)
///   shuffle()   = Fisher-Yates from the back, swap i with below(i + 1)
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
    {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        engine_.seed(seq);
    }

    std::uint64_t next_u64() { return engine_(); }

    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::size_t below(std::size_t n)
    {
        if (n <= 1) return 0;
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return static_cast<std::size_t>(x % bound);
    }

    template <typename RandomIt>
    void shuffle(RandomIt first, RandomIt last)
    {
        const auto n = static_cast<std::size_t>(std::distance(first, last));
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = below(i);
            using std::swap;
            swap(first[static_cast<std::ptrdiff_t>(i - 1)], first[static_cast<std::ptrdiff_t>(j)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace volta
