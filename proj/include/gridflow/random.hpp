#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace gridflow {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator for the stream identified by (seed, a, b). Used so
/// that per-sample draws do not depend on evaluation order.
inline std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0)
{
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ (b * 0xd1b54a32d192ed03ULL));
    return std::mt19937_64(h);
}

/// Uniform double in [0, 1) from the top 53 bits. Portable across standard
/// libraries, unlike std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi)
{
    return lo + (hi - lo) * uniform01(rng);
}

/// Fisher-Yates with uniform01 so the permutation is library independent.
template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        std::swap(v[i - 1], v[j < i ? j : i - 1]);
    }
}

}  // namespace gridflow
