#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace sticmac {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a list of tags
// (station id, epoch, purpose, ...). Same inputs always give the same seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags)
{
    std::uint64_t h = splitmix64(base);
    for (auto t : tags)
        h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags = {})
{
    return Rng(derive_seed(base, tags));
}

// Purpose tags for derive_seed, kept in one place so streams never alias.
namespace stream {
inline constexpr std::uint64_t kChannel = 1;
inline constexpr std::uint64_t kBackoff = 2;
inline constexpr std::uint64_t kMobility = 3;
inline constexpr std::uint64_t kPlacement = 4;
inline constexpr std::uint64_t kOptimizer = 5;
inline constexpr std::uint64_t kTraffic = 6;
inline constexpr std::uint64_t kPerCurve = 7;
inline constexpr std::uint64_t kUcTable = 8;
inline constexpr std::uint64_t kDecode = 9;
} // namespace stream

inline double uniform01(Rng& rng)
{
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

} // namespace sticmac
