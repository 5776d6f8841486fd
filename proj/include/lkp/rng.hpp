#pragma once

#include <cstdint>
#include <random>

namespace lkp {

using Rng = std::mt19937_64;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based seed splitter. Every random stream in a run is derived from the
/// single run seed plus a stream tag and counter, so streams do not depend on
/// the order in which workers happen to consume them.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t counter = 0) noexcept {
    return mix64(mix64(seed ^ mix64(stream)) + counter);
}

namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kSchedule = 2;
inline constexpr std::uint64_t kSplit = 3;
inline constexpr std::uint64_t kSynthetic = 4;
inline constexpr std::uint64_t kDiversePairs = 5;
inline constexpr std::uint64_t kKernelInit = 6;
inline constexpr std::uint64_t kKernelShuffle = 7;
inline constexpr std::uint64_t kBaselineNegatives = 8;
inline constexpr std::uint64_t kSigma = 9;
inline constexpr std::uint64_t kTrend = 10;
} // namespace stream

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) {
    return Rng{derive_seed(seed, stream, counter)};
}

} // namespace lkp
