#pragma once

#include <cstdint>
#include <random>

namespace qlc {

/// SplitMix64 step; used only to derive well-separated seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Independent generator for substream `stream` of `seed`. Results of any
/// computation that draws substream k from its own engine are therefore
/// independent of how the substreams are scheduled across threads.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t state = seed ^ (0xD1B54A32D192ED03ULL * (stream + 1));
    std::seed_seq seq{splitmix64(state), splitmix64(state), splitmix64(state), splitmix64(state)};
    return std::mt19937_64(seq);
}

/// Seed for job (a, b) of a run seeded with `seed`.
inline std::uint64_t splitmix64_mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t state = seed;
    std::uint64_t h = splitmix64(state);
    state = h ^ (a + 0x632BE59BD9B4E019ULL);
    h = splitmix64(state);
    state = h ^ (b + 0x8CB92BA72F3D8DD7ULL);
    return splitmix64(state);
}

} // namespace qlc
