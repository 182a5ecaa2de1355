#pragma once

#include <cstdint>

namespace dada {

// splitmix64 step; mixes a base seed with a stream id so that derived
// generators (per phase, per worker, per layer) are decorrelated while the
// whole run stays reproducible from one root seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace dada
