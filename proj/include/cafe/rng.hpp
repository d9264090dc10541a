#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cafe {

using Rng = std::mt19937_64;

/// Stream tags used when deriving per-purpose seeds. Keeping them in one
/// place guarantees two subsystems never share a stream by accident.
enum class Stream : std::uint64_t {
    task = 1,
    init = 2,
    probe = 3,
    train = 4,
    solver = 5,
    trace = 6,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Mixes a base seed with a path of coordinates, e.g. (seed, probe, slot, center).
inline std::uint64_t derive_seed(std::uint64_t base, Stream stream,
                                 std::initializer_list<std::uint64_t> coords = {}) {
    std::uint64_t h = splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(stream)));
    for (auto c : coords) {
        h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    }
    return h;
}

inline Rng make_rng(std::uint64_t base, Stream stream,
                    std::initializer_list<std::uint64_t> coords = {}) {
    return Rng(derive_seed(base, stream, coords));
}

} // namespace cafe
