#pragma once

#include <cstdint>

// Deterministic random streams.
//
// Everything stochastic in this project draws from SplitMix64 streams.  A
// stream is identified by (seed, stream id, role); the derivation below is
// the single place where ids turn into generator state, so identical
// (seed, trajectory) pairs produce identical trajectories on every platform
// and for every worker count.  Roles keep logically independent substreams
// (e.g. a walk and its coupled shadow walk) from colliding.

namespace pw {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct SplitMix64 {
    std::uint64_t state = 0;

    std::uint64_t next() {
        std::uint64_t z = (state += kGolden);
        return mix64(z);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, m) without modulo bias (Lemire's method).
    std::uint64_t next_below(std::uint64_t m) {
        unsigned __int128 x = static_cast<unsigned __int128>(next()) * m;
        auto low = static_cast<std::uint64_t>(x);
        if (low < m) {
            std::uint64_t t = (0 - m) % m;
            while (low < t) {
                x = static_cast<unsigned __int128>(next()) * m;
                low = static_cast<std::uint64_t>(x);
            }
        }
        return static_cast<std::uint64_t>(x >> 64);
    }
};

// Stream roles.  New roles get new constants; never reuse.
enum class StreamRole : std::uint64_t {
    Walk = 0,        // the primary walk increments of trajectory t
    CoupledBase = 1, // independent replacement increments for the coupled walk
    GridPoint = 2,   // derives a sub-seed per grid point of a sweep
};

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream,
                                 StreamRole role) {
    std::uint64_t a = mix64(seed + kGolden * (stream + 1));
    return mix64(a + 0xbf58476d1ce4e5b9ULL * (static_cast<std::uint64_t>(role) + 1));
}

inline SplitMix64 make_stream(std::uint64_t seed, std::uint64_t stream,
                              StreamRole role) {
    return SplitMix64{stream_seed(seed, stream, role)};
}

// Seed for the batch at grid index gi of a sweep; trajectories inside the
// batch then derive their own streams from this value.
inline std::uint64_t grid_seed(std::uint64_t seed, std::uint64_t gi) {
    return stream_seed(seed, gi, StreamRole::GridPoint);
}

}  // namespace pw
