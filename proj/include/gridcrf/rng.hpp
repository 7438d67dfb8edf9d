#pragma once

#include <cstdint>

namespace gridcrf {

// SplitMix64 finalizer (Stafford mix13). Pure 64-bit integer arithmetic,
// so the stream is identical on every platform.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based generator: output(i) = mix64(key + i*GAMMA), the SplitMix64
// sequence keyed by (seed, stream). Distinct streams under the same seed are
// guaranteed distinct keys; draws are stateless apart from the counter, so a
// sequence can be reproduced from (seed, stream, counter) alone.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key_(mix64(seed) + stream), counter_(0) {}

    std::uint64_t next_u64() {
        return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL);
    }

    // Uniform on the open interval (0,1); 0 is rejected, 1 is unreachable
    // because (2^53-1)/2^53 < 1.
    double next_unit_open() {
        for (;;) {
            double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
            if (u > 0.0 && u < 1.0) return u;
        }
    }

    // Unbiased integer in [0, bound) by rejection.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t limit = (UINT64_MAX / bound) * bound;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r < limit) return r % bound;
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

} // namespace gridcrf
