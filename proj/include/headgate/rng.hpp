#pragma once

#include <cstdint>
#include <random>

namespace headgate {

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is fully specified by the standard, and all value mappings below
// avoid std::*_distribution (whose results are implementation-defined).
//
//   uniform():  53-bit mantissa draw in [0, 1)
//   gaussian(): sum of 12 uniforms minus 6 (Irwin-Hall), mean 0, variance 1,
//               built from +,-,* only so the stream is stable across libms
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double gaussian() {
        double s = 0.0;
        for (int i = 0; i < 12; ++i) s += uniform();
        return s - 6.0;
    }

    // Integer in [lo, hi], both inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo + 1);
        return lo + static_cast<std::int64_t>(
                        static_cast<std::uint64_t>(uniform() * static_cast<double>(span)));
    }

    // Independent substream for (seed, stream_id) pairs, e.g. one per head.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream_id) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace headgate
