#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace usfg {

// Deterministic PRNG used for every stochastic decision in the pipeline.
// splitmix64 core; no standard-library distributions, their output is
// implementation defined and would break cross-build reproducibility.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, bound), rejection-sampled so it is unbiased.
    uint64_t next_below(uint64_t bound) {
        uint64_t threshold = (0ULL - bound) % bound;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform integer in [lo, hi] inclusive.
    int64_t next_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(next_below(static_cast<uint64_t>(hi - lo + 1)));
    }

    // Uniform double in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_double(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller (one value per call, cached pair discarded
    // to keep the stream position independent of call parity history).
    double next_gaussian() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

// FNV-1a over a byte view; used to derive independent per-item streams.
inline uint64_t hash_bytes(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t hash_u64(uint64_t x, uint64_t h) {
    for (int i = 0; i < 8; ++i) {
        h ^= (x >> (8 * i)) & 0xff;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stream for (seed, video_id, frame_index): reproducible and independent of
// the order entries are processed in.
inline Rng derive_stream(uint64_t global_seed, std::string_view video_id, uint64_t frame_index) {
    uint64_t h = hash_u64(global_seed, 0xcbf29ce484222325ULL);
    h = hash_bytes(video_id, h);
    h = hash_u64(frame_index, h);
    return Rng(h);
}

}  // namespace usfg
