#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace ctgen {

// splitmix64: fully specified, platform-independent stream. All randomness in
// the pipeline flows through this so outputs are byte-reproducible.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform-ish draw in [0, n). Modulo bias is irrelevant at these n.
    uint64_t below(uint64_t n) { return next() % n; }

private:
    uint64_t state_;
};

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Derives a child seed from a root seed and a list of stream labels, so that
// independent consumers (per record, per template, per document) never share
// a stream.
inline uint64_t derive_seed(uint64_t seed, std::initializer_list<uint64_t> parts) {
    uint64_t state = seed;
    for (uint64_t p : parts) {
        SplitMix64 mix(state ^ p);
        state = mix.next();
    }
    return state;
}

}  // namespace ctgen
