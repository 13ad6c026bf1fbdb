#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace logsiam {

// Error taxonomy mapped to CLI exit codes: config=2, data=3, numeric=4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// Derives an independent stream from (seed, stream_id) via splitmix64 mixing.
// std::seed_seq is avoided so derived seeds stay stable across stdlib versions.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream_id + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream_id = 0) {
    return Rng(mix_seed(seed, stream_id));
}

// Bounded draw and shuffle are hand-rolled: uniform_int_distribution and
// std::shuffle produce stdlib-dependent sequences, which would break the
// byte-stability contract on artifacts.
inline std::uint64_t draw_below(Rng& rng, std::uint64_t n) {
    return n == 0 ? 0 : rng() % n;
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(draw_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// FNV-1a, used for config fingerprints embedded into artifacts.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

}  // namespace logsiam
