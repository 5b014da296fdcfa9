#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "stnas/errors.hpp"

namespace stnas {

// Deterministic, platform-independent RNG (xoshiro256** seeded via splitmix64).
// There is no global RNG anywhere in the project: every stochastic choice draws
// from an Rng constructed from a seed derived out of the run's master seed with
// derive_seed(parent, label). The labels form a fixed, documented tree, so a
// run manifest containing the master seed is enough to reproduce every draw.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a over the label bytes; stable across platforms.
inline std::uint64_t hash_label(std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Child seed = mix of parent seed and label hash. Deterministic and order-free:
// deriving "a" then "b" equals deriving "b" then "a".
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) {
    std::uint64_t s = parent ^ hash_label(label);
    return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view label, std::uint64_t index) {
    return derive_seed(parent, std::string(label) + "[" + std::to_string(index) + "]");
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n) via rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ConfigError("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Standard normal via Box-Muller (no cached spare; keeps the stream simple).
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices drawn uniformly from [0, n), in draw order.
    std::vector<std::int64_t> sample_without_replacement(std::int64_t n, std::int64_t k) {
        if (k > n) throw ConfigError("sample_without_replacement: k > n");
        std::vector<std::int64_t> pool(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        std::vector<std::int64_t> out;
        out.reserve(static_cast<std::size_t>(k));
        for (std::int64_t i = 0; i < k; ++i) {
            std::size_t j = static_cast<std::size_t>(below(static_cast<std::uint64_t>(n - i)));
            out.push_back(pool[j]);
            std::swap(pool[j], pool[static_cast<std::size_t>(n - 1 - i)]);
        }
        return out;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
};

}  // namespace stnas
