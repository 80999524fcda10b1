#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "unblur/tensor.hpp"

namespace unblur {

// splitmix64; used to derive per-(phase, step, slot) stream seeds so that a
// resumed run draws exactly the same randomness as an uninterrupted one.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t seed_chain(std::uint64_t a) { return mix64(a); }
template <typename... Rest>
inline std::uint64_t seed_chain(std::uint64_t a, Rest... rest) {
    return mix64(a ^ seed_chain(static_cast<std::uint64_t>(rest)...));
}

inline std::uint64_t hash_str(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// mt19937_64 with an explicit Box-Muller transform; std::normal_distribution
// is implementation-defined, this is not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in (0, 1]
    double uniform() { return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = gen_();
            if (r >= threshold) return r % n;
        }
    }

    bool bernoulli(double p) { return uniform() <= p; }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

template <typename T>
inline Tensor<T> randn(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
    Tensor<T> t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal() * stddev);
    return t;
}

template <typename T>
inline void fill_randn(Tensor<T>& t, Rng& rng, double stddev = 1.0) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal() * stddev);
}

}  // namespace unblur
