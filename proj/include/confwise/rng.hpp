#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace confwise {

/// Deterministic 64-bit generator (SplitMix64). The full recurrence is
/// spelled out here so other implementations can reproduce datasets
/// bit-exactly:
///
///   state  <- state + 0x9E3779B97F4A7C15
///   z      <- state
///   z      <- (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9
///   z      <- (z XOR (z >> 27)) * 0x94D049BB133111EB
///   output <- z XOR (z >> 31)
///
/// uniform01() maps the top 53 bits to [0,1) via (output >> 11) * 2^-53.
/// normal() draws two uniforms and applies the Box-Muller cosine branch
/// (the sine branch is discarded; every call consumes exactly two draws).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal(double mean = 0.0, double sigma = 1.0) {
        double u1 = 1.0 - uniform01();  // (0,1], keeps log finite
        double u2 = uniform01();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + sigma * z;
    }

    bool bernoulli(double p) { return uniform01() < p; }

    /// Uniform integer in [0, n). Plain modulo; bias is irrelevant at the
    /// scales used here and the rule stays trivially reproducible.
    uint64_t below(uint64_t n) { return next() % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

/// Derives independent sub-seeds from a parent seed. Stream k uses
/// one SplitMix64 output of (seed XOR ((k+1) * 0x9E3779B97F4A7C15)).
inline uint64_t split_seed(uint64_t seed, uint64_t stream) {
    Rng g(seed ^ ((stream + 1) * 0x9E3779B97F4A7C15ULL));
    return g.next();
}

}  // namespace confwise
