#pragma once

#include <cstdint>
#include <span>

namespace madrop {

/// SplitMix64: counter-based 64-bit generator. Cheap to seed, splittable by
/// hashing, and identical across platforms.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

/// Derives an independent stream seed from a master seed and up to two
/// stream coordinates (e.g. start state and trajectory index).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
    SplitMix64 g(master);
    std::uint64_t h = g.next();
    SplitMix64 ga(h ^ (a * 0xD6E8FEB86659FD93ull + 0x2545F4914F6CDD1Dull));
    h = ga.next();
    SplitMix64 gb(h ^ (b * 0xA24BAED4963EE407ull + 0x9FB21C651E98DF25ull));
    return gb.next();
}

/// Inverse-CDF draw from a probability row using a single uniform variate.
inline int sample_categorical(std::span<const double> probs, double u) {
    double cumulative = 0.0;
    const int last = static_cast<int>(probs.size()) - 1;
    for (int i = 0; i < last; ++i) {
        cumulative += probs[i];
        if (u < cumulative) return i;
    }
    return last;
}

} // namespace madrop
