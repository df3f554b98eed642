#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace dps {

/// Deterministic, splittable random stream.
///
/// All randomness in the library flows through explicit RngStream objects so
/// that a run is a pure function of its root seed. Draws are produced from a
/// hand-rolled splitmix64/xoshiro-free core instead of <random> distributions,
/// which keeps bit-identical output across standard library implementations.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), state_(mix(seed)) {
        if (state_ == 0) state_ = 0x9E3779B97F4A7C15ULL;
    }

    /// Derives an independent stream from this stream's root seed and a tag.
    /// Pure: derive(tag) on equal-seeded streams yields equal streams.
    RngStream derive(std::uint64_t tag) const {
        return RngStream(mix(seed_ ^ (0xBF58476D1CE4E5B9ULL * (tag + 1))));
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        // splitmix64 step
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in the open interval (0, 1); safe for logit transforms.
    double uniform_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    long uniform_int(long lo, long hi) {
        if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<long>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller on the deterministic uniform core.
    double normal() {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j =
                static_cast<std::size_t>(uniform_int(0, static_cast<long>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
        z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ULL;
        return z ^ (z >> 33);
    }

    std::uint64_t seed_;
    std::uint64_t state_;
};

}  // namespace dps
