#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace dbd {

/// SplitMix64 finalizer. Fully specified integer arithmetic, so streams are
/// reproducible across platforms and standard-library versions.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Counter-based random stream. All stochastic components derive their stream
/// from (seed, purpose tags), so replaying a run never depends on global
/// generator state and resuming does not need RNG serialization.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : state_(mix64(seed ^ 0x5851f42d4c957f2dull)) {}

    /// Child stream keyed by up to three tags. Used to give each purpose
    /// (init, shuffle, augment, ...) an independent sequence.
    RandomStream fork(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
        std::uint64_t s = state_;
        s = mix64(s ^ mix64(a ^ 0x1000000001b3ull));
        s = mix64(s ^ mix64(b ^ 0x100000001b3ull));
        s = mix64(s ^ mix64(c ^ 0xcbf29ce484222325ull));
        return RandomStream(FromState{}, s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix64(state_);
    }

    /// Uniform in [0,1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Standard normal via Box-Muller on two fresh uniforms (no cached spare,
    /// keeps the draw count predictable).
    double normal() {
        double u1 = 1.0 - uniform(); // (0,1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) {
        return mean + stddev * normal();
    }

    bool bernoulli(double p) {
        return uniform() < p;
    }

    /// Integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        return n == 0 ? 0 : next_u64() % n;
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    struct FromState {};
    RandomStream(FromState, std::uint64_t s) : state_(s) {}
    std::uint64_t state_;
};

} // namespace dbd
