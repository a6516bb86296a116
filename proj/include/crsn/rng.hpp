#ifndef CRSN_RNG_HPP
#define CRSN_RNG_HPP

#include <cmath>
#include <cstdint>

namespace crsn {

// Counter-based splittable generator. Each draw is a pure function of
// (seed, stream, counter), so a value can be reproduced from its coordinates
// and parallel consumers cannot perturb each other's sequences as long as
// they own distinct streams.
//
// Stream discipline used across the project (substream ids for split()):
//   1  parameter init (further split by a name hash per tensor)
//   2  epoch shuffling
//   3  per-sample training randomness (r1/r2, fGn, dropout)
//   4  evaluation replicas
//   5  perturbation jitter
//   6  corpus generation channels
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream), counter_(0),
          base_(mix64(seed + 0x9E3779B97F4A7C15ULL * mix64(stream ^ 0xD1B54A32D192ED03ULL))) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64() { return mix64(base_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; consumes exactly two counter values.
    double normal() {
        const double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; // (0,1)
        const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Derive an independent stream; the child starts at counter 0.
    Rng split(std::uint64_t a, std::uint64_t b = 0) const {
        return Rng(seed_, mix64(stream_ ^ mix64(a + 0x9E3779B97F4A7C15ULL * b)));
    }

    static std::uint64_t mix64(std::uint64_t x) {
        // SplitMix64 finalizer.
        x ^= x >> 30;
        x *= 0xBF58476D1CE4E5B9ULL;
        x ^= x >> 27;
        x *= 0x94D049BB133111EBULL;
        x ^= x >> 31;
        return x;
    }

    static std::uint64_t hash_name(const char* s) {
        // FNV-1a, for per-tensor init streams keyed by parameter name.
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (; *s; ++s) {
            h ^= static_cast<unsigned char>(*s);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_;
    std::uint64_t base_;
};

} // namespace crsn

#endif
