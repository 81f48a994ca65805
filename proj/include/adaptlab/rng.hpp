#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace adaptlab {

// Splittable counter-based generator. Every draw is a hash of (key, counter),
// so a stream is reproducible from its key alone and child streams derived
// via split() are independent of how much the parent has been consumed.
// Used everywhere instead of the platform RNG so runs replay bit-identically
// across compilers and machines.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(mix(seed + GOLDEN) ^ mix(stream + 0x9e3779b97f4a7c15ULL))) {}

    std::uint64_t next_u64() { return mix(key_ + (++counter_) * GOLDEN); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; one value per two uniform draws.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * PI * u2);
    }

    // Child stream keyed by tag; independent of this stream's position.
    Rng split(std::uint64_t tag) const {
        Rng child(0);
        child.key_ = mix(key_ ^ mix(tag + 0x94d049bb133111ebULL));
        child.counter_ = 0;
        return child;
    }

    Rng split(std::string_view tag) const { return split(fnv1a(tag)); }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

  private:
    static constexpr std::uint64_t GOLDEN = 0x9e3779b97f4a7c15ULL;
    static constexpr double PI = 3.141592653589793238462643383279502884;

    // SplitMix64 finalizer.
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace adaptlab
