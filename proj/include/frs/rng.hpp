#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "frs/common.hpp"

namespace frs {

/// Deterministic PRNG used everywhere randomness is needed.
///
/// Built on std::mt19937_64 (bit-exact across platforms by the C++ standard)
/// with hand-rolled uniform/normal transforms, so that streams are
/// reproducible independent of the standard library's distribution
/// implementations. Distinct purposes (parameter init, batch sampling,
/// adapter init) use distinct named streams so adding one consumer never
/// shifts another stream.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    /// Stream derived from (seed, name); e.g. Rng::named(seed, "batch").
    static Rng named(uint64_t seed, std::string_view stream) {
        uint64_t h = fnv1a64(stream);
        h ^= seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return Rng(h);
    }

    uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    int uniform_int(int n) {
        return static_cast<int>((static_cast<unsigned __int128>(engine_()) *
                                 static_cast<unsigned __int128>(n)) >> 64);
    }

    /// Box-Muller with a cached spare deviate.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mean + stddev * r * std::cos(theta);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace frs
