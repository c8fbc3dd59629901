#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cfrl {

// Deterministic RNG stream. Wraps mt19937_64 but hand-rolls the
// distributions (std:: distribution output is implementation-defined,
// which would break byte-identical artifacts across toolchains).
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1): 53 mantissa bits.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // i in [0, n), n > 0.
    uint64_t uniform_index(uint64_t n) {
        // Modulo bias is negligible for n << 2^64 (desk-scale buffers).
        return engine_() % n;
    }

    // Standard normal via Box-Muller. One value per call; the spare is cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Independent substream, e.g. one per episode or per worker.
    Rng fork(uint64_t stream_id) {
        return Rng(next_u64() ^ (0x9e3779b97f4a7c15ull * (stream_id + 1)));
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace cfrl
