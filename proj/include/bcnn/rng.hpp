#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace bcnn {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a stream id.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream_id) {
    return splitmix64(base + 0x9E3779B97F4A7C15ull * (stream_id + 1));
}

// Seeded source of standard-normal variates. Identical seed, identical
// sequence; independent substreams are derived per id. The Gaussian draw is
// a Box-Muller transform on top of mt19937_64 so sequences do not depend on
// the standard library's distribution internals.
class NoiseStream {
public:
    explicit NoiseStream(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    void fill_gaussian(std::span<double> out) {
        for (double& v : out) v = gaussian();
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n); rejection sampling keeps it unbiased.
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = gen_();
            if (r >= threshold) return r % n;
        }
    }

    NoiseStream substream(std::uint64_t id) const {
        return NoiseStream(derive_seed(seed_, id));
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace bcnn
