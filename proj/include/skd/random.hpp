#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace skd {

// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// distributions below avoid std::*_distribution, whose output is
// implementation-defined and would break bit-reproducible checkpoints.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform double in [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; one value per call
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // integer in [lo, hi], rejection sampling (unbiased)
    int uniform_int(int lo, int hi) {
        if (lo > hi) throw std::invalid_argument("Rng::uniform_int: empty range");
        std::uint64_t range = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
        std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % range;
        std::uint64_t draw;
        do {
            draw = next_u64();
        } while (draw >= limit);
        return lo + static_cast<int>(draw % range);
    }

    // k distinct indices from [0, n), uniform over ordered samples
    std::vector<int> sample_without_replacement(int n, int k) {
        if (k < 0 || k > n) throw std::invalid_argument("Rng::sample_without_replacement: k out of range");
        std::vector<int> pool(n);
        for (int i = 0; i < n; ++i) pool[i] = i;
        for (int i = 0; i < k; ++i) {
            int j = uniform_int(i, n - 1);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace skd
