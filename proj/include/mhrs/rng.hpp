#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mhrs/errors.hpp"

namespace mhrs {

// splitmix64 step; used to derive independent seed streams from one base seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Seeded generator with the handful of draws the simulator needs.
// All sampling is implemented on top of the raw engine so sequences are
// reproducible for a given (seed, call sequence).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() {
        return (engine_() >> 11) * 0x1.0p-53;
    }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw contract_violation("uniform_int: n must be positive");
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Inversion sampling; fine for the desk-scale rates this simulator uses.
    int poisson(double lambda) {
        if (lambda < 0.0) throw invalid_config("poisson: negative rate");
        if (lambda == 0.0) return 0;
        const double l = std::exp(-lambda);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > l);
        return k - 1;
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        // Box-Muller, one value per call (the spare is discarded to keep the
        // draw count predictable).
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace mhrs
