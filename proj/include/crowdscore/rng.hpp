#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace crowdscore {

// Deterministic PRNG with named sub-streams. All draws are hand-rolled from
// the raw 64-bit stream so results do not depend on standard-library
// distribution internals; a (master_seed, stream tag) pair fully determines
// the sequence, which is what makes simulations replayable in parallel.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed), seed_(seed) {
        // splitmix64 warm-up decorrelates small seeds
        next_u64();
        next_u64();
    }

    // Derive an independent stream for (tag, index), e.g. one per
    // contributor or per image.
    Rng stream(std::string_view tag, std::uint64_t index = 0) const {
        std::uint64_t h = 0xcbf29ce484222325ull; // FNV-1a
        for (char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        h ^= index + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        return Rng(seed_ ^ h);
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] (inclusive), unbiased rejection sampling.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<std::int64_t>(next_u64()); // full range
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return lo + static_cast<std::int64_t>(v % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller (one value per call; no cached pair so
    // the stream stays position-independent).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double lognormal(double mu, double sigma) { return std::exp(mu + sigma * normal()); }

    // Poisson: inversion for small means, PTRS (Hormann 1993) otherwise.
    std::int64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        if (mean < 30.0) {
            double l = std::exp(-mean);
            double p = 1.0;
            std::int64_t k = 0;
            do {
                ++k;
                p *= uniform();
            } while (p > l);
            return k - 1;
        }
        return poisson_ptrs(mean);
    }

private:
    std::int64_t poisson_ptrs(double mean) {
        const double slam = std::sqrt(mean);
        const double loglam = std::log(mean);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            double u = uniform() - 0.5;
            double v = uniform();
            double us = 0.5 - std::fabs(u);
            double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= vr) return static_cast<std::int64_t>(k);
            if (k < 0 || (us < 0.013 && v > us)) continue;
            if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
                -mean + k * loglam - std::lgamma(k + 1.0)) {
                return static_cast<std::int64_t>(k);
            }
        }
    }

    std::uint64_t state_;
    std::uint64_t seed_;
};

} // namespace crowdscore
