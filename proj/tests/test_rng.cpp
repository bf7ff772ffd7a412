#include <doctest.h>

#include <cmath>
#include <vector>

#include "crowdscore/rng.hpp"

using crowdscore::Rng;

TEST_CASE("streams are deterministic and tag-separated") {
    Rng base(123);
    Rng a1 = base.stream("worker", 1);
    Rng a2 = Rng(123).stream("worker", 1);
    Rng b = base.stream("worker", 2);
    Rng c = base.stream("image", 1);

    bool same = true, cross_b = true, cross_c = true;
    for (int i = 0; i < 64; ++i) {
        std::uint64_t v = a1.next_u64();
        same = same && v == a2.next_u64();
        cross_b = cross_b && v == b.next_u64();
        cross_c = cross_c && v == c.next_u64();
    }
    CHECK(same);
    CHECK_FALSE(cross_b);
    CHECK_FALSE(cross_c);
}

TEST_CASE("uniform_int covers its range without bias") {
    Rng rng(5);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(rng.uniform_int(0, 6))] += 1;
    for (int k = 0; k < 7; ++k) {
        CHECK(counts[static_cast<std::size_t>(k)] > 0);
        // expected 10000 each; 5 sigma is about 480
        CHECK(std::fabs(counts[static_cast<std::size_t>(k)] - n / 7.0) < 500);
    }
}

TEST_CASE("poisson matches its mean and variance across regimes") {
    // covers both the inversion branch (small means) and PTRS (large means)
    for (double lambda : {2.0, 12.0, 50.0, 150.0}) {
        Rng rng(static_cast<std::uint64_t>(lambda * 1000));
        const int n = 40000;
        double sum = 0, sumsq = 0;
        for (int i = 0; i < n; ++i) {
            double v = static_cast<double>(rng.poisson(lambda));
            sum += v;
            sumsq += v * v;
        }
        double mean = sum / n;
        double var = sumsq / n - mean * mean;
        double se_mean = std::sqrt(lambda / n);
        CHECK(std::fabs(mean - lambda) < 6 * se_mean);
        CHECK(std::fabs(var - lambda) < 0.05 * lambda + 6 * lambda * std::sqrt(2.0 / n));
    }
    Rng rng(9);
    CHECK(rng.poisson(0.0) == 0);
}

TEST_CASE("lognormal mean parameterization") {
    // lognormal(mu = log(m) - s^2/2, s) has mean m
    Rng rng(777);
    const double target = 32.0, sigma = 0.4;
    double mu = std::log(target) - 0.5 * sigma * sigma;
    double sum = 0;
    const int n = 60000;
    for (int i = 0; i < n; ++i) sum += rng.lognormal(mu, sigma);
    CHECK(std::fabs(sum / n - target) < 0.5);
    // sigma 0 collapses to the exact mean
    CHECK(rng.lognormal(std::log(target), 0.0) == doctest::Approx(target));
}

TEST_CASE("normal moments") {
    Rng rng(31337);
    double sum = 0, sumsq = 0;
    const int n = 60000;
    for (int i = 0; i < n; ++i) {
        double v = rng.normal();
        sum += v;
        sumsq += v * v;
    }
    CHECK(std::fabs(sum / n) < 0.02);
    CHECK(std::fabs(sumsq / n - 1.0) < 0.03);
}
