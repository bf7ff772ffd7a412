#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "crowdscore/metrics.hpp"
#include "crowdscore/rng.hpp"

using namespace crowdscore;
using namespace crowdscore::metrics;

namespace {

// Direct-formula Fleiss oracle, written independently of the library path.
double fleiss_oracle(const std::vector<std::vector<int>>& rows) {
    std::size_t N = rows.size();
    std::size_t n = rows.front().size();
    std::map<int, double> totals;
    double p_bar = 0.0;
    for (const auto& row : rows) {
        std::map<int, int> c;
        for (int v : row) {
            ++c[v];
            totals[v] += 1.0;
        }
        double s = 0.0;
        for (auto& [cat, cnt] : c) s += static_cast<double>(cnt) * cnt;
        p_bar += (s - static_cast<double>(n)) / (static_cast<double>(n) * (n - 1));
    }
    p_bar /= static_cast<double>(N);
    double pe = 0.0;
    for (auto& [cat, tot] : totals) {
        double f = tot / static_cast<double>(N * n);
        pe += f * f;
    }
    return (p_bar - pe) / (1.0 - pe);
}

// ANOVA-table ICC(2,1) oracle from hand-coded sums of squares.
double icc_oracle(const std::vector<std::vector<double>>& x) {
    std::size_t n = x.size(), k = x.front().size();
    double grand = 0;
    for (const auto& row : x)
        for (double v : row) grand += v;
    grand /= static_cast<double>(n * k);
    double ssr = 0, ssc = 0, sst = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double m = 0;
        for (double v : x[i]) m += v;
        m /= static_cast<double>(k);
        ssr += static_cast<double>(k) * (m - grand) * (m - grand);
    }
    for (std::size_t j = 0; j < k; ++j) {
        double m = 0;
        for (std::size_t i = 0; i < n; ++i) m += x[i][j];
        m /= static_cast<double>(n);
        ssc += static_cast<double>(n) * (m - grand) * (m - grand);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) sst += (x[i][j] - grand) * (x[i][j] - grand);
    double sse = sst - ssr - ssc;
    double msr = ssr / static_cast<double>(n - 1);
    double msc = ssc / static_cast<double>(k - 1);
    double mse = sse / static_cast<double>((n - 1) * (k - 1));
    return (msr - mse) /
           (msr + static_cast<double>(k - 1) * mse +
            static_cast<double>(k) * (msc - mse) / static_cast<double>(n));
}

RatingsMatrix from_rows(const std::vector<std::vector<int>>& rows) {
    RatingsMatrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t r = 0; r < rows[i].size(); ++r) m.set(i, r, rows[i][r]);
    return m;
}

} // namespace

TEST_CASE("percent agreement") {
    std::vector<int> a{0, 1, 2}, b{0, 1, 1};
    CHECK(percent_agreement(a, b) == doctest::Approx(2.0 / 3));
    CHECK(percent_agreement(a, a) == 1.0);
    std::vector<int> c{1, 2, 0};
    CHECK(percent_agreement(a, c) == 0.0);
    CHECK_THROWS_AS(percent_agreement(a, std::vector<int>{0, 1}), Error);
    CHECK_THROWS_AS(percent_agreement(std::vector<int>{}, std::vector<int>{}), Error);
}

TEST_CASE("cohen kappa golden values") {
    // hand contingency: p_o = 0.75, p_e = 0.5
    std::vector<int> a{0, 0, 1, 1}, b{0, 1, 1, 1};
    CHECK(cohen_kappa(a, b) == doctest::Approx(0.5).epsilon(1e-12));
    // identical non-constant vectors
    std::vector<int> v{0, 1, 2, 1};
    CHECK(cohen_kappa(v, v) == doctest::Approx(1.0));
    // symmetric swap: p_o = 0, p_e = 0.5
    std::vector<int> x{0, 0, 1, 1}, y{1, 1, 0, 0};
    CHECK(cohen_kappa(x, y) == doctest::Approx(-1.0));
    // symmetry in arguments
    CHECK(cohen_kappa(a, b) == doctest::Approx(cohen_kappa(b, a)));
    // kappa's observed agreement equals percent_agreement
    double po = percent_agreement(a, b);
    CHECK(po == doctest::Approx(0.75));
    // degenerate: both raters constant and equal
    std::vector<int> c1{1, 1, 1}, c2{1, 1, 1};
    CHECK_THROWS_AS(cohen_kappa(c1, c2), Error);
}

TEST_CASE("fleiss kappa against the direct-formula oracle") {
    // perfect agreement with >= 2 categories used
    CHECK(fleiss_kappa(from_rows({{0, 0, 0}, {1, 1, 1}, {2, 2, 2}})) == doctest::Approx(1.0));

    // hand case: {A,A,B} and {B,B,A}
    std::vector<std::vector<int>> rows{{0, 0, 1}, {1, 1, 0}};
    CHECK(fleiss_kappa(from_rows(rows)) ==
          doctest::Approx(fleiss_oracle(rows)).epsilon(1e-12));
    CHECK(fleiss_oracle(rows) == doctest::Approx(-1.0 / 3).epsilon(1e-12));

    // randomized matrices agree with the oracle to 1e-12
    Rng rng(7);
    for (int iter = 0; iter < 50; ++iter) {
        std::size_t items = static_cast<std::size_t>(rng.uniform_int(2, 10));
        std::size_t raters = static_cast<std::size_t>(rng.uniform_int(2, 5));
        std::vector<std::vector<int>> grid(items, std::vector<int>(raters));
        bool two_cats = false;
        for (auto& row : grid)
            for (auto& v : row) v = static_cast<int>(rng.uniform_int(0, 3));
        for (const auto& row : grid)
            for (int v : row) two_cats |= v != grid[0][0];
        if (!two_cats) continue;
        CHECK(fleiss_kappa(from_rows(grid)) ==
              doctest::Approx(fleiss_oracle(grid)).epsilon(1e-12));
    }

    // near-zero for uniformly random ratings over many items
    Rng mc(123);
    std::vector<std::vector<int>> big(1000, std::vector<int>(3));
    for (auto& row : big)
        for (auto& v : row) v = static_cast<int>(mc.uniform_int(0, 3));
    CHECK(std::fabs(fleiss_kappa(from_rows(big))) < 0.05);

    // error paths
    RatingsMatrix incomplete(2, 2);
    incomplete.set(0, 0, 1);
    CHECK_THROWS_AS(fleiss_kappa(incomplete), Error);
    CHECK_THROWS_AS(fleiss_kappa(from_rows({{1, 1}, {1, 1}})), Error);
}

TEST_CASE("spearman with average ranks") {
    std::vector<int> a{0, 1, 2, 3}, rev{3, 2, 1, 0};
    CHECK(spearman(a, a) == doctest::Approx(1.0));
    CHECK(spearman(a, rev) == doctest::Approx(-1.0));
    // classic no-ties permutation: sum d^2 = 10, n = 5 -> rho = 0.5 exactly
    std::vector<int> r1{0, 1, 2, 3, 4}, r3{1, 3, 0, 2, 4};
    CHECK(spearman(r1, r3) == doctest::Approx(0.5).epsilon(1e-12));
    // monotone transformation invariance (codes squared keep order)
    std::vector<int> sq{0, 1, 4, 9, 16};
    CHECK(spearman(sq, r3) == doctest::Approx(0.5).epsilon(1e-12));
    // ties get average ranks: verify against a hand-ranked computation
    std::vector<double> t1{1, 1, 2, 3}, t2{1, 2, 2, 3};
    // ranks: t1 -> 1.5,1.5,3,4 ; t2 -> 1,2.5,2.5,4 ; pearson = 3.75/4.5
    double rho = spearman(std::span<const double>(t1), std::span<const double>(t2));
    CHECK(rho == doctest::Approx(5.0 / 6).epsilon(1e-12));
    CHECK_THROWS_AS(spearman(std::vector<int>{1, 1, 1}, std::vector<int>{1, 2, 3}), Error);
}

TEST_CASE("mean pairwise spearman over a ratings matrix") {
    // raters 1 and 2 identical, rater 3 at rho = 0.5 with both -> mean 2/3
    RatingsMatrix m = RatingsMatrix::from_columns(
        {{0, 1, 2, 3, 4}, {0, 1, 2, 3, 4}, {1, 3, 0, 2, 4}});
    CHECK(spearman_rho_mean(m) == doctest::Approx(2.0 / 3).epsilon(1e-12));

    // a constant rater is skipped with a warning
    RatingsMatrix skip = RatingsMatrix::from_columns({{0, 1, 2}, {0, 1, 2}, {1, 1, 1}});
    std::vector<std::string> warnings;
    CHECK(spearman_rho_mean(skip, &warnings) == doctest::Approx(1.0));
    CHECK(warnings.size() == 2);

    // all pairs skipped -> undefined
    RatingsMatrix all_const = RatingsMatrix::from_columns({{1, 1, 1}, {2, 2, 2}});
    CHECK_THROWS_AS(spearman_rho_mean(all_const), Error);

    // pairwise overlap uses jointly rated items only
    RatingsMatrix overlap(4, 2);
    overlap.set(0, 0, 0);
    overlap.set(1, 0, 1);
    overlap.set(2, 0, 2);
    overlap.set(0, 1, 0);
    overlap.set(1, 1, 1);
    overlap.set(2, 1, 2);
    overlap.set(3, 0, 3); // rater 1 missing item 3
    CHECK(spearman_rho_mean(overlap) == doctest::Approx(1.0));
}

TEST_CASE("icc(2,1) golden values and oracle") {
    // all raters agree exactly on items with distinct values
    CHECK(icc(from_rows({{1, 1, 1}, {2, 2, 2}, {3, 3, 3}, {0, 0, 0}})) == doctest::Approx(1.0));

    // 3 raters x 4 items with injected rater offsets
    std::vector<std::vector<double>> x{
        {1.0, 1.5, 0.8}, {2.0, 2.5, 1.8}, {3.0, 3.5, 2.8}, {0.0, 0.5, -0.2}};
    std::vector<std::vector<int>> coded{{10, 15, 8}, {20, 25, 18}, {30, 35, 28}, {0, 5, -2}};
    double expect = icc_oracle({{10, 15, 8}, {20, 25, 18}, {30, 35, 28}, {0, 5, -2}});
    CHECK(icc(from_rows(coded)) == doctest::Approx(expect).epsilon(1e-9));
    (void)x;

    // ratings independent of item: near zero
    Rng rng(321);
    std::vector<std::vector<int>> noise(300, std::vector<int>(3));
    for (auto& row : noise)
        for (auto& v : row) v = static_cast<int>(rng.uniform_int(0, 3));
    CHECK(std::fabs(icc(from_rows(noise))) < 0.1);

    // degenerate: zero between-item variance
    CHECK_THROWS_AS(icc(from_rows({{1, 2, 1}, {1, 2, 1}})), Error);
}

TEST_CASE("metrics are invariant under item permutation") {
    std::vector<std::vector<int>> rows{{0, 1, 0}, {1, 1, 1}, {2, 3, 2}, {3, 3, 2}, {0, 0, 1}};
    std::vector<std::vector<int>> shuffled{rows[3], rows[0], rows[4], rows[2], rows[1]};
    CHECK(fleiss_kappa(from_rows(rows)) == doctest::Approx(fleiss_kappa(from_rows(shuffled))));
    CHECK(icc(from_rows(rows)) == doctest::Approx(icc(from_rows(shuffled))));
    CHECK(spearman_rho_mean(from_rows(rows)) ==
          doctest::Approx(spearman_rho_mean(from_rows(shuffled))));
}

TEST_CASE("report bundles every measure for a complete matrix") {
    RatingsMatrix m = RatingsMatrix::from_columns({{0, 1, 2, 3, 1}, {0, 1, 2, 3, 2}});
    MetricReport rep = compute_report(m);
    CHECK(rep.percent_agreement == doctest::Approx(0.8));
    CHECK(rep.cohen_kappa_pairwise_mean ==
          doctest::Approx(cohen_kappa(std::vector<int>{0, 1, 2, 3, 1},
                                      std::vector<int>{0, 1, 2, 3, 2})));
    CHECK(rep.spearman_rho_mean > 0.8);
    CHECK(rep.icc > 0.8);
}

TEST_CASE("spearman p-value normal approximation") {
    CHECK(spearman_p_value(0.0, 100) == doctest::Approx(1.0));
    CHECK(spearman_p_value(0.41, 64) < 0.005);
    CHECK(spearman_p_value(0.41, 64) > 0.0);
}
