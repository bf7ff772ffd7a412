#include <doctest.h>

#include <set>

#include "crowdscore/rng.hpp"
#include "crowdscore/sensitivity.hpp"
#include "crowdscore/sim.hpp"

using namespace crowdscore;
using namespace crowdscore::sens;

namespace {

LabelGrid grid_from_codes(const std::vector<std::vector<int>>& rows) {
    LabelGrid g;
    g.n_images = rows.size();
    g.n_labels = rows.front().size();
    for (const auto& row : rows)
        for (int v : row) g.labels.push_back(ClassLabel(v, Scheme::FourClass));
    return g;
}

} // namespace

TEST_CASE("combinations enumerate lexicographically without repeats") {
    auto c32 = combinations(3, 2);
    REQUIRE(c32.size() == 3);
    CHECK(c32[0] == std::vector<int>{0, 1});
    CHECK(c32[1] == std::vector<int>{0, 2});
    CHECK(c32[2] == std::vector<int>{1, 2});

    CHECK(combinations(10, 3).size() == 120);
    CHECK(combinations(10, 5).size() == 252);
    CHECK(combinations(6, 6).size() == 1);

    CHECK_THROWS_AS(combinations(4, 0), Error);
    CHECK_THROWS_AS(combinations(4, 5), Error);

    // all subsets distinct
    auto c105 = combinations(10, 5);
    std::set<std::vector<int>> uniq(c105.begin(), c105.end());
    CHECK(uniq.size() == c105.size());
}

TEST_CASE("total pattern count over all sizes is 2^n - 1") {
    std::uint64_t total = 0;
    for (int c = 1; c <= 10; ++c) total += binomial(10, c);
    CHECK(total == 1023);
}

TEST_CASE("size n has a single pattern equal to full aggregation") {
    Rng rng(5);
    std::vector<std::vector<int>> rows(40, std::vector<int>(10));
    std::vector<ClassLabel> truth;
    for (auto& row : rows)
        for (auto& v : row) v = static_cast<int>(rng.uniform_int(0, 3));
    for (std::size_t i = 0; i < rows.size(); ++i)
        truth.push_back(ClassLabel(static_cast<int>(rng.uniform_int(0, 3)), Scheme::FourClass));

    LabelGrid g = grid_from_codes(rows);
    auto res = sensitivity_analysis(g, truth, agg::Method::CV, agg::ClassWeights::defaults(),
                                    10, Scheme::FourClass);
    REQUIRE(res.size() == 10);
    CHECK(res.back().pattern_count == 1);

    // recompute the full-crowd agreement directly
    std::size_t agree = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        agg::VoteTally t;
        for (int v : rows[i]) t.votes[static_cast<std::size_t>(v)] += 1;
        if (agg::aggregate_cv(t) == truth[i]) ++agree;
    }
    CHECK(res.back().agreements.front() ==
          doctest::Approx(static_cast<double>(agree) / rows.size()));
}

TEST_CASE("unanimous grids have constant agreement across sizes and patterns") {
    std::vector<std::vector<int>> rows(25, std::vector<int>(6, 2)); // all C
    std::vector<ClassLabel> truth(25, ClassLabel(2, Scheme::FourClass));
    auto res = sensitivity_analysis(grid_from_codes(rows), truth, agg::Method::CV,
                                    agg::ClassWeights::defaults(), 6, Scheme::FourClass);
    for (const auto& s : res) {
        CHECK(s.pattern_count == binomial(6, s.crowd_size));
        CHECK(s.mean == doctest::Approx(1.0));
        CHECK(s.min == doctest::Approx(1.0));
    }
}

TEST_CASE("input validation") {
    std::vector<std::vector<int>> rows(4, std::vector<int>(3, 1));
    std::vector<ClassLabel> truth(4, ClassLabel(1, Scheme::FourClass));
    LabelGrid g = grid_from_codes(rows);

    CHECK_THROWS_AS(sensitivity_analysis(g, truth, agg::Method::CV,
                                         agg::ClassWeights::defaults(), 4, Scheme::FourClass),
                    Error); // max_size > n
    g.labels.pop_back();
    CHECK_THROWS_AS(sensitivity_analysis(g, truth, agg::Method::CV,
                                         agg::ClassWeights::defaults(), 3, Scheme::FourClass),
                    Error); // ragged grid
    LabelGrid g2 = grid_from_codes(rows);
    CHECK_THROWS_AS(sensitivity_analysis(g2, truth, agg::Method::CT,
                                         agg::ClassWeights::defaults(), 3, Scheme::FourClass),
                    Error); // CT without a trust grid
    std::vector<ClassLabel> wrong_scheme(4, ClassLabel(1, Scheme::ThreeClass));
    CHECK_THROWS_AS(sensitivity_analysis(g2, wrong_scheme, agg::Method::CV,
                                         agg::ClassWeights::defaults(), 3, Scheme::FourClass),
                    Error); // truth not in target scheme
}

TEST_CASE("noisy simulated contributors improve steeply up to size 3") {
    // per-label accuracy 0.7; the early gain dominates the late gain
    auto profile = sim::ContributorProfile::with_diagonal(0.7);
    Rng rng(2024);
    const std::size_t n_images = 380;
    std::vector<std::vector<int>> rows(n_images, std::vector<int>(10));
    std::vector<ClassLabel> truth;
    for (std::size_t i = 0; i < n_images; ++i) {
        int t = static_cast<int>(rng.uniform_int(0, 3));
        truth.push_back(ClassLabel(t, Scheme::FourClass));
        for (auto& v : rows[i])
            v = sim::simulate_label(profile, ClassLabel(t, Scheme::FourClass), rng).value();
    }
    auto res = sensitivity_analysis(grid_from_codes(rows), truth, agg::Method::CV,
                                    agg::ClassWeights::defaults(), 10, Scheme::FourClass);
    double g13 = res[2].mean - res[0].mean;
    double g310 = res[9].mean - res[2].mean;
    CHECK(res[0].mean < res[1].mean); // strictly increasing start
    CHECK(res[1].mean < res[2].mean);
    CHECK(g13 > g310);
}
