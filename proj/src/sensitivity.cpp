#include "crowdscore/sensitivity.hpp"

#include <algorithm>
#include <cmath>

namespace crowdscore::sens {

std::uint64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    std::uint64_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / i;
    return r;
}

std::vector<std::vector<int>> combinations(int n, int k) {
    if (k < 1 || k > n) fail(Errc::domain, "combinations requires 1 <= k <= n");
    std::vector<std::vector<int>> out;
    out.reserve(binomial(n, k));
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    for (;;) {
        out.push_back(idx);
        int i = k - 1;
        while (i >= 0 && idx[i] == n - k + i) --i;
        if (i < 0) break;
        ++idx[i];
        for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
    return out;
}

void LabelGrid::validate() const {
    if (n_images == 0 || n_labels == 0) fail(Errc::empty_input, "empty label grid");
    if (labels.size() != n_images * n_labels)
        fail(Errc::shape, "ragged label grid: expected " +
                              std::to_string(n_images * n_labels) + " labels, got " +
                              std::to_string(labels.size()));
    if (!trusts.empty() && trusts.size() != labels.size())
        fail(Errc::shape, "trust grid does not match label grid");
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.size() == 1) return sorted.front();
    double pos = q * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

} // namespace

std::vector<SizeSummary> sensitivity_analysis(const LabelGrid& grid,
                                              const std::vector<ClassLabel>& truth,
                                              agg::Method method,
                                              const agg::ClassWeights& weights,
                                              int max_size,
                                              Scheme scheme) {
    grid.validate();
    if (truth.size() != grid.n_images)
        fail(Errc::shape, "truth vector does not match grid image count");
    for (const auto& t : truth)
        if (t.scheme() != scheme) fail(Errc::scheme_mismatch, "truth label not in target scheme");
    if (max_size < 1 || static_cast<std::size_t>(max_size) > grid.n_labels)
        fail(Errc::domain, "max_size must be in 1..n_labels");
    bool needs_trust = method == agg::Method::CT || method == agg::Method::WCT;
    if (needs_trust && grid.trusts.empty())
        fail(Errc::degenerate_trust, "trust-based aggregation needs a trust grid");

    std::vector<SizeSummary> out;
    out.reserve(max_size);
    for (int c = 1; c <= max_size; ++c) {
        auto patterns = combinations(static_cast<int>(grid.n_labels), c);
        SizeSummary s;
        s.crowd_size = c;
        s.pattern_count = patterns.size();
        s.agreements.reserve(patterns.size());

        for (const auto& pattern : patterns) {
            std::size_t agree = 0;
            for (std::size_t img = 0; img < grid.n_images; ++img) {
                agg::VoteTally t;
                t.scheme = grid.label(img, 0).scheme();
                for (int slot : pattern) {
                    const ClassLabel& l = grid.label(img, static_cast<std::size_t>(slot));
                    t.votes[l.value()] += 1;
                    t.trust[l.value()] += grid.trust(img, static_cast<std::size_t>(slot));
                }
                ClassLabel label = agg::aggregate(t, method, weights);
                if (merge_classes(label, scheme) == truth[img]) ++agree;
            }
            s.agreements.push_back(static_cast<double>(agree) /
                                   static_cast<double>(grid.n_images));
        }

        std::vector<double> sorted = s.agreements;
        std::sort(sorted.begin(), sorted.end());
        double sum = 0.0;
        for (double v : sorted) sum += v;
        s.mean = sum / static_cast<double>(sorted.size());
        s.median = quantile_sorted(sorted, 0.5);
        s.q1 = quantile_sorted(sorted, 0.25);
        s.q3 = quantile_sorted(sorted, 0.75);
        s.min = sorted.front();
        s.max = sorted.back();
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace crowdscore::sens
