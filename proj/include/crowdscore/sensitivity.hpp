#pragma once

#include <cstdint>
#include <vector>

#include "crowdscore/aggregate.hpp"
#include "crowdscore/labels.hpp"

namespace crowdscore::sens {

// All C(n,k) index subsets of {0..n-1} in lexicographic order.
std::vector<std::vector<int>> combinations(int n, int k);

std::uint64_t binomial(int n, int k);

// Fixed-size grid of crowd labels: n_labels slots per image, plus optional
// per-slot trust scores (required by the trust-based aggregators).
struct LabelGrid {
    std::size_t n_images = 0;
    std::size_t n_labels = 0;
    std::vector<ClassLabel> labels;       // row-major, n_images x n_labels
    std::vector<double> trusts;           // same layout, or empty

    const ClassLabel& label(std::size_t image, std::size_t slot) const {
        return labels[image * n_labels + slot];
    }
    double trust(std::size_t image, std::size_t slot) const {
        return trusts.empty() ? 0.0 : trusts[image * n_labels + slot];
    }
    void validate() const;
};

// Agreement distribution for one crowd size.
struct SizeSummary {
    int crowd_size = 0;
    std::uint64_t pattern_count = 0;
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::vector<double> agreements; // one value per combination pattern
};

// For each crowd size c in 1..max_size, aggregate every image's
// pattern-selected labels, merge the aggregate to the truth's scheme, and
// record percent agreement with truth across images for every pattern.
std::vector<SizeSummary> sensitivity_analysis(const LabelGrid& grid,
                                              const std::vector<ClassLabel>& truth,
                                              agg::Method method,
                                              const agg::ClassWeights& weights,
                                              int max_size,
                                              Scheme scheme);

} // namespace crowdscore::sens
