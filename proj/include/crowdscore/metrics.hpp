#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdscore/error.hpp"

namespace crowdscore::metrics {

// items x raters grid of optional integer label codes.
class RatingsMatrix {
public:
    RatingsMatrix(std::size_t items, std::size_t raters);

    std::size_t items() const noexcept { return items_; }
    std::size_t raters() const noexcept { return raters_; }

    std::optional<int>& at(std::size_t item, std::size_t rater);
    const std::optional<int>& at(std::size_t item, std::size_t rater) const;

    void set(std::size_t item, std::size_t rater, int code) { at(item, rater) = code; }
    bool complete() const;

    // Column-major construction: one full label vector per rater.
    static RatingsMatrix from_columns(const std::vector<std::vector<int>>& columns);

private:
    std::size_t items_, raters_;
    std::vector<std::optional<int>> cells_;
};

struct MetricReport {
    double percent_agreement = 0.0;
    double cohen_kappa_pairwise_mean = 0.0;
    double fleiss_kappa = 0.0;
    double spearman_rho_mean = 0.0;
    double icc = 0.0;
};

// Fraction of positions where the two label vectors agree.
double percent_agreement(std::span<const int> a, std::span<const int> b);

// Chance-corrected two-rater agreement from the marginal products.
double cohen_kappa(std::span<const int> a, std::span<const int> b);

// Multi-rater chance-corrected agreement; requires a complete matrix.
double fleiss_kappa(const RatingsMatrix& m);

// Average ranks (ties shared), then Pearson on the ranks.
double spearman(std::span<const double> a, std::span<const double> b);
double spearman(std::span<const int> a, std::span<const int> b);

// Mean of pairwise Spearman correlations over jointly rated items. Pairs
// where either rater is constant on the overlap (or the overlap is < 3)
// are skipped with a warning; if every pair skips, undefined_correlation.
double spearman_rho_mean(const RatingsMatrix& m,
                         std::vector<std::string>* warnings = nullptr);

// ICC(2,1): two-way random effects, absolute agreement, single measurement.
double icc(const RatingsMatrix& m);

// All metrics of the report for one complete matrix. percent_agreement and
// Cohen's kappa are averaged over rater pairs.
MetricReport compute_report(const RatingsMatrix& m,
                            std::vector<std::string>* warnings = nullptr);

// Two-sided p-value for Spearman's rho under the normal approximation
// z = rho * sqrt(n - 1).
double spearman_p_value(double rho, std::size_t n);

} // namespace crowdscore::metrics
