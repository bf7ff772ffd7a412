#include "crowdscore/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace crowdscore::metrics {

RatingsMatrix::RatingsMatrix(std::size_t items, std::size_t raters)
    : items_(items), raters_(raters), cells_(items * raters) {
    if (items < 1 || raters < 2)
        fail(Errc::shape, "ratings matrix needs at least 1 item and 2 raters");
}

std::optional<int>& RatingsMatrix::at(std::size_t item, std::size_t rater) {
    if (item >= items_ || rater >= raters_) fail(Errc::shape, "ratings index out of range");
    return cells_[item * raters_ + rater];
}

const std::optional<int>& RatingsMatrix::at(std::size_t item, std::size_t rater) const {
    if (item >= items_ || rater >= raters_) fail(Errc::shape, "ratings index out of range");
    return cells_[item * raters_ + rater];
}

bool RatingsMatrix::complete() const {
    for (const auto& c : cells_)
        if (!c) return false;
    return true;
}

RatingsMatrix RatingsMatrix::from_columns(const std::vector<std::vector<int>>& columns) {
    if (columns.size() < 2) fail(Errc::shape, "need at least 2 rater columns");
    std::size_t items = columns.front().size();
    for (const auto& col : columns)
        if (col.size() != items) fail(Errc::shape, "rater columns have unequal lengths");
    RatingsMatrix m(items, columns.size());
    for (std::size_t r = 0; r < columns.size(); ++r)
        for (std::size_t i = 0; i < items; ++i) m.set(i, r, columns[r][i]);
    return m;
}

double percent_agreement(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) fail(Errc::shape, "label vectors have different lengths");
    if (a.empty()) fail(Errc::empty_input, "empty label vectors");
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] == b[i]) ++agree;
    return static_cast<double>(agree) / static_cast<double>(a.size());
}

double cohen_kappa(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) fail(Errc::shape, "label vectors have different lengths");
    if (a.size() < 2) fail(Errc::empty_input, "need at least 2 items for kappa");
    std::set<int> categories(a.begin(), a.end());
    categories.insert(b.begin(), b.end());
    if (categories.size() < 2)
        fail(Errc::degenerate, "kappa undefined: both raters constant and equal");

    double n = static_cast<double>(a.size());
    std::map<int, double> ma, mb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma[a[i]] += 1.0;
        mb[b[i]] += 1.0;
    }
    double pe = 0.0;
    for (const auto& [cat, ca] : ma) {
        auto it = mb.find(cat);
        if (it != mb.end()) pe += (ca / n) * (it->second / n);
    }
    if (pe >= 1.0) fail(Errc::degenerate, "kappa undefined: chance agreement is 1");
    double po = percent_agreement(a, b);
    return (po - pe) / (1.0 - pe);
}

double fleiss_kappa(const RatingsMatrix& m) {
    if (!m.complete()) fail(Errc::incomplete_matrix, "fleiss_kappa requires a complete matrix");
    std::size_t N = m.items();
    std::size_t n = m.raters();

    std::set<int> cats;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t r = 0; r < n; ++r) cats.insert(*m.at(i, r));
    if (cats.size() < 2) fail(Errc::degenerate, "fleiss kappa undefined with one category");

    std::map<int, double> pj;
    double p_bar = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        std::map<int, int> counts;
        for (std::size_t r = 0; r < n; ++r) ++counts[*m.at(i, r)];
        double pi = 0.0;
        for (const auto& [cat, c] : counts) {
            pi += static_cast<double>(c) * (c - 1);
            pj[cat] += c;
        }
        p_bar += pi / (static_cast<double>(n) * (n - 1));
    }
    p_bar /= static_cast<double>(N);
    double pe = 0.0;
    for (auto& [cat, total] : pj) {
        double frac = total / (static_cast<double>(N) * n);
        pe += frac * frac;
    }
    if (pe >= 1.0) fail(Errc::degenerate, "fleiss kappa undefined: chance agreement is 1");
    return (p_bar - pe) / (1.0 - pe);
}

namespace {

// 1-based fractional ranks; ties get the average rank of their block.
std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        double shared = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    if (da <= 0.0 || db <= 0.0)
        fail(Errc::undefined_correlation, "correlation undefined for a constant vector");
    return num / std::sqrt(da * db);
}

} // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) fail(Errc::shape, "vectors have different lengths");
    if (a.size() < 3) fail(Errc::empty_input, "need at least 3 items for spearman");
    auto ra = average_ranks(a);
    auto rb = average_ranks(b);
    return pearson(ra, rb);
}

double spearman(std::span<const int> a, std::span<const int> b) {
    std::vector<double> da(a.begin(), a.end()), db(b.begin(), b.end());
    return spearman(std::span<const double>(da), std::span<const double>(db));
}

double spearman_rho_mean(const RatingsMatrix& m, std::vector<std::string>* warnings) {
    double sum = 0.0;
    int used = 0;
    for (std::size_t r1 = 0; r1 < m.raters(); ++r1) {
        for (std::size_t r2 = r1 + 1; r2 < m.raters(); ++r2) {
            std::vector<double> a, b;
            for (std::size_t i = 0; i < m.items(); ++i) {
                const auto& x = m.at(i, r1);
                const auto& y = m.at(i, r2);
                if (x && y) {
                    a.push_back(*x);
                    b.push_back(*y);
                }
            }
            std::string why;
            if (a.size() < 3) {
                why = "overlap below 3 items";
            } else {
                try {
                    sum += spearman(std::span<const double>(a), std::span<const double>(b));
                    ++used;
                    continue;
                } catch (const Error& e) {
                    if (e.code() != Errc::undefined_correlation) throw;
                    why = "constant rater on overlap";
                }
            }
            if (warnings)
                warnings->push_back("skipping rater pair (" + std::to_string(r1) + "," +
                                    std::to_string(r2) + "): " + why);
        }
    }
    if (used == 0)
        fail(Errc::undefined_correlation, "spearman undefined for every rater pair");
    return sum / used;
}

double icc(const RatingsMatrix& m) {
    if (!m.complete()) fail(Errc::incomplete_matrix, "icc requires a complete matrix");
    std::size_t n = m.items();
    std::size_t k = m.raters();
    if (n < 2) fail(Errc::shape, "icc needs at least 2 items");

    double grand = 0.0;
    std::vector<double> row_mean(n, 0.0), col_mean(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < k; ++r) {
            double x = *m.at(i, r);
            grand += x;
            row_mean[i] += x;
            col_mean[r] += x;
        }
    }
    grand /= static_cast<double>(n * k);
    for (auto& v : row_mean) v /= static_cast<double>(k);
    for (auto& v : col_mean) v /= static_cast<double>(n);

    double ssr = 0.0, ssc = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < n; ++i) ssr += (row_mean[i] - grand) * (row_mean[i] - grand);
    ssr *= static_cast<double>(k);
    for (std::size_t r = 0; r < k; ++r) ssc += (col_mean[r] - grand) * (col_mean[r] - grand);
    ssc *= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < k; ++r) {
            double d = *m.at(i, r) - grand;
            sst += d * d;
        }
    double sse = sst - ssr - ssc;

    if (ssr <= 1e-12 * std::max(1.0, sst))
        fail(Errc::degenerate, "icc undefined: zero between-item variance");

    double msr = ssr / static_cast<double>(n - 1);
    double msc = ssc / static_cast<double>(k - 1);
    double mse = sse / static_cast<double>((n - 1) * (k - 1));

    double denom = msr + static_cast<double>(k - 1) * mse +
                   static_cast<double>(k) * (msc - mse) / static_cast<double>(n);
    if (denom == 0.0) fail(Errc::degenerate, "icc undefined: zero denominator");
    return (msr - mse) / denom;
}

MetricReport compute_report(const RatingsMatrix& m, std::vector<std::string>* warnings) {
    if (!m.complete())
        fail(Errc::incomplete_matrix, "metric report requires a complete matrix");
    MetricReport rep;

    double ag = 0.0, ck = 0.0;
    int pairs = 0;
    for (std::size_t r1 = 0; r1 < m.raters(); ++r1) {
        for (std::size_t r2 = r1 + 1; r2 < m.raters(); ++r2) {
            std::vector<int> a, b;
            for (std::size_t i = 0; i < m.items(); ++i) {
                a.push_back(*m.at(i, r1));
                b.push_back(*m.at(i, r2));
            }
            ag += percent_agreement(a, b);
            ck += cohen_kappa(a, b);
            ++pairs;
        }
    }
    rep.percent_agreement = ag / pairs;
    rep.cohen_kappa_pairwise_mean = ck / pairs;
    rep.fleiss_kappa = fleiss_kappa(m);
    rep.spearman_rho_mean = spearman_rho_mean(m, warnings);
    rep.icc = icc(m);
    return rep;
}

double spearman_p_value(double rho, std::size_t n) {
    if (n < 2) return 1.0;
    double z = std::fabs(rho) * std::sqrt(static_cast<double>(n - 1));
    return std::erfc(z / std::sqrt(2.0)); // 2 * (1 - Phi(z))
}

} // namespace crowdscore::metrics
