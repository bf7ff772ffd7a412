#include "crowdscore/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace crowdscore::agg {

const char* method_name(Method m) {
    switch (m) {
        case Method::CV: return "cv";
        case Method::CT: return "ct";
        case Method::WCV: return "wcv";
        case Method::WCT: return "wct";
    }
    return "?";
}

Method method_from_name(const std::string& s) {
    if (s == "cv") return Method::CV;
    if (s == "ct") return Method::CT;
    if (s == "wcv") return Method::WCV;
    if (s == "wct") return Method::WCT;
    fail(Errc::value, "unknown aggregation method '" + s + "'");
}

ClassWeights ClassWeights::defaults(bool midpoint_b) {
    ClassWeights w;
    if (midpoint_b) w.w[1] = 0.055;
    return w;
}

void ClassWeights::validate() const {
    int n = class_count(bins.scheme());
    for (int k = 0; k < n; ++k) {
        bool inside = (k == 0) ? (w[k] >= 0.0 && w[k] <= bins.upper(0))
                               : (w[k] > bins.lower(k) && w[k] <= bins.upper(k));
        if (!inside)
            fail(Errc::domain, "weight for class " + std::string(1, char('A' + k)) +
                                   " lies outside its bin");
    }
}

VoteTally tally(const std::vector<Vote>& votes) {
    if (votes.empty()) fail(Errc::empty_tally, "no judgments to tally");
    VoteTally t;
    t.scheme = votes.front().label.scheme();
    std::set<std::string> seen;
    for (const Vote& v : votes) {
        if (v.label.scheme() != t.scheme)
            fail(Errc::scheme_mismatch, "mixed label schemes in one tally");
        if (!seen.insert(v.contributor_id).second)
            fail(Errc::duplicate_vote, "contributor " + v.contributor_id + " voted twice");
        if (v.trust < 0.0 || v.trust > 1.0)
            fail(Errc::value, "trust score outside [0,1]");
        t.votes[v.label.value()] += 1;
        t.trust[v.label.value()] += v.trust;
    }
    return t;
}

ClassLabel aggregate_cv(const VoteTally& t) {
    if (t.total_votes() == 0) fail(Errc::empty_tally, "empty tally");
    int n = class_count(t.scheme);
    int best = 0;
    for (int k = 1; k < n; ++k) {
        if (t.votes[k] > t.votes[best] ||
            (t.votes[k] == t.votes[best] && t.trust[k] > t.trust[best]))
            best = k;
    }
    return ClassLabel(best, t.scheme);
}

ClassLabel aggregate_ct(const VoteTally& t) {
    if (t.total_votes() == 0) fail(Errc::empty_tally, "empty tally");
    if (t.total_trust() <= 0.0)
        fail(Errc::degenerate_trust, "all trust sums are zero; CT is undefined");
    int n = class_count(t.scheme);
    int best = 0;
    for (int k = 1; k < n; ++k) {
        if (t.trust[k] > t.trust[best] ||
            (t.trust[k] == t.trust[best] && t.votes[k] > t.votes[best]))
            best = k;
    }
    return ClassLabel(best, t.scheme);
}

double weighted_score(const VoteTally& t, const ClassWeights& w, WeightBasis basis) {
    int n = class_count(t.scheme);
    double num = 0.0, den = 0.0;
    int populated = -1;
    bool unanimous = true;
    for (int k = 0; k < n; ++k) {
        double mass = basis == WeightBasis::Votes ? static_cast<double>(t.votes[k]) : t.trust[k];
        if (mass > 0.0) {
            if (populated >= 0) unanimous = false;
            populated = k;
        }
        num += w.w[k] * mass;
        den += mass;
    }
    if (den <= 0.0) fail(Errc::empty_tally, "zero denominator in weighted score");
    // Unanimity returns the class weight itself, exactly.
    if (unanimous) return w.w[populated];
    return num / den;
}

ClassLabel aggregate_weighted(const VoteTally& t, const ClassWeights& w, WeightBasis basis) {
    return classify_fraction(weighted_score(t, w, basis), w.bins);
}

ClassLabel aggregate(const VoteTally& t, Method m, const ClassWeights& w) {
    switch (m) {
        case Method::CV: return aggregate_cv(t);
        case Method::CT: return aggregate_ct(t);
        case Method::WCV: return aggregate_weighted(t, w, WeightBasis::Votes);
        case Method::WCT: return aggregate_weighted(t, w, WeightBasis::Trust);
    }
    fail(Errc::domain, "bad method");
}

namespace {

// Median of non-negative integer counts, rounding .5 away from zero.
int median_count(std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    double mid = 0.5 * (v[n / 2 - 1] + v[n / 2]);
    return static_cast<int>(std::round(mid)); // round() rounds halves away from zero
}

} // namespace

std::pair<int, int> nuclei_aggregate(const std::vector<NucleiAnnotation>& annotations) {
    if (annotations.empty()) fail(Errc::empty_input, "no annotations to aggregate");
    std::vector<int> pos, neg;
    pos.reserve(annotations.size());
    neg.reserve(annotations.size());
    for (const auto& a : annotations) {
        pos.push_back(a.has_nuclei ? a.positive_count() : 0);
        neg.push_back(a.has_nuclei ? a.negative_count() : 0);
    }
    return {median_count(pos), median_count(neg)};
}

std::optional<PositivityIndex> pindex(int positive, int negative) {
    if (positive < 0 || negative < 0) fail(Errc::value, "negative nucleus count");
    int total = positive + negative;
    if (total == 0) return std::nullopt;
    return PositivityIndex{positive, negative, static_cast<double>(positive) / total};
}

ClassLabel patient_label(const std::vector<ClassLabel>& image_labels) {
    if (image_labels.empty()) fail(Errc::empty_input, "no image labels for patient");
    Scheme scheme = image_labels.front().scheme();
    std::vector<int> codes;
    codes.reserve(image_labels.size());
    for (const auto& l : image_labels) {
        if (l.scheme() != scheme)
            fail(Errc::scheme_mismatch, "mixed schemes in patient labels");
        codes.push_back(l.value());
    }
    std::sort(codes.begin(), codes.end());
    size_t n = codes.size();
    if (n % 2 == 1) return ClassLabel(codes[n / 2], scheme);
    // round half-integer medians up, toward the more positive class
    int up = (codes[n / 2 - 1] + codes[n / 2] + 1) / 2;
    return ClassLabel(up, scheme);
}

} // namespace crowdscore::agg
