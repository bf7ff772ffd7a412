#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "crowdscore/labels.hpp"
#include "crowdscore/records.hpp"

namespace crowdscore::agg {

// Per-class vote counts V_k and trust sums T_k for one image.
struct VoteTally {
    std::array<int, 4> votes{};
    std::array<double, 4> trust{};
    Scheme scheme = Scheme::FourClass;

    int total_votes() const {
        int t = 0;
        for (int v : votes) t += v;
        return t;
    }
    double total_trust() const {
        double t = 0;
        for (double v : trust) t += v;
        return t;
    }
};

// Class weights for the weighted aggregators, each lying inside its class
// bin. The stock weight of class B is 0.05; defaults(true) selects the
// exact bin midpoint 0.055 instead.
struct ClassWeights {
    std::array<double, 4> w{0.005, 0.05, 0.3, 0.75};
    ClassBins bins = ClassBins::defaults(Scheme::FourClass);

    static ClassWeights defaults(bool midpoint_b = false);
    void validate() const;
};

struct PositivityIndex {
    int positive = 0;
    int negative = 0;
    double value = 0.0; // positive / (positive + negative)
};

enum class Method { CV, CT, WCV, WCT };
enum class WeightBasis { Votes, Trust };

const char* method_name(Method m);
Method method_from_name(const std::string& s);

// One contributor's vote on one image.
struct Vote {
    std::string contributor_id;
    ClassLabel label{0, Scheme::FourClass};
    double trust = 0.0;
};

// Sum votes and trust per class. Each contributor may appear once.
VoteTally tally(const std::vector<Vote>& votes);

// Maximum crowd votes; ties broken by larger trust sum, then lower class.
ClassLabel aggregate_cv(const VoteTally& t);

// Maximum summed trust; ties broken by larger vote count, then lower class.
ClassLabel aggregate_ct(const VoteTally& t);

// (sum_k w_k V_k) / (sum_k V_k), or the same on trust sums.
double weighted_score(const VoteTally& t, const ClassWeights& w, WeightBasis basis);

// Class whose bin contains the weighted score.
ClassLabel aggregate_weighted(const VoteTally& t, const ClassWeights& w, WeightBasis basis);

ClassLabel aggregate(const VoteTally& t, Method m, const ClassWeights& w);

// Component-wise median of per-contributor nucleus counts. Even-length
// medians round half away from zero so counts stay integral.
std::pair<int, int> nuclei_aggregate(const std::vector<NucleiAnnotation>& annotations);

// positive / (positive + negative); nullopt when the image has no counted
// nuclei (callers map that to class A and flag the image).
std::optional<PositivityIndex> pindex(int positive, int negative);

// Median of a patient's image labels; half-integer medians round toward the
// more positive class.
ClassLabel patient_label(const std::vector<ClassLabel>& image_labels);

} // namespace crowdscore::agg
