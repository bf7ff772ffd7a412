#include "crowdscore/labels.hpp"

namespace crowdscore {

const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::TwoClass: return "2-class";
        case Scheme::ThreeClass: return "3-class";
        case Scheme::FourClass: return "4-class";
    }
    return "?";
}

Scheme scheme_from_classes(int n) {
    if (n < 2 || n > 4)
        fail(Errc::domain, "scheme must have 2, 3 or 4 classes, got " + std::to_string(n));
    return static_cast<Scheme>(n);
}

ClassLabel::ClassLabel(int value, Scheme scheme) : value_(value), scheme_(scheme) {
    if (value < 0 || value >= class_count(scheme))
        fail(Errc::domain, "class value " + std::to_string(value) + " out of range for " +
                               scheme_name(scheme) + " scheme");
}

ClassLabel ClassLabel::from_letter(char letter, Scheme scheme) {
    int v = letter - 'A';
    if (v < 0 || v >= class_count(scheme))
        fail(Errc::value, std::string("unknown label token '") + letter + "' for " +
                              scheme_name(scheme) + " scheme");
    return ClassLabel(v, scheme);
}

std::strong_ordering ClassLabel::compare(const ClassLabel& other) const {
    if (scheme_ != other.scheme_)
        fail(Errc::scheme_mismatch, "cannot order labels from different schemes");
    return value_ <=> other.value_;
}

ClassBins::ClassBins(Scheme scheme, std::array<double, 4> uppers)
    : scheme_(scheme), uppers_(uppers) {
    int n = class_count(scheme);
    double prev = 0.0;
    for (int k = 0; k < n; ++k) {
        if (!(uppers_[k] > prev))
            fail(Errc::domain, "class bins must be strictly increasing");
        prev = uppers_[k];
    }
    if (uppers_[n - 1] != 1.0)
        fail(Errc::domain, "last class bin must end at 1");
}

ClassBins ClassBins::defaults(Scheme scheme) {
    switch (scheme) {
        case Scheme::FourClass: return ClassBins(scheme, {0.01, 0.1, 0.5, 1.0});
        case Scheme::ThreeClass: return ClassBins(scheme, {0.01, 0.1, 1.0, 1.0});
        case Scheme::TwoClass: return ClassBins(scheme, {0.01, 1.0, 1.0, 1.0});
    }
    fail(Errc::domain, "bad scheme");
}

ClassLabel merge_classes(const ClassLabel& label, Scheme target) {
    int from = class_count(label.scheme());
    int to = class_count(target);
    if (to > from)
        fail(Errc::invalid_merge, std::string("cannot merge ") + scheme_name(label.scheme()) +
                                      " label into finer " + scheme_name(target) + " scheme");
    // 4->3 maps A,B,C,D -> A,B,C,C; 3->2 maps A,B,C -> A,B,B; compositions
    // collapse everything above the top target class.
    return ClassLabel(std::min(label.value(), to - 1), target);
}

ClassLabel classify_fraction(double p, const ClassBins& bins) {
    if (!(p >= 0.0) || !(p <= 1.0))
        fail(Errc::domain, "fraction " + std::to_string(p) + " outside [0,1]");
    int n = class_count(bins.scheme());
    for (int k = 0; k < n; ++k) {
        if (p <= bins.upper(k))
            return ClassLabel(k, bins.scheme());
    }
    return ClassLabel(n - 1, bins.scheme());
}

} // namespace crowdscore
