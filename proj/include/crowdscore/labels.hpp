#pragma once

#include <array>
#include <compare>
#include <string>

#include "crowdscore/error.hpp"

namespace crowdscore {

// Labeling scheme: how many ordinal classes are distinguished.
// FourClass is the crowd-facing scheme (A<B<C<D); ThreeClass matches the
// pathologist scoring (A<B<C); TwoClass is negative vs positive (A<B).
enum class Scheme : int {
    TwoClass = 2,
    ThreeClass = 3,
    FourClass = 4,
};

inline int class_count(Scheme s) { return static_cast<int>(s); }

const char* scheme_name(Scheme s);
Scheme scheme_from_classes(int n);

// Ordinal staining class. Value 0 is always the negative class A; higher
// values mean more positive staining. Ordering is only defined within one
// scheme.
class ClassLabel {
public:
    ClassLabel(int value, Scheme scheme);

    static ClassLabel from_letter(char letter, Scheme scheme = Scheme::FourClass);

    int value() const noexcept { return value_; }
    Scheme scheme() const noexcept { return scheme_; }
    char letter() const noexcept { return static_cast<char>('A' + value_); }

    bool operator==(const ClassLabel& other) const noexcept {
        return value_ == other.value_ && scheme_ == other.scheme_;
    }

    // Ordinal comparison; throws scheme_mismatch when schemes differ.
    std::strong_ordering compare(const ClassLabel& other) const;

private:
    int value_;
    Scheme scheme_;
};

inline bool operator<(const ClassLabel& a, const ClassLabel& b) {
    return a.compare(b) == std::strong_ordering::less;
}
inline bool operator<=(const ClassLabel& a, const ClassLabel& b) {
    return a.compare(b) != std::strong_ordering::greater;
}

// Positivity-fraction bins, one (lower, upper] interval per class, with the
// first bin additionally containing 0. Stored as the sequence of upper
// bounds; lower bound of bin k is upper[k-1] (0 for bin 0).
class ClassBins {
public:
    ClassBins(Scheme scheme, std::array<double, 4> uppers);

    // A=[0,0.01], B=(0.01,0.1], C=(0.1,0.5], D=(0.5,1], and the merged
    // variants of the same boundaries for coarser schemes.
    static ClassBins defaults(Scheme scheme = Scheme::FourClass);

    Scheme scheme() const noexcept { return scheme_; }
    double lower(int k) const { return k == 0 ? 0.0 : uppers_[k - 1]; }
    double upper(int k) const { return uppers_[k]; }

    // Midpoint of class k's interval (basis of the midpoint class weights).
    double midpoint(int k) const { return 0.5 * (lower(k) + upper(k)); }

private:
    Scheme scheme_;
    std::array<double, 4> uppers_;
};

// Coarsen a label: 4->3 folds D into C, 3->2 folds C into B, 4->2 composes
// the two. target equal to the label's scheme is the identity; a finer
// target raises invalid_merge.
ClassLabel merge_classes(const ClassLabel& label, Scheme target);

// The unique class whose (lower, upper] bin contains p, with p = 0 mapped
// to class A. p outside [0,1] raises domain.
ClassLabel classify_fraction(double p, const ClassBins& bins);

} // namespace crowdscore
