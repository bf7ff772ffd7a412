#include <doctest.h>

#include "crowdscore/labels.hpp"

using namespace crowdscore;

namespace {
ClassLabel L4(char c) { return ClassLabel::from_letter(c, Scheme::FourClass); }
ClassLabel L3(char c) { return ClassLabel::from_letter(c, Scheme::ThreeClass); }
} // namespace

TEST_CASE("class labels validate their range") {
    CHECK_THROWS_AS(ClassLabel(4, Scheme::FourClass), Error);
    CHECK_THROWS_AS(ClassLabel(3, Scheme::ThreeClass), Error);
    CHECK_THROWS_AS(ClassLabel(-1, Scheme::FourClass), Error);
    CHECK(ClassLabel(3, Scheme::FourClass).letter() == 'D');
    CHECK_THROWS_AS(ClassLabel::from_letter('E'), Error);
}

TEST_CASE("merge_classes folds higher classes downward") {
    // D folds into C for the 3-class comparison
    CHECK(merge_classes(L4('D'), Scheme::ThreeClass) == L3('C'));
    CHECK(merge_classes(L4('C'), Scheme::ThreeClass) == L3('C'));
    CHECK(merge_classes(L4('B'), Scheme::ThreeClass) == L3('B'));
    // the negative class is fixed under every merge
    CHECK(merge_classes(L4('A'), Scheme::TwoClass).letter() == 'A');
    // all positive classes fold into the single positive class B
    CHECK(merge_classes(L3('C'), Scheme::TwoClass).letter() == 'B');
    CHECK(merge_classes(L4('D'), Scheme::TwoClass).letter() == 'B');
    // identity merge is allowed (idempotence), refining is not
    CHECK(merge_classes(L3('B'), Scheme::ThreeClass) == L3('B'));
    CHECK_THROWS_AS(merge_classes(L3('B'), Scheme::FourClass), Error);
}

TEST_CASE("merge is monotone and idempotent") {
    for (Scheme target : {Scheme::ThreeClass, Scheme::TwoClass}) {
        for (int a = 0; a < 4; ++a) {
            for (int b = a; b < 4; ++b) {
                auto ma = merge_classes(ClassLabel(a, Scheme::FourClass), target);
                auto mb = merge_classes(ClassLabel(b, Scheme::FourClass), target);
                CHECK(ma <= mb);
            }
            auto once = merge_classes(ClassLabel(a, Scheme::FourClass), target);
            CHECK(merge_classes(once, target) == once);
        }
    }
    // 4->2 composes 4->3 and 3->2
    for (int a = 0; a < 4; ++a) {
        auto direct = merge_classes(ClassLabel(a, Scheme::FourClass), Scheme::TwoClass);
        auto composed = merge_classes(
            merge_classes(ClassLabel(a, Scheme::FourClass), Scheme::ThreeClass),
            Scheme::TwoClass);
        CHECK(direct == composed);
    }
}

TEST_CASE("classify_fraction uses (lower, upper] bins with 0 in A") {
    ClassBins bins = ClassBins::defaults();
    CHECK(classify_fraction(0.05, bins) == L4('B'));
    CHECK(classify_fraction(0.0, bins) == L4('A'));
    // boundaries are inclusive on the upper side
    CHECK(classify_fraction(0.1, bins) == L4('B'));
    CHECK(classify_fraction(0.01, bins) == L4('A'));
    CHECK(classify_fraction(0.5, bins) == L4('C'));
    CHECK(classify_fraction(1.0, bins) == L4('D'));
    CHECK_THROWS_AS(classify_fraction(-0.001, bins), Error);
    CHECK_THROWS_AS(classify_fraction(1.001, bins), Error);
}

TEST_CASE("every fraction lands in exactly one class") {
    ClassBins bins = ClassBins::defaults();
    // sweep a fine grid plus the exact boundaries
    for (int i = 0; i <= 10000; ++i) {
        double p = i / 10000.0;
        ClassLabel c = classify_fraction(p, bins);
        bool inside = p <= bins.upper(c.value()) && (c.value() == 0 || p > bins.lower(c.value()));
        CHECK(inside);
    }
}

TEST_CASE("classify then merge equals classification with merged bins") {
    ClassBins bins4 = ClassBins::defaults(Scheme::FourClass);
    for (Scheme target : {Scheme::ThreeClass, Scheme::TwoClass}) {
        ClassBins merged = ClassBins::defaults(target);
        for (int i = 0; i <= 2000; ++i) {
            double p = i / 2000.0;
            CHECK(merge_classes(classify_fraction(p, bins4), target) ==
                  classify_fraction(p, merged));
        }
    }
}

TEST_CASE("class bins reject malformed boundaries") {
    CHECK_THROWS_AS(ClassBins(Scheme::FourClass, {0.1, 0.05, 0.5, 1.0}), Error);
    CHECK_THROWS_AS(ClassBins(Scheme::FourClass, {0.01, 0.1, 0.5, 0.9}), Error);
}
