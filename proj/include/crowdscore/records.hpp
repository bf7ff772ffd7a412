#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "crowdscore/labels.hpp"

namespace crowdscore {

enum class Mode { Quiz, Work };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& s);

// Dot annotation for one image: presence flag plus clicked nucleus centers,
// split by staining polarity. No nuclei implies both dot lists are empty.
struct NucleiAnnotation {
    bool has_nuclei = false;
    std::vector<std::pair<int, int>> positive;
    std::vector<std::pair<int, int>> negative;

    int positive_count() const { return static_cast<int>(positive.size()); }
    int negative_count() const { return static_cast<int>(negative.size()); }

    void validate() const;
};

// One contributor's answer for one image. Defaults to an empty annotation
// (NucleiAnnotation is the only default-constructible alternative).
using Answer = std::variant<NucleiAnnotation, ClassLabel>;

// One crowd judgment with its QC metadata. elapsed_seconds is the duration
// of the enclosing task, not of this single image.
struct Judgment {
    std::string image_id;
    std::string contributor_id;
    Answer payload;
    double elapsed_seconds = 0.0;
    Mode mode = Mode::Work;
    bool is_test = false;
    std::int64_t timestamp_utc = 0;

    void validate() const;
};

// Expert (or simulated) truth for one image. Pathologist truth is 3-class
// with no nucleus counts; simulated truth is 4-class and carries the
// positivity fraction and nucleus count that generated it.
struct GroundTruthImage {
    std::string image_id;
    std::string patient_id;
    ClassLabel true_label{0, Scheme::ThreeClass};
    std::optional<double> true_pindex;
    std::optional<int> nuclei_total;

    void validate(const ClassBins& bins) const;
};

inline const char* mode_name(Mode m) { return m == Mode::Quiz ? "quiz" : "work"; }

inline Mode mode_from_name(const std::string& s) {
    if (s == "quiz") return Mode::Quiz;
    if (s == "work") return Mode::Work;
    fail(Errc::value, "unknown mode token '" + s + "'");
}

inline void NucleiAnnotation::validate() const {
    if (!has_nuclei && (!positive.empty() || !negative.empty()))
        fail(Errc::consistency, "has_nuclei=false with non-empty dot lists");
    for (const auto& dots : {&positive, &negative})
        for (const auto& [x, y] : *dots)
            if (x < 0 || y < 0) fail(Errc::value, "negative dot coordinate");
}

inline void Judgment::validate() const {
    if (!(elapsed_seconds > 0.0))
        fail(Errc::value, "elapsed_seconds must be positive");
    if (mode == Mode::Quiz && !is_test)
        fail(Errc::consistency, "quiz-mode judgments must be test judgments");
}

inline void GroundTruthImage::validate(const ClassBins& bins) const {
    if (true_pindex) {
        if (*true_pindex < 0.0 || *true_pindex > 1.0)
            fail(Errc::value, "true_pindex outside [0,1]");
        ClassLabel derived = merge_classes(classify_fraction(*true_pindex, bins),
                                           true_label.scheme());
        if (!(derived == true_label))
            fail(Errc::consistency, "true_pindex does not classify to true_label for " + image_id);
    }
    if (nuclei_total && *nuclei_total < 0) fail(Errc::value, "negative nuclei_total");
}

} // namespace crowdscore
