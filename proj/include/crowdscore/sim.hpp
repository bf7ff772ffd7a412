#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crowdscore/qc.hpp"
#include "crowdscore/records.hpp"
#include "crowdscore/rng.hpp"

namespace crowdscore::sim {

// Behavioral model for one synthetic contributor. The confusion matrix is
// row-stochastic over true classes; task times are lognormal per image.
struct ContributorProfile {
    std::array<std::array<double, 4>, 4> confusion{{{1, 0, 0, 0},
                                                    {0, 1, 0, 0},
                                                    {0, 0, 1, 0},
                                                    {0, 0, 0, 1}}};
    double seconds_per_image_mean = 30.0;
    double seconds_per_image_sigma = 0.0; // sigma of log(time); 0 = deterministic
    double nuclei_detect_prob = 1.0;
    double nuclei_flip_prob = 0.0;
    double nuclei_false_positive_rate = 0.0; // Poisson mean per image
    std::optional<int> quit_after;           // stop volunteering after N work judgments

    // Diagonal accuracy d with the error mass biased upward (non-experts
    // overcall staining); class D falls back to C.
    static ContributorProfile with_diagonal(double d);

    void validate() const;
};

struct SimConfig {
    int n_images = 1000;
    int n_patients = 400;
    std::array<double, 4> class_prior{0.25, 0.25, 0.25, 0.25};
    double nuclei_per_image = 150.0; // Poisson mean, floored at 10 per image
    std::vector<std::pair<ContributorProfile, int>> contributor_pool;
    int labels_per_image = 3;
    int test_pool_size = 250;
    std::uint64_t master_seed = 1;

    void validate() const;
};

// Deterministic synthetic cohort: each patient contributes 1-3 images; each
// image gets a true class from the prior, a positivity fraction inside that
// class's bin consistent with its nucleus count, and the count itself.
std::vector<GroundTruthImage> sample_ground_truth(const SimConfig& cfg);

// One crowd label drawn from the confusion row of the true class.
ClassLabel simulate_label(const ContributorProfile& p, const ClassLabel& truth, Rng& rng);

// Dot annotation through the detection/flip/false-positive channel, dots
// placed uniformly in a nominal 828x848 frame.
NucleiAnnotation simulate_nuclei(const ContributorProfile& p, const GroundTruthImage& gt,
                                 Rng& rng);

struct SimResult {
    std::vector<qc::LogRecord> log;
    std::vector<qc::ContributorState> states; // sorted by contributor id
    std::vector<GroundTruthImage> truth;      // work images
    std::vector<GroundTruthImage> test_pool;
    std::map<std::string, std::size_t> profile_of; // contributor -> pool entry
    bool complete = false;                         // false = pool exhausted early
    qc::Progress progress;
};

// Registers the synthetic pool, runs quiz then round-robin work tasks
// through the QC engine until every image has labels_per_image valid
// judgments or no contributor can take more work.
SimResult run_simulation(const SimConfig& cfg, const qc::JobConfig& job, qc::JobKind kind);

} // namespace crowdscore::sim
