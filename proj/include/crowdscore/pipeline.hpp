#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crowdscore/aggregate.hpp"
#include "crowdscore/metrics.hpp"
#include "crowdscore/qc.hpp"

namespace crowdscore::app {

struct PipelineConfig {
    std::filesystem::path judgments; // label CSV, or nuclei JSONL when nuclei=true
    std::filesystem::path truth;     // 3-class ground truth CSV
    std::filesystem::path out_dir;
    bool nuclei = false;
    agg::Method method = agg::Method::CV;
    agg::ClassWeights weights = agg::ClassWeights::defaults();
    Scheme scheme = Scheme::ThreeClass; // comparison scheme
    bool allow_partial = false;         // tolerate truth rows without judgments
};

struct PipelineResult {
    std::size_t judgments_used = 0;
    std::size_t images = 0;
    std::size_t patients = 0;
    metrics::MetricReport image_metrics;
    metrics::MetricReport patient_metrics;
    std::vector<std::string> no_nuclei_images; // flagged, classed A
    std::filesystem::path images_csv;
    std::filesystem::path patients_csv;
    std::filesystem::path metrics_json;
};

// ingest -> aggregate per image -> merge schemes -> patient rollup ->
// metrics against truth; writes images.csv, patients.csv and metrics.json
// under out_dir.
PipelineResult run_pipeline(const PipelineConfig& cfg);

// Aggregate one image's votes with the configured method.
ClassLabel aggregate_image(const std::vector<agg::Vote>& votes, agg::Method method,
                           const agg::ClassWeights& weights);

std::string metrics_json_text(const PipelineResult& r, agg::Method method, Scheme scheme,
                              bool nuclei);

} // namespace crowdscore::app
