#include "crowdscore/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "crowdscore/io.hpp"

namespace crowdscore::app {

using nlohmann::json;

ClassLabel aggregate_image(const std::vector<agg::Vote>& votes, agg::Method method,
                           const agg::ClassWeights& weights) {
    return agg::aggregate(agg::tally(votes), method, weights);
}

namespace {

metrics::MetricReport safe_report(const std::vector<int>& crowd, const std::vector<int>& truth) {
    // Degenerate collections (constant labels, tiny sets) legitimately occur
    // on small runs; report what is computable and zero the rest.
    metrics::MetricReport rep;
    rep.percent_agreement = metrics::percent_agreement(crowd, truth);
    auto matrix = metrics::RatingsMatrix::from_columns({crowd, truth});
    try {
        rep.cohen_kappa_pairwise_mean = metrics::cohen_kappa(crowd, truth);
    } catch (const Error&) {
        rep.cohen_kappa_pairwise_mean = rep.percent_agreement == 1.0 ? 1.0 : 0.0;
    }
    try {
        rep.fleiss_kappa = metrics::fleiss_kappa(matrix);
    } catch (const Error&) {
        rep.fleiss_kappa = 0.0;
    }
    try {
        rep.spearman_rho_mean = metrics::spearman_rho_mean(matrix);
    } catch (const Error&) {
        rep.spearman_rho_mean = 0.0;
    }
    try {
        rep.icc = metrics::icc(matrix);
    } catch (const Error&) {
        rep.icc = 0.0;
    }
    return rep;
}

} // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    if (cfg.scheme == Scheme::FourClass)
        fail(Errc::domain, "comparison scheme cannot be finer than the 3-class truth");

    // ingest judgments and keep the currently-valid real-image ones
    std::vector<qc::LogRecord> raw = cfg.nuclei ? io::ingest_nuclei_judgments(cfg.judgments)
                                                : io::ingest_label_judgments(cfg.judgments);
    std::vector<qc::LogRecord> records = io::effective_records(raw);
    std::erase_if(records, [](const qc::LogRecord& r) {
        return !r.valid || r.is_test || r.mode != Mode::Work;
    });

    auto truth_rows = io::read_truth_csv(cfg.truth);
    std::map<std::string, const GroundTruthImage*> truth_of;
    for (const auto& img : truth_rows) truth_of[img.image_id] = &img;

    // reconciliation: every judged image must have truth
    std::map<std::string, std::vector<const qc::LogRecord*>> by_image;
    for (const auto& rec : records) by_image[rec.image_id].push_back(&rec);
    if (by_image.empty())
        fail(Errc::reconciliation, "no valid judgments found in " + cfg.judgments.string());
    std::vector<std::string> orphans;
    for (const auto& [image_id, rows] : by_image)
        if (!truth_of.count(image_id)) orphans.push_back(image_id);
    if (!orphans.empty()) {
        std::string list;
        for (std::size_t i = 0; i < orphans.size() && i < 10; ++i)
            list += (i ? ", " : "") + orphans[i];
        if (orphans.size() > 10) list += ", ...";
        fail(Errc::reconciliation,
             std::to_string(orphans.size()) + " judged images missing from truth: " + list);
    }
    if (!cfg.allow_partial) {
        std::size_t missing = truth_rows.size() - by_image.size();
        if (missing > 0)
            fail(Errc::reconciliation,
                 std::to_string(missing) +
                     " truth images have no judgments (pass --allow-partial to proceed)");
    }

    PipelineResult result;

    // per-image aggregation, merged to the comparison scheme
    std::vector<std::pair<std::string, ClassLabel>> image_rows;
    ClassBins scheme_bins = ClassBins::defaults(cfg.scheme);
    for (const auto& [image_id, rows] : by_image) {
        result.judgments_used += rows.size();
        ClassLabel merged(0, cfg.scheme);
        if (cfg.nuclei) {
            std::vector<NucleiAnnotation> anns;
            for (const auto* rec : rows) anns.push_back(std::get<NucleiAnnotation>(rec->payload));
            auto [pos, neg] = agg::nuclei_aggregate(anns);
            auto pi = agg::pindex(pos, neg);
            if (!pi) {
                result.no_nuclei_images.push_back(image_id);
                merged = ClassLabel(0, cfg.scheme);
            } else {
                merged = classify_fraction(pi->value, scheme_bins);
            }
        } else {
            std::vector<agg::Vote> votes;
            for (const auto* rec : rows)
                votes.push_back({rec->contributor_id, std::get<ClassLabel>(rec->payload),
                                 rec->trust_at_submission});
            merged = merge_classes(aggregate_image(votes, cfg.method, cfg.weights), cfg.scheme);
        }
        image_rows.emplace_back(image_id, merged);
    }
    std::sort(image_rows.begin(), image_rows.end());
    result.images = image_rows.size();

    // image-level metrics against merged truth
    std::vector<int> crowd_codes, truth_codes;
    for (const auto& [image_id, label] : image_rows) {
        crowd_codes.push_back(label.value());
        truth_codes.push_back(merge_classes(truth_of.at(image_id)->true_label, cfg.scheme).value());
    }
    result.image_metrics = safe_report(crowd_codes, truth_codes);

    // patient rollup: median of the patient's image labels, both sides
    std::map<std::string, std::vector<ClassLabel>> crowd_by_patient, truth_by_patient;
    for (const auto& [image_id, label] : image_rows) {
        const auto& patient = truth_of.at(image_id)->patient_id;
        crowd_by_patient[patient].push_back(label);
        truth_by_patient[patient].push_back(
            merge_classes(truth_of.at(image_id)->true_label, cfg.scheme));
    }
    std::vector<std::pair<std::string, ClassLabel>> patient_rows;
    std::vector<int> crowd_pat, truth_pat;
    for (const auto& [patient, labels] : crowd_by_patient) {
        ClassLabel crowd_label = agg::patient_label(labels);
        ClassLabel truth_label = agg::patient_label(truth_by_patient.at(patient));
        patient_rows.emplace_back(patient, crowd_label);
        crowd_pat.push_back(crowd_label.value());
        truth_pat.push_back(truth_label.value());
    }
    result.patients = patient_rows.size();
    result.patient_metrics = safe_report(crowd_pat, truth_pat);

    std::filesystem::create_directories(cfg.out_dir);
    result.images_csv = cfg.out_dir / "images.csv";
    result.patients_csv = cfg.out_dir / "patients.csv";
    result.metrics_json = cfg.out_dir / "metrics.json";
    io::write_labels_csv(result.images_csv, "image_id", image_rows);
    io::write_labels_csv(result.patients_csv, "patient_id", patient_rows);
    {
        std::ofstream out(result.metrics_json, std::ios::binary);
        if (!out) fail(Errc::io, "cannot write " + result.metrics_json.string());
        out << metrics_json_text(result, cfg.method, cfg.scheme, cfg.nuclei) << '\n';
    }
    return result;
}

std::string metrics_json_text(const PipelineResult& r, agg::Method method, Scheme scheme,
                              bool nuclei) {
    auto level = [](std::size_t count, const metrics::MetricReport& m) {
        return json{{"count", count},
                    {"percent_agreement", m.percent_agreement},
                    {"cohen_kappa", m.cohen_kappa_pairwise_mean},
                    {"fleiss_kappa", m.fleiss_kappa},
                    {"spearman_rho", m.spearman_rho_mean},
                    {"icc", m.icc}};
    };
    json j{{"method", nuclei ? "nuclei" : agg::method_name(method)},
           {"scheme", scheme_name(scheme)},
           {"judgments_used", r.judgments_used},
           {"images", level(r.images, r.image_metrics)},
           {"patients", level(r.patients, r.patient_metrics)}};
    if (nuclei) j["no_nuclei_images"] = r.no_nuclei_images;
    return j.dump(2);
}

} // namespace crowdscore::app
