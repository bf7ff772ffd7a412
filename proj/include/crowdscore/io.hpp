#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "crowdscore/aggregate.hpp"
#include "crowdscore/metrics.hpp"
#include "crowdscore/qc.hpp"
#include "crowdscore/records.hpp"
#include "crowdscore/sensitivity.hpp"
#include "crowdscore/sim.hpp"

namespace crowdscore::io {

// RFC 3339 UTC timestamps at second precision.
std::string format_rfc3339(std::int64_t epoch_seconds);
std::int64_t parse_rfc3339(const std::string& s);

// ---- label judgment log (CSV) ----
// header: image_id,contributor_id,label,elapsed_seconds,mode,is_test,
//         timestamp,valid,trust_at_submission
extern const char* const kLabelLogHeader;

std::string label_log_row(const qc::LogRecord& rec);
void write_label_log(const std::filesystem::path& path, const std::vector<qc::LogRecord>& log);
std::vector<qc::LogRecord> ingest_label_judgments(const std::filesystem::path& path);

// ---- nuclei judgment log (JSONL) ----
// object keys: image_id, contributor_id, has_nuclei, positive, negative,
// elapsed_seconds, mode, is_test, timestamp (+ valid, trust_at_submission
// on engine-written logs; plain annotation files may omit them)
std::string nuclei_log_line(const qc::LogRecord& rec);
void write_nuclei_log(const std::filesystem::path& path, const std::vector<qc::LogRecord>& log);
std::vector<qc::LogRecord> ingest_nuclei_judgments(const std::filesystem::path& path);

// Collapse an append-only log: the last row per (image, contributor) wins.
std::vector<qc::LogRecord> effective_records(const std::vector<qc::LogRecord>& log);

// ---- ground truth (CSV) ----
// interchange schema: image_id,patient_id,label (3-class A/B/C)
void write_truth_csv(const std::filesystem::path& path,
                     const std::vector<GroundTruthImage>& truth);
std::vector<GroundTruthImage> read_truth_csv(const std::filesystem::path& path);

// simulation detail schema: image_id,patient_id,label,pindex,nuclei_total
// (4-class label plus the generative positivity data)
void write_sim_truth_csv(const std::filesystem::path& path,
                         const std::vector<GroundTruthImage>& truth);
std::vector<GroundTruthImage> read_sim_truth_csv(const std::filesystem::path& path);

// ---- contributor states (CSV) ----
void write_states_csv(const std::filesystem::path& path,
                      const std::vector<qc::ContributorState>& states);
std::vector<qc::ContributorState> read_states_csv(const std::filesystem::path& path);

// ---- aggregated labels (CSV: image_id,label / patient_id,label) ----
void write_labels_csv(const std::filesystem::path& path, const std::string& id_column,
                      const std::vector<std::pair<std::string, ClassLabel>>& rows);
std::vector<std::pair<std::string, ClassLabel>> read_labels_csv(
    const std::filesystem::path& path, Scheme scheme);

// ---- ratings matrix (CSV: item_id,rater_id,label) ----
metrics::RatingsMatrix read_ratings_csv(const std::filesystem::path& path, Scheme scheme);

// ---- sensitivity label grid (CSV: image_id,slot,label[,trust]) ----
sens::LabelGrid read_grid_csv(const std::filesystem::path& path,
                              std::vector<std::string>* image_ids = nullptr);

// ---- scripted-answer replay files ----
// CSV columns: contributor_id,task_seq,slot_seq,answer,elapsed_seconds
std::vector<qc::ScriptRow> read_script_csv(const std::filesystem::path& path);
void write_script_csv(const std::filesystem::path& path,
                      const std::vector<qc::ScriptRow>& rows);

// ---- sensitivity summary table (CSV) ----
void write_sensitivity_csv(const std::filesystem::path& path,
                           const std::vector<sens::SizeSummary>& summaries);

// ---- key = value config file with [section] headers ----
class ConfigFile {
public:
    struct Section {
        std::string name;
        std::map<std::string, std::string> entries;
    };

    static ConfigFile parse_file(const std::filesystem::path& path);
    static ConfigFile parse(std::istream& in, const std::string& origin);

    bool has_section(const std::string& name) const;
    const Section* find(const std::string& name) const;
    std::vector<const Section*> matching(const std::string& prefix) const;

    static std::string get(const Section& s, const std::string& key,
                           const std::string& fallback);
    static double get_double(const Section& s, const std::string& key, double fallback);
    static int get_int(const Section& s, const std::string& key, int fallback);
    static bool get_bool(const Section& s, const std::string& key, bool fallback);

private:
    std::vector<Section> sections_;
};

qc::JobConfig job_config_from(const ConfigFile& cfg);
agg::ClassWeights weights_from(const ConfigFile& cfg);
sim::SimConfig sim_config_from(const ConfigFile& cfg);

} // namespace crowdscore::io
