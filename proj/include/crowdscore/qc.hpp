#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "crowdscore/aggregate.hpp"
#include "crowdscore/labels.hpp"
#include "crowdscore/records.hpp"
#include "crowdscore/rng.hpp"

namespace crowdscore::qc {

// The five gating parameters of the job design plus the task shape.
struct JobConfig {
    double min_test_accuracy = 0.60;      // trust threshold on test questions
    double min_task_seconds = 10.0;       // floor on task completion time
    int max_judgments_per_contributor = 500;
    int min_images_before_filter = 20;    // work images before the trust gate applies
    int labels_per_image = 3;
    int quiz_size = 5;
    int task_real_images = 4;
    int task_test_images = 1;
    int max_speed_violations = 3;         // speed rejections before exclusion
    std::int64_t epoch_utc = 1451606400;  // logical-clock origin for log timestamps

    void validate() const;
};

enum class Status { InQuiz, Active, Excluded, Capped, Finished };
enum class Verdict { Accepted, QuizPassed, QuizFailed, SpeedRejected, TrustExcluded, CapReached };
enum class JobKind { ImageLabeling, NucleiLabeling };

const char* status_name(Status s);
Status status_from_name(const std::string& s);
const char* verdict_name(Verdict v);

struct ContributorState {
    std::string contributor_id;
    Status status = Status::InQuiz;
    int test_seen = 0;
    int test_correct = 0;
    int work_images_reviewed = 0;   // all slots of accepted work tasks
    int judgments_submitted = 0;    // all slots of accepted work tasks (the 500 cap)
    int speed_violations = 0;
    bool passed_quiz = false;
    // report bookkeeping
    double cumulative_seconds = 0.0; // accepted tasks, quiz included
    int slots_seen = 0;              // slots across accepted tasks, quiz included
    int images_labeled = 0;          // currently-valid real-image judgments

    double trust() const {
        return test_seen > 0 ? static_cast<double>(test_correct) / test_seen : 0.0;
    }
};

struct TaskSlot {
    std::string image_id;
    bool is_test = false;
};

struct Task {
    std::string task_id;
    std::string contributor_id;
    Mode mode = Mode::Quiz;
    std::vector<TaskSlot> slots;
};

// What the contributor sees: slots are structurally identical whether or
// not they are test questions.
struct VisibleTask {
    std::string task_id;
    std::string contributor_id;
    Mode mode = Mode::Quiz;
    std::vector<std::string> image_ids;
};

VisibleTask visible(const Task& t);

// Flat judgment-log row. Rows are append-only; invalidation appends a copy
// with valid=false, and the latest row per (image, contributor) wins.
struct LogRecord {
    std::string image_id;
    std::string contributor_id;
    Answer payload;
    double elapsed_seconds = 0.0; // duration of the enclosing task
    Mode mode = Mode::Work;
    bool is_test = false;
    std::int64_t timestamp_utc = 0;
    bool valid = true;
    double trust_at_submission = 0.0;
};

struct Progress {
    int images_total = 0;
    int images_complete = 0;
    int valid_judgments = 0;
    int contributors = 0;
    std::map<std::string, int> by_status;
    bool complete = false;
};

// Quality-control state machine for one crowdsourcing job: quiz then work
// tasks with hidden test questions, trust gating, the judgment cap, and
// judgment-log hygiene after exclusions. Deterministic given (config, test
// pool, image queue, master_seed) and the submission sequence.
class JobEngine {
public:
    JobEngine(JobConfig cfg, JobKind kind, std::vector<GroundTruthImage> test_pool,
              std::vector<std::string> work_images, std::uint64_t master_seed);

    // Registers a contributor and issues the quiz task.
    std::pair<ContributorState, VisibleTask> start_session(const std::string& contributor_id);

    // Returns the pending task, issuing a fresh one when none is open.
    // Raises not_eligible for excluded/capped contributors and no_work when
    // the queue has nothing left for this contributor.
    VisibleTask current_task(const std::string& contributor_id);

    // Grades test slots, applies the speed floor and the trust/cap gates,
    // and appends accepted judgments to the log.
    std::pair<ContributorState, Verdict> submit_task(const std::string& task_id,
                                                     const std::vector<Answer>& answers,
                                                     double elapsed_seconds);

    // Supersedes all of the contributor's valid work-mode real-image
    // judgments with valid=false rows and re-queues the images. Idempotent.
    void invalidate_contributor(const std::string& contributor_id);

    const ContributorState& state(const std::string& contributor_id) const;
    std::vector<ContributorState> states() const; // sorted by contributor_id
    const std::vector<LogRecord>& log() const { return log_; }

    // Contributor holding an open task; stale_task when not open.
    const std::string& task_owner(const std::string& task_id) const;

    bool job_complete() const;
    // Marks remaining Active contributors Finished once the job is wrapped up.
    void finish_active();
    Progress progress() const;

    const JobConfig& config() const { return cfg_; }
    JobKind kind() const { return kind_; }

    // Currently-valid real-image votes per image (label jobs).
    std::map<std::string, std::vector<agg::Vote>> valid_votes() const;
    // Currently-valid real-image annotations per image (nuclei jobs).
    std::map<std::string, std::vector<NucleiAnnotation>> valid_annotations() const;

    // Invoked once per appended log row (e.g. a file tail in the service).
    void set_record_sink(std::function<void(const LogRecord&)> sink) { sink_ = std::move(sink); }

private:
    struct ImageEntry {
        std::string id;
        std::size_t order = 0;
        int valid_count = 0;
        int claims = 0;
        std::set<std::string> judged_by;
    };

    struct Session {
        ContributorState st;
        std::optional<Task> pending;
        std::set<std::string> tests_seen;
        Rng rng{0};
        int task_counter = 0;
    };

    Task make_quiz_task(Session& s);
    Task make_work_task(Session& s);
    std::string next_task_id();
    bool grade(const Answer& answer, const GroundTruthImage& truth) const;
    void append_record(LogRecord rec);
    void release_claims(const Task& t);
    void exclude(Session& s);

    JobConfig cfg_;
    JobKind kind_;
    std::vector<GroundTruthImage> test_pool_;
    std::map<std::string, std::size_t> test_index_;
    std::vector<ImageEntry> images_;
    std::map<std::string, std::size_t> image_index_;
    std::map<std::string, Session> sessions_;
    std::map<std::string, std::string> open_tasks_; // task_id -> contributor_id
    std::vector<LogRecord> log_;
    // per contributor: indices of their currently-valid real-image rows
    std::map<std::string, std::vector<std::size_t>> live_rows_;
    std::function<void(const LogRecord&)> sink_;
    std::uint64_t master_seed_;
    std::uint64_t task_serial_ = 0;
};

// Table 2 style contributor performance summary.
struct PopulationStats {
    int contributors = 0;
    double mean_test_accuracy = 0.0;
    double mean_seconds_per_image = 0.0;
};

struct ContributorStatsTable {
    PopulationStats trusted;   // final status Active, Capped or Finished
    PopulationStats untrusted; // final status Excluded
    int quiz_passed = 0;
    int quiz_failed = 0;
    int work_passed = 0;
    int work_failed = 0;
    double trust_volume_rho = 0.0; // Spearman: trust vs images labeled
    double trust_volume_p = 1.0;
    int trust_volume_n = 0;
};

ContributorStatsTable contributor_report(const std::vector<LogRecord>& log,
                                         const std::vector<ContributorState>& states);

// Scripted-answer replay: CSV columns
// contributor_id,task_seq,slot_seq,answer,elapsed_seconds.
struct ScriptRow {
    std::string contributor_id;
    int task_seq = 0;
    int slot_seq = 0;
    std::string answer;
    double elapsed_seconds = 0.0;
};

struct ReplayStep {
    std::string contributor_id;
    int task_seq = 0;
    Verdict verdict = Verdict::Accepted;
    Status status = Status::InQuiz;
};

// Parse an answer token: a class letter for label jobs, or "P:N" nucleus
// counts for nuclei jobs (dots synthesized deterministically).
Answer parse_script_answer(const std::string& token, JobKind kind);

// Drives the engine with scripted answers, registering contributors on
// first appearance. Tasks execute in first-row order.
std::vector<ReplayStep> replay(JobEngine& engine, const std::vector<ScriptRow>& rows);

} // namespace crowdscore::qc
