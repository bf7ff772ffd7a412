#include "crowdscore/qc.hpp"

#include <algorithm>
#include <cmath>

#include "crowdscore/metrics.hpp"

namespace crowdscore::qc {

void JobConfig::validate() const {
    if (!(min_test_accuracy > 0.0) || min_test_accuracy > 1.0)
        fail(Errc::configuration, "min_test_accuracy must be in (0,1]");
    if (min_task_seconds < 0.0) fail(Errc::configuration, "min_task_seconds must be >= 0");
    for (auto [v, name] : {std::pair{max_judgments_per_contributor, "max_judgments_per_contributor"},
                           {min_images_before_filter, "min_images_before_filter"},
                           {labels_per_image, "labels_per_image"},
                           {quiz_size, "quiz_size"},
                           {task_real_images, "task_real_images"},
                           {max_speed_violations, "max_speed_violations"}}) {
        if (v <= 0) fail(Errc::configuration, std::string(name) + " must be positive");
    }
    if (task_test_images < 0) fail(Errc::configuration, "task_test_images must be >= 0");
}

const char* status_name(Status s) {
    switch (s) {
        case Status::InQuiz: return "in_quiz";
        case Status::Active: return "active";
        case Status::Excluded: return "excluded";
        case Status::Capped: return "capped";
        case Status::Finished: return "finished";
    }
    return "?";
}

Status status_from_name(const std::string& s) {
    if (s == "in_quiz") return Status::InQuiz;
    if (s == "active") return Status::Active;
    if (s == "excluded") return Status::Excluded;
    if (s == "capped") return Status::Capped;
    if (s == "finished") return Status::Finished;
    fail(Errc::value, "unknown status token '" + s + "'");
}

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Accepted: return "accepted";
        case Verdict::QuizPassed: return "quiz_passed";
        case Verdict::QuizFailed: return "quiz_failed";
        case Verdict::SpeedRejected: return "speed_rejected";
        case Verdict::TrustExcluded: return "trust_excluded";
        case Verdict::CapReached: return "cap_reached";
    }
    return "?";
}

VisibleTask visible(const Task& t) {
    VisibleTask v;
    v.task_id = t.task_id;
    v.contributor_id = t.contributor_id;
    v.mode = t.mode;
    v.image_ids.reserve(t.slots.size());
    for (const auto& slot : t.slots) v.image_ids.push_back(slot.image_id);
    return v;
}

JobEngine::JobEngine(JobConfig cfg, JobKind kind, std::vector<GroundTruthImage> test_pool,
                     std::vector<std::string> work_images, std::uint64_t master_seed)
    : cfg_(cfg), kind_(kind), test_pool_(std::move(test_pool)), master_seed_(master_seed) {
    cfg_.validate();
    if (static_cast<int>(test_pool_.size()) < cfg_.quiz_size)
        fail(Errc::configuration, "test pool smaller than quiz_size");
    for (std::size_t i = 0; i < test_pool_.size(); ++i) {
        if (!test_index_.emplace(test_pool_[i].image_id, i).second)
            fail(Errc::configuration, "duplicate test image " + test_pool_[i].image_id);
    }
    images_.reserve(work_images.size());
    for (std::size_t i = 0; i < work_images.size(); ++i) {
        ImageEntry e;
        e.id = work_images[i];
        e.order = i;
        if (test_index_.count(e.id))
            fail(Errc::configuration, "image " + e.id + " is both test and work image");
        if (!image_index_.emplace(e.id, images_.size()).second)
            fail(Errc::configuration, "duplicate work image " + e.id);
        images_.push_back(std::move(e));
    }
}

std::string JobEngine::next_task_id() {
    char buf[16];
    std::snprintf(buf, sizeof buf, "t%06llu", static_cast<unsigned long long>(++task_serial_));
    return buf;
}

Task JobEngine::make_quiz_task(Session& s) {
    // sample quiz_size distinct test images, preferring unseen ones
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < test_pool_.size(); ++i)
        if (!s.tests_seen.count(test_pool_[i].image_id)) candidates.push_back(i);
    if (static_cast<int>(candidates.size()) < cfg_.quiz_size) {
        candidates.resize(test_pool_.size());
        for (std::size_t i = 0; i < test_pool_.size(); ++i) candidates[i] = i;
    }
    Task t;
    t.task_id = next_task_id();
    t.contributor_id = s.st.contributor_id;
    t.mode = Mode::Quiz;
    for (int k = 0; k < cfg_.quiz_size; ++k) {
        std::size_t j = static_cast<std::size_t>(
            s.rng.uniform_int(k, static_cast<std::int64_t>(candidates.size()) - 1));
        std::swap(candidates[k], candidates[j]);
        const auto& img = test_pool_[candidates[k]];
        t.slots.push_back({img.image_id, true});
        s.tests_seen.insert(img.image_id);
    }
    return t;
}

Task JobEngine::make_work_task(Session& s) {
    int remaining = cfg_.max_judgments_per_contributor - s.st.judgments_submitted;
    int n_test = std::min(cfg_.task_test_images, std::max(0, remaining - 1));
    int n_real = std::min(cfg_.task_real_images, remaining - n_test);

    // fewest-labels-first among images still needing labels from someone else
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < images_.size(); ++i) {
        const ImageEntry& e = images_[i];
        if (e.valid_count + e.claims >= cfg_.labels_per_image) continue;
        if (e.judged_by.count(s.st.contributor_id)) continue;
        eligible.push_back(i);
    }
    std::stable_sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
        int ca = images_[a].valid_count + images_[a].claims;
        int cb = images_[b].valid_count + images_[b].claims;
        if (ca != cb) return ca < cb;
        return images_[a].order < images_[b].order;
    });
    if (eligible.empty()) fail(Errc::no_work, "no images need labels from this contributor");
    if (static_cast<int>(eligible.size()) < n_real)
        n_real = static_cast<int>(eligible.size()); // short tail task

    Task t;
    t.task_id = next_task_id();
    t.contributor_id = s.st.contributor_id;
    t.mode = Mode::Work;
    for (int k = 0; k < n_real; ++k) {
        ImageEntry& e = images_[eligible[static_cast<std::size_t>(k)]];
        e.claims += 1;
        t.slots.push_back({e.id, false});
    }
    for (int k = 0; k < n_test; ++k) {
        // sample an unseen test question; fall back to reuse when exhausted
        std::vector<std::size_t> cand;
        for (std::size_t i = 0; i < test_pool_.size(); ++i)
            if (!s.tests_seen.count(test_pool_[i].image_id)) cand.push_back(i);
        std::size_t pick;
        if (cand.empty()) {
            pick = static_cast<std::size_t>(
                s.rng.uniform_int(0, static_cast<std::int64_t>(test_pool_.size()) - 1));
        } else {
            pick = cand[static_cast<std::size_t>(
                s.rng.uniform_int(0, static_cast<std::int64_t>(cand.size()) - 1))];
        }
        const auto& img = test_pool_[pick];
        s.tests_seen.insert(img.image_id);
        // hide the test question at a uniformly random slot position
        std::size_t pos = static_cast<std::size_t>(
            s.rng.uniform_int(0, static_cast<std::int64_t>(t.slots.size())));
        t.slots.insert(t.slots.begin() + static_cast<std::ptrdiff_t>(pos), {img.image_id, true});
    }
    return t;
}

std::pair<ContributorState, VisibleTask> JobEngine::start_session(const std::string& id) {
    if (id.empty()) fail(Errc::value, "empty contributor id");
    if (sessions_.count(id)) fail(Errc::already_registered, "contributor " + id + " already registered");
    Session s;
    s.st.contributor_id = id;
    s.rng = Rng(master_seed_).stream(id);
    auto [it, ok] = sessions_.emplace(id, std::move(s));
    (void)ok;
    Task quiz = make_quiz_task(it->second);
    open_tasks_[quiz.task_id] = id;
    it->second.pending = quiz;
    return {it->second.st, visible(quiz)};
}

VisibleTask JobEngine::current_task(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(Errc::not_found, "unknown contributor " + id);
    Session& s = it->second;
    if (s.pending) return visible(*s.pending);
    switch (s.st.status) {
        case Status::InQuiz: {
            Task quiz = make_quiz_task(s);
            open_tasks_[quiz.task_id] = id;
            s.pending = quiz;
            return visible(quiz);
        }
        case Status::Active: {
            Task t = make_work_task(s); // may raise no_work
            open_tasks_[t.task_id] = id;
            s.pending = t;
            return visible(t);
        }
        default:
            fail(Errc::not_eligible,
                 "contributor " + id + " is " + status_name(s.st.status));
    }
}

bool JobEngine::grade(const Answer& answer, const GroundTruthImage& truth) const {
    if (const auto* label = std::get_if<ClassLabel>(&answer)) {
        return merge_classes(*label, truth.true_label.scheme()) == truth.true_label;
    }
    const auto& ann = std::get<NucleiAnnotation>(answer);
    auto pi = agg::pindex(ann.positive_count(), ann.negative_count());
    ClassLabel derived = pi ? classify_fraction(pi->value, ClassBins::defaults())
                            : ClassLabel(0, Scheme::FourClass);
    return merge_classes(derived, truth.true_label.scheme()) == truth.true_label;
}

void JobEngine::append_record(LogRecord rec) {
    log_.push_back(rec);
    if (!rec.is_test && rec.mode == Mode::Work && rec.valid)
        live_rows_[rec.contributor_id].push_back(log_.size() - 1);
    if (sink_) sink_(log_.back());
}

void JobEngine::release_claims(const Task& t) {
    if (t.mode != Mode::Work) return;
    for (const auto& slot : t.slots) {
        if (slot.is_test) continue;
        images_[image_index_.at(slot.image_id)].claims -= 1;
    }
}

void JobEngine::exclude(Session& s) {
    s.st.status = Status::Excluded;
    invalidate_contributor(s.st.contributor_id);
}

std::pair<ContributorState, Verdict> JobEngine::submit_task(const std::string& task_id,
                                                            const std::vector<Answer>& answers,
                                                            double elapsed_seconds) {
    auto open = open_tasks_.find(task_id);
    if (open == open_tasks_.end()) fail(Errc::stale_task, "task " + task_id + " is not open");
    Session& s = sessions_.at(open->second);
    const Task& task = *s.pending;

    if (answers.size() != task.slots.size())
        fail(Errc::malformed_submission,
             "expected " + std::to_string(task.slots.size()) + " answers, got " +
                 std::to_string(answers.size()));
    if (!(elapsed_seconds > 0.0))
        fail(Errc::malformed_submission, "elapsed_seconds must be positive");
    for (const Answer& a : answers) {
        if (kind_ == JobKind::ImageLabeling) {
            const auto* label = std::get_if<ClassLabel>(&a);
            if (!label) fail(Errc::malformed_submission, "label job expects class-label answers");
            if (label->scheme() != Scheme::FourClass)
                fail(Errc::malformed_submission, "crowd answers must use the 4-class scheme");
        } else {
            const auto* ann = std::get_if<NucleiAnnotation>(&a);
            if (!ann) fail(Errc::malformed_submission, "nuclei job expects dot annotations");
            ann->validate();
        }
    }

    // Speed floor: the whole task is rejected and nothing is recorded.
    if (elapsed_seconds < cfg_.min_task_seconds) {
        s.st.speed_violations += 1;
        release_claims(task);
        open_tasks_.erase(open);
        s.pending.reset();
        if (s.st.speed_violations >= cfg_.max_speed_violations &&
            s.st.status != Status::Excluded) {
            exclude(s);
        }
        return {s.st, Verdict::SpeedRejected};
    }

    s.st.cumulative_seconds += elapsed_seconds;
    s.st.slots_seen += static_cast<int>(task.slots.size());
    std::int64_t stamp = cfg_.epoch_utc + static_cast<std::int64_t>(s.st.cumulative_seconds);

    // Test answers grade first so recorded judgments carry the updated trust.
    for (std::size_t i = 0; i < task.slots.size(); ++i) {
        if (!task.slots[i].is_test) continue;
        s.st.test_seen += 1;
        if (grade(answers[i], test_pool_[test_index_.at(task.slots[i].image_id)]))
            s.st.test_correct += 1;
    }
    double trust = s.st.trust();

    for (std::size_t i = 0; i < task.slots.size(); ++i) {
        LogRecord rec;
        rec.image_id = task.slots[i].image_id;
        rec.contributor_id = s.st.contributor_id;
        rec.payload = answers[i];
        rec.elapsed_seconds = elapsed_seconds;
        rec.mode = task.mode;
        rec.is_test = task.slots[i].is_test;
        rec.timestamp_utc = stamp;
        rec.valid = true;
        rec.trust_at_submission = trust;
        append_record(std::move(rec));
    }

    Verdict verdict = Verdict::Accepted;
    if (task.mode == Mode::Quiz) {
        if (trust >= cfg_.min_test_accuracy) {
            s.st.status = Status::Active;
            s.st.passed_quiz = true;
            verdict = Verdict::QuizPassed;
        } else {
            s.st.status = Status::Excluded;
            verdict = Verdict::QuizFailed;
        }
    } else {
        int slots = static_cast<int>(task.slots.size());
        s.st.work_images_reviewed += slots;
        s.st.judgments_submitted += slots;
        for (const auto& slot : task.slots) {
            if (slot.is_test) continue;
            ImageEntry& e = images_[image_index_.at(slot.image_id)];
            e.claims -= 1;
            e.valid_count += 1;
            e.judged_by.insert(s.st.contributor_id);
            s.st.images_labeled += 1;
        }
        // gates in order: trust filter, then the judgment cap
        if (s.st.work_images_reviewed >= cfg_.min_images_before_filter &&
            trust < cfg_.min_test_accuracy) {
            open_tasks_.erase(open);
            s.pending.reset();
            exclude(s);
            return {s.st, Verdict::TrustExcluded};
        }
        if (s.st.judgments_submitted >= cfg_.max_judgments_per_contributor) {
            s.st.status = Status::Capped;
            verdict = Verdict::CapReached;
        }
    }

    open_tasks_.erase(open);
    s.pending.reset();
    return {s.st, verdict};
}

void JobEngine::invalidate_contributor(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(Errc::not_found, "unknown contributor " + id);
    auto live = live_rows_.find(id);
    if (live == live_rows_.end()) return;
    std::vector<std::size_t> rows = std::move(live->second);
    live_rows_.erase(live);
    for (std::size_t idx : rows) {
        LogRecord tombstone = log_[idx];
        tombstone.valid = false;
        ImageEntry& e = images_[image_index_.at(tombstone.image_id)];
        e.valid_count -= 1; // image re-enters the queue when below labels_per_image
        it->second.st.images_labeled -= 1;
        log_.push_back(tombstone);
        if (sink_) sink_(log_.back());
    }
}

const ContributorState& JobEngine::state(const std::string& id) const {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(Errc::not_found, "unknown contributor " + id);
    return it->second.st;
}

const std::string& JobEngine::task_owner(const std::string& task_id) const {
    auto it = open_tasks_.find(task_id);
    if (it == open_tasks_.end()) fail(Errc::stale_task, "task " + task_id + " is not open");
    return it->second;
}

std::vector<ContributorState> JobEngine::states() const {
    std::vector<ContributorState> out;
    out.reserve(sessions_.size());
    for (const auto& [id, s] : sessions_) out.push_back(s.st);
    return out;
}

bool JobEngine::job_complete() const {
    for (const auto& e : images_)
        if (e.valid_count < cfg_.labels_per_image) return false;
    return true;
}

void JobEngine::finish_active() {
    for (auto& [id, s] : sessions_)
        if (s.st.status == Status::Active && !s.pending) s.st.status = Status::Finished;
}

Progress JobEngine::progress() const {
    Progress p;
    p.images_total = static_cast<int>(images_.size());
    for (const auto& e : images_) {
        if (e.valid_count >= cfg_.labels_per_image) p.images_complete += 1;
        p.valid_judgments += e.valid_count;
    }
    p.contributors = static_cast<int>(sessions_.size());
    for (const auto& [id, s] : sessions_) p.by_status[status_name(s.st.status)] += 1;
    p.complete = p.images_complete == p.images_total;
    return p;
}

std::map<std::string, std::vector<agg::Vote>> JobEngine::valid_votes() const {
    std::map<std::string, std::vector<agg::Vote>> out;
    for (const auto& [id, rows] : live_rows_) {
        for (std::size_t idx : rows) {
            const LogRecord& rec = log_[idx];
            if (const auto* label = std::get_if<ClassLabel>(&rec.payload)) {
                out[rec.image_id].push_back(
                    {rec.contributor_id, *label, rec.trust_at_submission});
            }
        }
    }
    return out;
}

std::map<std::string, std::vector<NucleiAnnotation>> JobEngine::valid_annotations() const {
    std::map<std::string, std::vector<NucleiAnnotation>> out;
    for (const auto& [id, rows] : live_rows_) {
        for (std::size_t idx : rows) {
            const LogRecord& rec = log_[idx];
            if (const auto* ann = std::get_if<NucleiAnnotation>(&rec.payload))
                out[rec.image_id].push_back(*ann);
        }
    }
    return out;
}

namespace {

double safe_mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

} // namespace

ContributorStatsTable contributor_report(const std::vector<LogRecord>& log,
                                         const std::vector<ContributorState>& states) {
    (void)log; // states carry the aggregate numbers; the log backs the judgment counts
    ContributorStatsTable t;
    std::vector<double> trusted_acc, trusted_sec, untrusted_acc, untrusted_sec;
    std::vector<double> trust_vals, volume_vals;
    for (const auto& st : states) {
        bool trusted = st.status == Status::Active || st.status == Status::Capped ||
                       st.status == Status::Finished;
        bool untrusted = st.status == Status::Excluded;
        if (st.test_seen > 0) {
            if (trusted) trusted_acc.push_back(st.trust());
            if (untrusted) untrusted_acc.push_back(st.trust());
        }
        if (st.slots_seen > 0) {
            double per_image = st.cumulative_seconds / st.slots_seen;
            if (trusted) trusted_sec.push_back(per_image);
            if (untrusted) untrusted_sec.push_back(per_image);
        }
        if (trusted) t.trusted.contributors += 1;
        if (untrusted) t.untrusted.contributors += 1;
        if (st.passed_quiz) {
            t.quiz_passed += 1;
            if (trusted) t.work_passed += 1;
            if (untrusted) t.work_failed += 1;
            trust_vals.push_back(st.trust());
            volume_vals.push_back(st.images_labeled);
        } else if (st.status == Status::Excluded) {
            t.quiz_failed += 1;
        }
    }
    t.trusted.mean_test_accuracy = safe_mean(trusted_acc);
    t.trusted.mean_seconds_per_image = safe_mean(trusted_sec);
    t.untrusted.mean_test_accuracy = safe_mean(untrusted_acc);
    t.untrusted.mean_seconds_per_image = safe_mean(untrusted_sec);

    t.trust_volume_n = static_cast<int>(trust_vals.size());
    if (t.trust_volume_n >= 3) {
        try {
            t.trust_volume_rho = metrics::spearman(std::span<const double>(trust_vals),
                                                   std::span<const double>(volume_vals));
            t.trust_volume_p =
                metrics::spearman_p_value(t.trust_volume_rho, trust_vals.size());
        } catch (const Error&) {
            t.trust_volume_rho = std::nan("");
            t.trust_volume_p = std::nan("");
        }
    } else {
        t.trust_volume_rho = std::nan("");
        t.trust_volume_p = std::nan("");
    }
    return t;
}

Answer parse_script_answer(const std::string& token, JobKind kind) {
    if (kind == JobKind::ImageLabeling) {
        if (token.size() != 1) fail(Errc::value, "bad label token '" + token + "'");
        return ClassLabel::from_letter(token[0]);
    }
    auto colon = token.find(':');
    if (colon == std::string::npos)
        fail(Errc::value, "nuclei answer token must be 'P:N', got '" + token + "'");
    int pos = std::stoi(token.substr(0, colon));
    int neg = std::stoi(token.substr(colon + 1));
    if (pos < 0 || neg < 0) fail(Errc::value, "negative nucleus count in '" + token + "'");
    NucleiAnnotation ann;
    ann.has_nuclei = pos + neg > 0;
    for (int i = 0; i < pos; ++i) ann.positive.emplace_back(i, 0);
    for (int i = 0; i < neg; ++i) ann.negative.emplace_back(i, 1);
    return ann;
}

std::vector<ReplayStep> replay(JobEngine& engine, const std::vector<ScriptRow>& rows) {
    // group rows by (contributor, task_seq); tasks run in first-row order
    std::vector<std::pair<std::string, int>> order;
    std::map<std::pair<std::string, int>, std::vector<const ScriptRow*>> groups;
    for (const auto& row : rows) {
        auto key = std::make_pair(row.contributor_id, row.task_seq);
        auto [it, fresh] = groups.emplace(key, std::vector<const ScriptRow*>{});
        if (fresh) order.push_back(key);
        it->second.push_back(&row);
    }

    std::vector<ReplayStep> steps;
    std::set<std::string> registered;
    for (const auto& key : order) {
        const auto& [contributor, task_seq] = key;
        if (!registered.count(contributor)) {
            engine.start_session(contributor);
            registered.insert(contributor);
        }
        VisibleTask task = engine.current_task(contributor);

        auto group = groups.at(key);
        std::sort(group.begin(), group.end(),
                  [](const ScriptRow* a, const ScriptRow* b) { return a->slot_seq < b->slot_seq; });
        std::vector<Answer> answers;
        answers.reserve(group.size());
        for (const ScriptRow* row : group)
            answers.push_back(parse_script_answer(row->answer, engine.kind()));

        auto [st, verdict] = engine.submit_task(task.task_id, answers,
                                                group.front()->elapsed_seconds);
        steps.push_back({contributor, task_seq, verdict, st.status});
    }
    return steps;
}

} // namespace crowdscore::qc
